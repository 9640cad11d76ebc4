#pragma once

#include <map>
#include <utility>
#include <vector>

#include "timepar/trajectory.hpp"

namespace timepar {

struct CoarseConfig {
    int coarsening = 2;       // time-step ratio between levels
    long prediction_iters = 20;  // coarse training iterations H
    LrSchedule coarse_lr{0.1, 0.0};
};

inline ModelSpec coarsen_spec(const ModelSpec& fine, int c) {
    require(c >= 1, "coarsen_spec: coarsening factor must be >= 1");
    require(fine.n_layers % c == 0, "coarsen_spec: coarsening must divide layer count");
    ModelSpec coarse = fine;
    coarse.n_layers = fine.n_layers / c;  // step becomes c * fine step
    return coarse;
}

// Piecewise-linear interpolation in time of the coarse layer blocks onto the
// fine grid, clamped at the last coarse node; opening and head copied verbatim.
inline Controls prolong_controls(const Controls& coarse, const ModelSpec& fine_spec, int c) {
    require(c >= 1, "prolong_controls: coarsening factor must be >= 1");
    const int Tc = int(coarse.layers.size());
    require(Tc * c == fine_spec.n_layers, "prolong_controls: level size mismatch");
    Controls fine = coarse;
    fine.layers.assign(std::size_t(fine_spec.n_layers), LayerBlock::zeros(fine_spec));
    for (int j = 0; j < fine_spec.n_layers; ++j) {
        const int lo = j / c;
        const double w = double(j % c) / double(c);
        LayerBlock blk = coarse.layers[std::size_t(lo)];
        if (w > 0.0 && lo + 1 < Tc) {
            blk.scale(1.0 - w);
            blk.axpy(w, coarse.layers[std::size_t(lo + 1)]);
        }
        fine.layers[std::size_t(j)] = std::move(blk);
    }
    return fine;
}

// Output of the global prediction phase: prolonged controls, predicted
// boundary states per split, and per-split (state, co-state) seed pairs
// harvested from the H coarse iterations.
struct Prediction {
    Controls fine_controls;
    std::map<int, Matrix> boundary_states;  // fine split layer -> batch x d
    std::map<int, std::vector<std::pair<Matrix, Matrix>>> seed_pairs;
    std::vector<int> boundary_batch;  // sample indices of the boundary states
    std::int64_t boundary_batch_id = -1;
};

// Runs the serial trainer on the coarse model for H iterations, recording the
// state and co-state at every split's coarse node each iteration.
inline Prediction global_predict(const ModelSpec& fine_spec, const Controls& init_fine_like,
                                 const CoarseConfig& cfg, const Dataset& ds,
                                 const std::vector<int>& splits, int batch_size,
                                 std::uint64_t seed) {
    const int c = cfg.coarsening;
    const ModelSpec coarse_spec = coarsen_spec(fine_spec, c);
    for (int s : splits) {
        require(s % c == 0, "global_predict: split not on a coarse node");
        require(s > 0 && s < fine_spec.n_layers, "global_predict: split not interior");
    }

    // Coarse initial controls: sample the fine blocks at the coarse nodes.
    Controls coarse_init = init_fine_like;
    coarse_init.layers.clear();
    for (int jc = 0; jc < coarse_spec.n_layers; ++jc)
        coarse_init.layers.push_back(init_fine_like.layers[std::size_t(jc * c)]);

    Prediction pred;
    for (int s : splits) pred.seed_pairs[s] = {};

    BatchStream stream(ds.size(), batch_size, seed);
    StateTrajectory last_traj;
    auto observer = [&](long, const StateTrajectory& traj, const CostateTrajectory& co) {
        for (int s : splits) {
            const int node = s / c;
            pred.seed_pairs[s].emplace_back(traj.at(node), co.at(node));
        }
        last_traj = traj;
    };
    SerialResult coarse = serial_train(coarse_spec, coarse_init, ds, stream,
                                       cfg.coarse_lr, cfg.prediction_iters, observer);

    if (cfg.prediction_iters == 0) {
        // No training happened; take boundary states from a plain coarse forward pass.
        const auto& idx = stream.at(0);
        Matrix X0 = opening_forward(coarse.controls.opening, ds.gather_inputs(idx));
        last_traj = forward_solve(coarse_spec, coarse.controls, X0, 0, coarse_spec.n_layers, 0);
        pred.boundary_batch = idx;
        pred.boundary_batch_id = 0;
    } else {
        const long last = cfg.prediction_iters - 1;
        pred.boundary_batch = stream.at(last);
        pred.boundary_batch_id = last;
    }
    for (int s : splits) pred.boundary_states[s] = last_traj.at(s / c);

    pred.fine_controls = prolong_controls(coarse.controls, fine_spec, c);
    return pred;
}

}  // namespace timepar
