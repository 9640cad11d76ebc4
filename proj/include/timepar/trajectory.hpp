#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "timepar/data.hpp"
#include "timepar/dynamics.hpp"

namespace timepar {

// States X_j for j in [j0, j1], batch x d each.
struct StateTrajectory {
    std::vector<Matrix> states;
    int j0 = 0;
    int j1 = 0;
    std::int64_t batch_id = -1;

    const Matrix& at(int j) const {
        require(j >= j0 && j <= j1, "StateTrajectory: layer index out of range");
        return states[std::size_t(j - j0)];
    }
    const Matrix& first() const { return states.front(); }
    const Matrix& last() const { return states.back(); }
};

struct CostateTrajectory {
    std::vector<Matrix> costates;
    int j0 = 0;
    int j1 = 0;
    std::int64_t batch_id = -1;

    const Matrix& at(int j) const {
        require(j >= j0 && j <= j1, "CostateTrajectory: layer index out of range");
        return costates[std::size_t(j - j0)];
    }
};

inline StateTrajectory forward_solve(const ModelSpec& spec, const Controls& controls,
                                     const Matrix& X_start, int j0, int j1,
                                     std::int64_t batch_id = -1) {
    require(0 <= j0 && j0 <= j1 && j1 <= spec.n_layers, "forward_solve: bad layer range");
    StateTrajectory traj;
    traj.j0 = j0;
    traj.j1 = j1;
    traj.batch_id = batch_id;
    traj.states.reserve(std::size_t(j1 - j0 + 1));
    traj.states.push_back(X_start);
    for (int j = j0; j < j1; ++j)
        traj.states.push_back(layer_forward(spec, traj.states.back(), controls.layers[std::size_t(j)], j));
    return traj;
}

inline CostateTrajectory backward_solve(const ModelSpec& spec, const Controls& controls,
                                        const StateTrajectory& states, const Matrix& P_end,
                                        int j0, int j1) {
    require(0 <= j0 && j0 <= j1 && j1 <= spec.n_layers, "backward_solve: bad layer range");
    require(states.j0 <= j0 && states.j1 >= j1, "backward_solve: states do not cover range");
    CostateTrajectory co;
    co.j0 = j0;
    co.j1 = j1;
    co.batch_id = states.batch_id;
    co.costates.assign(std::size_t(j1 - j0 + 1), Matrix());
    co.costates.back() = P_end;
    for (int j = j1 - 1; j >= j0; --j)
        co.costates[std::size_t(j - j0)] =
            vjp_state(spec, states.at(j), controls.layers[std::size_t(j)],
                      co.costates[std::size_t(j - j0 + 1)], j);
    return co;
}

// Layer gradients over the covered range plus, when supplied, the head gradient
// (from terminal_loss) and the opening gradient (pulled back through P at layer 0).
inline ControlsGradient assemble_gradient(const ModelSpec& spec, const Controls& controls,
                                          const StateTrajectory& states,
                                          const CostateTrajectory& costates,
                                          const AffineMap* head_grad = nullptr,
                                          const Matrix* opening_inputs = nullptr) {
    require(states.j0 == costates.j0 && states.j1 == costates.j1,
            "assemble_gradient: range mismatch");
    require(states.batch_id == costates.batch_id, "assemble_gradient: batch mismatch");
    ControlsGradient g = Controls::zeros(spec);
    for (int j = states.j0; j < states.j1; ++j) {
        const auto& U = controls.layers[std::size_t(j)];
        LayerGradient lg = vjp_control(spec, states.at(j), U, costates.at(j + 1), j);
        lg.axpy(1.0, regularizer(spec, U).grad);
        g.layers[std::size_t(j)] = lg;
    }
    if (head_grad) {
        require(states.j1 == spec.n_layers, "assemble_gradient: head gradient off the end");
        g.head = *head_grad;
    }
    if (opening_inputs) {
        require(states.j0 == 0, "assemble_gradient: opening gradient off the start");
        g.opening = opening_vjp(controls.opening, *opening_inputs, costates.at(0));
    }
    return g;
}

inline void sgd_update(Controls& controls, const ControlsGradient& grad, double eta) {
    require(eta > 0.0, "sgd_update: learning rate must be positive");
    controls.axpy(-eta, grad);
}

// Constant when decay_k0 == 0, otherwise eta_k = eta0 / (1 + k / k0)
// (satisfies sum eta = inf, sum eta^2 < inf).
struct LrSchedule {
    double eta0 = 0.1;
    double decay_k0 = 0.0;

    double at(long k) const {
        if (decay_k0 <= 0.0) return eta0;
        return eta0 / (1.0 + double(k) / decay_k0);
    }
};

// Full objective J = mean terminal loss + sum_j R_j at fixed controls.
inline double objective(const ModelSpec& spec, const Controls& controls,
                        const Matrix& inputs, const std::vector<int>& labels) {
    Matrix X0 = opening_forward(controls.opening, inputs);
    StateTrajectory traj = forward_solve(spec, controls, X0, 0, spec.n_layers);
    double J = terminal_loss(controls.head, traj.last(), labels).value;
    for (const auto& U : controls.layers) J += regularizer(spec, U).value;
    return J;
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline EvalResult evaluate(const ModelSpec& spec, const Controls& controls,
                           const Dataset& ds) {
    Matrix X0 = opening_forward(controls.opening, ds.inputs);
    StateTrajectory traj = forward_solve(spec, controls, X0, 0, spec.n_layers);
    TerminalLoss tl = terminal_loss(controls.head, traj.last(), ds.labels);
    Matrix logits = controls.head.apply(traj.last());
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = int(c);  // ties keep lower index
        if (best == ds.labels[std::size_t(i)]) ++correct;
    }
    return {tl.value, double(correct) / double(logits.rows())};
}

struct IterationRecord {
    long iter = 0;
    double loss = 0.0;
    double eta = 0.0;
};

struct SerialResult {
    Controls controls;
    std::vector<IterationRecord> history;
};

// Observer invoked after each iteration's solves, before the update. Used by
// the multilevel prediction phase to harvest (state, co-state) pairs.
using IterationObserver =
    std::function<void(long iter, const StateTrajectory&, const CostateTrajectory&)>;

inline SerialResult serial_train(const ModelSpec& spec, Controls controls,
                                 const Dataset& ds, const BatchStream& stream,
                                 const LrSchedule& lr, long n_iters,
                                 const IterationObserver& observer = {},
                                 long start_iter = 0) {
    spec.validate();
    controls.validate(spec);
    SerialResult out;
    for (long k = start_iter; k < start_iter + n_iters; ++k) {
        try {
            const auto& idx = stream.at(k);
            Matrix inputs = ds.gather_inputs(idx);
            std::vector<int> labels = ds.gather_labels(idx);
            Matrix X0 = opening_forward(controls.opening, inputs);
            StateTrajectory traj = forward_solve(spec, controls, X0, 0, spec.n_layers, k);
            TerminalLoss tl = terminal_loss(controls.head, traj.last(), labels);
            CostateTrajectory co = backward_solve(spec, controls, traj, tl.dX, 0, spec.n_layers);
            if (observer) observer(k, traj, co);
            ControlsGradient g = assemble_gradient(spec, controls, traj, co, &tl.dHead, &inputs);
            const double eta = lr.at(k);
            sgd_update(controls, g, eta);
            out.history.push_back({k, tl.value, eta});
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(k) + ": " + e.what());
        }
    }
    out.controls = std::move(controls);
    return out;
}

}  // namespace timepar
