#pragma once

#include <chrono>
#include <cstdlib>
#include <map>
#include <optional>
#include <thread>
#include <vector>

#include "timepar/multilevel.hpp"
#include "timepar/regression.hpp"
#include "timepar/trajectory.hpp"

namespace timepar {

// Partition of [0, n_layers) into K contiguous segments. Segment i owns
// layers [begin(i), end(i)); segment 0 owns the opening map and segment
// K-1 owns the classifier head.
struct SegmentPlan {
    int K = 2;
    int n_layers = 0;
    std::vector<int> splits;  // strictly increasing interior fine layer indices

    int begin(int i) const { return i == 0 ? 0 : splits[std::size_t(i - 1)]; }
    int end(int i) const { return i == K - 1 ? n_layers : splits[std::size_t(i)]; }
};

inline SegmentPlan make_plan(const ModelSpec& spec, int K,
                             std::vector<int> splits = {}, int coarsening = 1) {
    require(K >= 2, "make_plan: K must be >= 2");
    if (splits.empty()) {
        require(spec.n_layers % K == 0,
                "make_plan: default splits need n_layers divisible by K");
        for (int i = 1; i < K; ++i) splits.push_back(i * spec.n_layers / K);
    }
    require(int(splits.size()) == K - 1, "make_plan: need K-1 splits");
    int prev = 0;
    for (int s : splits) {
        require(s > prev, "make_plan: splits must be strictly increasing");
        require(s > 0 && s < spec.n_layers, "make_plan: splits must be interior");
        if (coarsening > 1)
            require(s % coarsening == 0, "make_plan: split not on a coarse node");
        prev = s;
    }
    return SegmentPlan{K, spec.n_layers, std::move(splits)};
}

enum class MessageKind { StateRight, CostateLeft };

struct BoundaryMessage {
    long round = -1;
    int split = -1;
    MessageKind kind = MessageKind::StateRight;
    std::int64_t batch_id = -1;
    Matrix payload;
    bool present = false;
};

struct RoundRecord {
    long round = 0;
    double loss = 0.0;  // terminal loss seen by the last segment this round
    double eta = 0.0;
    std::vector<double> segment_seconds;
    std::map<int, double> fit_mse;                  // split -> regression MSE
    std::map<int, std::optional<double>> epsilon;   // split -> eps_p diagnostic
    std::optional<double> objective;                // full-dataset J, when recorded
    std::optional<double> train_accuracy;
    std::optional<double> train_loss;
};

struct ParallelOptions {
    long n_rounds = 100;
    int batch_size = 32;
    std::uint64_t seed = 0;
    LrSchedule lr{0.1, 0.0};
    double ridge = 1e-4;
    std::size_t window_capacity = 2048;
    bool multilevel = false;
    CoarseConfig coarse{};
    bool lockstep = false;       // exact-oracle mode, runs segments sequentially
    int eval_every = 0;          // 0: evaluate only at the end
    bool record_objective = false;
    int n_threads = 0;           // 0: respect TIMEPAR_THREADS, else hardware
};

struct ParallelResult {
    Controls controls;
    std::vector<RoundRecord> rounds;
    double prediction_seconds = 0.0;
};

namespace detail {

inline int resolve_thread_cap(int requested, int K) {
    int cap = requested;
    if (cap <= 0) {
        if (const char* env = std::getenv("TIMEPAR_THREADS")) cap = std::atoi(env);
        if (cap <= 0) cap = int(std::thread::hardware_concurrency());
        if (cap <= 0) cap = 1;
    }
    return std::min(cap, K);
}

// Runs fn(i) for i in [0, K) on up to `cap` threads with contiguous chunks.
// The join at the end is the per-round barrier.
template <typename Fn>
void for_each_segment(int K, int cap, Fn&& fn) {
    if (cap <= 1) {
        for (int i = 0; i < K; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(cap));
    const int chunk = (K + cap - 1) / cap;
    for (int t = 0; t < cap; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(K, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// One worker's private state. Each segment holds a full Controls copy but
// only its owned blocks are ever updated or read out.
struct SegmentState {
    int index = 0;
    Controls controls;
    StateTrajectory traj;             // current trajectory over the owned range
    BoundaryMessage inbound_state;    // left-boundary state for the next forward
    BoundaryMessage outgoing_state;   // to the right neighbour
    BoundaryMessage outgoing_costate; // to the left neighbour
    InfoSet info;                     // right-split observations (interior only)
    AffinePredictor predictor;
    bool predictor_ready = false;
    std::map<std::int64_t, Matrix> sent_states;  // awaiting matching co-states
    double last_loss = 0.0;      // last segment only
    double last_fit_mse = 0.0;
    std::optional<double> last_epsilon;
    double seconds = 0.0;
};

class ParallelTrainer {
public:
    ParallelTrainer(const ModelSpec& spec, SegmentPlan plan, const Dataset& ds,
                    Controls init, ParallelOptions opts)
        : spec_(spec), plan_(std::move(plan)), ds_(ds), opts_(std::move(opts)),
          stream_(ds.size(), opts_.batch_size, opts_.seed) {
        spec_.validate();
        init.validate(spec_);
        init_segments(std::move(init));
    }

    ParallelResult train() {
        ParallelResult out;
        const int cap = detail::resolve_thread_cap(opts_.n_threads, plan_.K);
        for (long k = 0; k < opts_.n_rounds; ++k) {
            const double eta = opts_.lr.at(k);
            if (opts_.lockstep) {
                lockstep_exact_round(k, eta);
            } else {
                detail::for_each_segment(plan_.K, cap,
                                         [this, k, eta](int i) { compute(i, k, eta); });
                exchange(k, eta);
            }
            out.rounds.push_back(collect(k, eta));
        }
        out.controls = assemble_controls();
        out.prediction_seconds = prediction_seconds_;
        return out;
    }

    // Exposed for tests that drive rounds manually.
    void run_round(long k) {
        const double eta = opts_.lr.at(k);
        const int cap = detail::resolve_thread_cap(opts_.n_threads, plan_.K);
        detail::for_each_segment(plan_.K, cap,
                                 [this, k, eta](int i) { compute(i, k, eta); });
        exchange(k, eta);
    }

    void lockstep_round(long k) { lockstep_exact_round(k, opts_.lr.at(k)); }

    Controls assemble_controls() const {
        Controls out = segments_[0].controls;
        for (int i = 1; i < plan_.K; ++i) {
            const auto& seg = segments_[std::size_t(i)];
            for (int j = plan_.begin(i); j < plan_.end(i); ++j)
                out.layers[std::size_t(j)] = seg.controls.layers[std::size_t(j)];
        }
        out.head = segments_[std::size_t(plan_.K - 1)].controls.head;
        return out;
    }

    const SegmentState& segment(int i) const { return segments_[std::size_t(i)]; }
    double prediction_seconds() const { return prediction_seconds_; }

private:
    void init_segments(Controls init) {
        segments_.assign(std::size_t(plan_.K), SegmentState{});

        std::map<int, Matrix> boundary;
        if (opts_.multilevel) {
            const auto t0 = std::chrono::steady_clock::now();
            Prediction pred = global_predict(spec_, init, opts_.coarse, ds_, plan_.splits,
                                             opts_.batch_size, opts_.seed);
            prediction_seconds_ =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            init = pred.fine_controls;
            boundary = pred.boundary_states;
            init_batch_ = pred.boundary_batch;
            for (int i = 0; i + 1 < plan_.K; ++i) {
                auto& seg = segments_[std::size_t(i)];
                seg.info = InfoSet(plan_.splits[std::size_t(i)], opts_.window_capacity);
                for (const auto& [x, p] : pred.seed_pairs.at(plan_.splits[std::size_t(i)]))
                    seg.info.observe(x, p);
            }
        } else {
            // Single level: plain fine forward pass supplies the boundary states.
            init_batch_ = stream_.at(0);
            Matrix X0 = opening_forward(init.opening, ds_.gather_inputs(init_batch_));
            StateTrajectory full = forward_solve(spec_, init, X0, 0, spec_.n_layers, kInitBatch);
            for (int s : plan_.splits) boundary[s] = full.at(s);
            for (int i = 0; i + 1 < plan_.K; ++i)
                segments_[std::size_t(i)].info =
                    InfoSet(plan_.splits[std::size_t(i)], opts_.window_capacity);
        }

        Matrix inputs = ds_.gather_inputs(init_batch_);
        for (int i = 0; i < plan_.K; ++i) {
            auto& seg = segments_[std::size_t(i)];
            seg.index = i;
            seg.controls = init;
            Matrix X_start = (i == 0) ? opening_forward(init.opening, inputs)
                                      : boundary.at(plan_.begin(i));
            seg.traj = forward_solve(spec_, init, X_start, plan_.begin(i), plan_.end(i),
                                     kInitBatch);
            seg.inbound_state = {-1, plan_.begin(i), MessageKind::StateRight, kInitBatch,
                                 X_start, true};
            // The right neighbour's first co-state message refers to this
            // boundary state; register it so the round-0 join can pair them.
            if (i > 0) segments_[std::size_t(i - 1)].sent_states[kInitBatch] = X_start;
        }
    }

    std::vector<int> batch_indices(std::int64_t batch_id) const {
        if (batch_id == kInitBatch) return init_batch_;
        return stream_.at(batch_id);
    }

    // One segment's work inside round k: backward from the (predicted or exact)
    // right-boundary co-state, update, forward from the stored left boundary.
    void compute(int i, long k, double eta) {
        const auto t0 = std::chrono::steady_clock::now();
        auto& seg = segments_[std::size_t(i)];
        const int lo = plan_.begin(i);
        const int hi = plan_.end(i);
        const bool last = (i == plan_.K - 1);
        const bool first = (i == 0);

        Matrix P_end;
        AffineMap head_grad;
        bool have_head = false;
        if (last) {
            const auto labels = ds_.gather_labels(batch_indices(seg.traj.batch_id));
            TerminalLoss tl = terminal_loss(seg.controls.head, seg.traj.last(), labels);
            P_end = tl.dX;
            head_grad = tl.dHead;
            have_head = true;
            seg.last_loss = tl.value;
        } else {
            if (!seg.info.empty()) {
                seg.predictor = fit(seg.info, opts_.ridge);
                seg.predictor_ready = true;
            } else {
                // Cold start: zero prediction until the first pair arrives.
                seg.predictor = AffinePredictor::zero(spec_.width);
                seg.predictor_ready = false;
            }
            P_end = seg.predictor.predict(seg.traj.last());
        }

        CostateTrajectory co = backward_solve(spec_, seg.controls, seg.traj, P_end, lo, hi);

        Matrix opening_inputs;
        const Matrix* opening_ptr = nullptr;
        if (first) {
            opening_inputs = ds_.gather_inputs(batch_indices(seg.traj.batch_id));
            opening_ptr = &opening_inputs;
        }
        ControlsGradient g = assemble_gradient(spec_, seg.controls, seg.traj, co,
                                               have_head ? &head_grad : nullptr, opening_ptr);
        sgd_update(seg.controls, g, eta);

        // Forward with post-update controls from the round-(k-1) left boundary.
        std::int64_t fwd_batch;
        Matrix X_start;
        if (first) {
            fwd_batch = k;
            X_start = opening_forward(seg.controls.opening,
                                      ds_.gather_inputs(batch_indices(fwd_batch)));
        } else {
            if (!seg.inbound_state.present)
                throw ProtocolError("segment " + std::to_string(i) +
                                    ": missing left-boundary state at round " +
                                    std::to_string(k));
            fwd_batch = seg.inbound_state.batch_id;
            X_start = seg.inbound_state.payload;
        }
        seg.traj = forward_solve(spec_, seg.controls, X_start, lo, hi, fwd_batch);

        if (!last) {
            seg.outgoing_state = {k, hi, MessageKind::StateRight, seg.traj.batch_id,
                                  seg.traj.last(), true};
            seg.sent_states[seg.traj.batch_id] = seg.traj.last();
        }
        if (!first)
            seg.outgoing_costate = {k, lo, MessageKind::CostateLeft, co.batch_id,
                                    co.costates.front(), true};

        seg.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    // Message delivery after the barrier, in fixed split order so runs are
    // deterministic under any worker interleaving.
    void exchange(long k, double eta) {
        for (int i = 0; i + 1 < plan_.K; ++i) {
            auto& left = segments_[std::size_t(i)];
            auto& right = segments_[std::size_t(i + 1)];
            const int s = plan_.splits[std::size_t(i)];

            if (!left.outgoing_state.present)
                throw ProtocolError("round " + std::to_string(k) + ", split " +
                                    std::to_string(s) + ": missing state message");
            right.inbound_state = left.outgoing_state;
            left.outgoing_state.present = false;

            if (!right.outgoing_costate.present)
                throw ProtocolError("round " + std::to_string(k) + ", split " +
                                    std::to_string(s) + ": missing co-state message");
            const BoundaryMessage& cmsg = right.outgoing_costate;
            auto it = left.sent_states.find(cmsg.batch_id);
            if (it == left.sent_states.end())
                throw ProtocolError("round " + std::to_string(k) + ", split " +
                                    std::to_string(s) + ": co-state batch " +
                                    std::to_string(cmsg.batch_id) +
                                    " does not match any sent state");
            // Realized prediction error of this round's predictor on the pair
            // just joined; the zero predictor of a cold start counts in full.
            Matrix P_hat = left.predictor.predict(it->second);
            left.last_fit_mse =
                (P_hat - cmsg.payload).rowwise().squaredNorm().mean();
            left.last_epsilon.reset();
            if (left.predictor_ready)
                left.last_epsilon = epsilon_diagnostic(P_hat, cmsg.payload, eta);
            left.info.observe(it->second, cmsg.payload);
            // While the pipeline warms up the same boundary state can be
            // joined twice (the right neighbour reuses its initial state for
            // the round-0 forward), so keep the joined entry and drop only
            // strictly older ones.
            left.sent_states.erase(left.sent_states.begin(), it);
            right.outgoing_costate.present = false;
        }
    }

    // Oracle mode: one full serial iteration executed through the segment
    // structure, with exact states and co-states handed across splits.
    void lockstep_exact_round(long k, double eta) {
        const auto& idx = stream_.at(k);
        Matrix inputs = ds_.gather_inputs(idx);
        const auto labels = ds_.gather_labels(idx);

        Matrix X = opening_forward(segments_[0].controls.opening, inputs);
        for (int i = 0; i < plan_.K; ++i) {
            auto& seg = segments_[std::size_t(i)];
            seg.traj = forward_solve(spec_, seg.controls, X, plan_.begin(i), plan_.end(i), k);
            X = seg.traj.last();
        }

        auto& tail = segments_[std::size_t(plan_.K - 1)];
        TerminalLoss tl = terminal_loss(tail.controls.head, X, labels);
        tail.last_loss = tl.value;

        Matrix P = tl.dX;
        std::vector<CostateTrajectory> cos(std::size_t(plan_.K));
        for (int i = plan_.K - 1; i >= 0; --i) {
            auto& seg = segments_[std::size_t(i)];
            cos[std::size_t(i)] =
                backward_solve(spec_, seg.controls, seg.traj, P, plan_.begin(i), plan_.end(i));
            P = cos[std::size_t(i)].costates.front();
        }

        for (int i = 0; i < plan_.K; ++i) {
            auto& seg = segments_[std::size_t(i)];
            const bool first = (i == 0);
            const bool last = (i == plan_.K - 1);
            const Matrix* opening_ptr = first ? &inputs : nullptr;
            ControlsGradient g =
                assemble_gradient(spec_, seg.controls, seg.traj, cos[std::size_t(i)],
                                  last ? &tl.dHead : nullptr, opening_ptr);
            sgd_update(seg.controls, g, eta);
        }
    }

    RoundRecord collect(long k, double eta) {
        RoundRecord rec;
        rec.round = k;
        rec.eta = eta;
        rec.loss = segments_[std::size_t(plan_.K - 1)].last_loss;
        for (const auto& seg : segments_) rec.segment_seconds.push_back(seg.seconds);
        if (!opts_.lockstep) {
            for (int i = 0; i + 1 < plan_.K; ++i) {
                const auto& seg = segments_[std::size_t(i)];
                rec.fit_mse[plan_.splits[std::size_t(i)]] = seg.last_fit_mse;
                rec.epsilon[plan_.splits[std::size_t(i)]] = seg.last_epsilon;
            }
        }
        if (opts_.record_objective) {
            Controls all = assemble_controls();
            rec.objective = objective(spec_, all, ds_.inputs, ds_.labels);
        }
        if (opts_.eval_every > 0 && (k % opts_.eval_every == 0 || k == opts_.n_rounds - 1)) {
            Controls all = assemble_controls();
            EvalResult ev = evaluate(spec_, all, ds_);
            rec.train_accuracy = ev.accuracy;
            rec.train_loss = ev.loss;
        }
        return rec;
    }

    static constexpr std::int64_t kInitBatch = -1;

    ModelSpec spec_;
    SegmentPlan plan_;
    const Dataset& ds_;
    ParallelOptions opts_;
    BatchStream stream_;
    std::vector<SegmentState> segments_;
    std::vector<int> init_batch_;
    double prediction_seconds_ = 0.0;
};

inline ParallelResult parallel_train(const ModelSpec& spec, const SegmentPlan& plan,
                                     const Dataset& ds, const Controls& init,
                                     const ParallelOptions& opts) {
    ParallelTrainer trainer(spec, plan, ds, init, opts);
    return trainer.train();
}

}  // namespace timepar
