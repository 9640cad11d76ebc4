#include <catch2/catch_amalgamated.hpp>

#include "oracle.hpp"
#include "timepar/parallel.hpp"

using namespace timepar;

namespace {

ModelSpec make_spec(Scheme scheme, int layers, int d = 4) {
    ModelSpec s;
    s.scheme = scheme;
    s.width = d;
    s.input_dim = 2;
    s.n_classes = 2;
    s.horizon = 0.1 * layers;
    s.n_layers = layers;
    s.weight_decay = 1e-4;
    return s;
}

ParallelOptions base_opts(long rounds, bool multilevel = false, bool lockstep = false) {
    ParallelOptions o;
    o.n_rounds = rounds;
    o.batch_size = 16;
    o.seed = 3;
    o.lr = {0.05, 0.0};
    o.multilevel = multilevel;
    o.coarse = {2, 10, {0.05, 0.0}};
    o.lockstep = lockstep;
    return o;
}

}  // namespace

TEST_CASE("make_plan") {
    ModelSpec spec = make_spec(Scheme::Euler, 64);
    SECTION("K=2 splits at the midpoint") {
        SegmentPlan p = make_plan(spec, 2);
        CHECK(p.splits == std::vector<int>{32});
        CHECK(p.begin(0) == 0);
        CHECK(p.end(0) == 32);
        CHECK(p.end(1) == 64);
    }
    SECTION("K=4 equal spacing") {
        CHECK(make_plan(spec, 4).splits == std::vector<int>{16, 32, 48});
    }
    SECTION("explicit interior split accepted") {
        CHECK(make_plan(spec, 2, {63}).splits == std::vector<int>{63});
    }
    SECTION("K=1 rejected, bad splits rejected") {
        CHECK_THROWS_AS(make_plan(spec, 1), ContractError);
        CHECK_THROWS_AS(make_plan(spec, 2, {0}), ContractError);
        CHECK_THROWS_AS(make_plan(spec, 2, {64}), ContractError);
        CHECK_THROWS_AS(make_plan(spec, 3, {32, 16}), ContractError);
        CHECK_THROWS_AS(make_plan(make_spec(Scheme::Euler, 10), 4), ContractError);
    }
    SECTION("multilevel mode requires splits on coarse nodes") {
        CHECK_THROWS_AS(make_plan(spec, 2, {31}, 2), ContractError);
        CHECK(make_plan(spec, 2, {32}, 2).splits == std::vector<int>{32});
    }
}

TEST_CASE("lockstep-exact mode equals serial training") {
    Dataset ds = gen_swissroll(64, 4);
    for (Scheme scheme : {Scheme::Euler, Scheme::Verlet}) {
        for (int K : {2, 4}) {
            ModelSpec spec = make_spec(scheme, 8);
            spec.input_dim = int(ds.dim());
            Controls init = Controls::random_init(spec, 5);

            ParallelOptions opts = base_opts(20, false, true);
            ParallelResult par = parallel_train(spec, make_plan(spec, K), ds, init, opts);

            BatchStream stream(ds.size(), opts.batch_size, opts.seed);
            Controls ser = serial_train(spec, init, ds, stream, opts.lr, 20).controls;

            CHECK(oracle::controls_rel_diff(par.controls, ser) <= 1e-12);
        }
    }
}

TEST_CASE("lockstep with zero-effect learning rate leaves controls at init") {
    Dataset ds = gen_swissroll(32, 4);
    ModelSpec spec = make_spec(Scheme::Euler, 8);
    spec.input_dim = int(ds.dim());
    Controls init = Controls::random_init(spec, 6);
    ParallelOptions opts = base_opts(3, false, true);
    opts.lr = {1e-300, 0.0};  // effectively zero but valid
    ParallelResult res = parallel_train(spec, make_plan(spec, 2), ds, init, opts);
    CHECK(oracle::controls_rel_diff(res.controls, init) <= 1e-290);
}

TEST_CASE("pipelined rounds flow messages and stay deterministic") {
    Dataset ds = gen_swissroll(64, 7);
    ModelSpec spec = make_spec(Scheme::Verlet, 8);
    spec.input_dim = int(ds.dim());
    Controls init = Controls::random_init(spec, 8);

    SECTION("n_rounds = 0 returns the prediction-phase controls") {
        ParallelOptions opts = base_opts(0, true);
        ParallelResult res = parallel_train(spec, make_plan(spec, 2, {}, 2), ds, init, opts);
        // must equal the prolonged coarse solution
        Prediction pred = global_predict(spec, init, opts.coarse, ds, {4},
                                         opts.batch_size, opts.seed);
        CHECK(oracle::controls_rel_diff(res.controls, pred.fine_controls) == 0.0);
    }
    SECTION("determinism: identical seeds give bitwise-identical runs") {
        for (bool multilevel : {false, true}) {
            ParallelOptions opts = base_opts(15, multilevel);
            SegmentPlan plan = make_plan(spec, 4, {}, multilevel ? 2 : 1);
            ParallelResult a = parallel_train(spec, plan, ds, init, opts);
            ParallelResult b = parallel_train(spec, plan, ds, init, opts);
            CHECK(oracle::controls_rel_diff(a.controls, b.controls) == 0.0);
            REQUIRE(a.rounds.size() == b.rounds.size());
            for (std::size_t k = 0; k < a.rounds.size(); ++k) {
                CHECK(a.rounds[k].loss == b.rounds[k].loss);
                CHECK(a.rounds[k].fit_mse == b.rounds[k].fit_mse);
            }
        }
    }
    SECTION("single-thread cap reproduces the multi-thread result") {
        ParallelOptions opts = base_opts(10, true);
        SegmentPlan plan = make_plan(spec, 2, {}, 2);
        opts.n_threads = 1;
        ParallelResult serial_exec = parallel_train(spec, plan, ds, init, opts);
        opts.n_threads = 4;
        ParallelResult threaded = parallel_train(spec, plan, ds, init, opts);
        CHECK(oracle::controls_rel_diff(serial_exec.controls, threaded.controls) == 0.0);
    }
}

TEST_CASE("run_round message accounting and information-set growth") {
    Dataset ds = gen_swissroll(64, 9);
    ModelSpec spec = make_spec(Scheme::Euler, 8);
    spec.input_dim = int(ds.dim());
    Controls init = Controls::random_init(spec, 10);

    SECTION("single-level cold start: predictor unavailable in round 0") {
        ParallelOptions opts = base_opts(1);
        ParallelTrainer trainer(spec, make_plan(spec, 2), ds, init, opts);
        CHECK(trainer.segment(0).info.empty());
        trainer.run_round(0);
        // the round joined exactly one (state, co-state) pair per split
        CHECK(trainer.segment(0).info.size() == std::size_t(opts.batch_size));
        CHECK(!trainer.segment(0).predictor_ready);  // zero predictor was used
        trainer.run_round(1);
        CHECK(trainer.segment(0).predictor_ready);
        CHECK(trainer.segment(0).info.size() == std::size_t(2 * opts.batch_size));
        // bounded in-flight window: joined state plus the two unanswered sends
        CHECK(trainer.segment(0).sent_states.size() == 3);
        trainer.run_round(2);
        CHECK(trainer.segment(0).sent_states.size() == 3);
        CHECK(trainer.segment(0).sent_states.count(-1) == 0);  // stale init dropped
    }
    SECTION("multilevel start: seed pairs fitted in the first round") {
        ParallelOptions opts = base_opts(1, true);
        ParallelTrainer trainer(spec, make_plan(spec, 2, {}, 2), ds, init, opts);
        CHECK(trainer.segment(0).info.size() ==
              std::size_t(opts.coarse.prediction_iters * opts.batch_size));
        trainer.run_round(0);
        CHECK(trainer.segment(0).predictor_ready);
    }
    SECTION("batches flow through the pipeline with one round of lag") {
        ParallelOptions opts = base_opts(4);
        opts.lr = {1e-300, 0.0};  // effectively frozen controls
        ParallelTrainer trainer(spec, make_plan(spec, 2), ds, init, opts);
        for (long k = 0; k < 3; ++k) {
            trainer.run_round(k);
            // segment 1 just forwarded the previous round's batch and has the
            // fresh boundary state queued for the next round
            CHECK(trainer.segment(1).traj.batch_id == k - 1);
            CHECK(trainer.segment(1).inbound_state.batch_id == k);
        }
        CHECK(oracle::controls_rel_diff(trainer.assemble_controls(), init) <= 1e-290);
    }
}

TEST_CASE("epsilon diagnostic is finite once the predictor is live") {
    Dataset ds = gen_swissroll(64, 11);
    ModelSpec spec = make_spec(Scheme::Verlet, 8);
    spec.input_dim = int(ds.dim());
    ParallelOptions opts = base_opts(30, true);
    opts.eval_every = 10;
    ParallelResult res = parallel_train(spec, make_plan(spec, 2, {}, 2), ds,
                                        Controls::random_init(spec, 12), opts);
    int live = 0;
    for (const auto& rec : res.rounds)
        for (const auto& [s, eps] : rec.epsilon)
            if (eps) {
                CHECK(std::isfinite(*eps));
                ++live;
            }
    CHECK(live >= 29);  // every round after the first join
}

TEST_CASE("parallel training reaches serial-level accuracy on the swiss roll") {
    // small-scale accuracy parity run; the acceptance suite does the full one
    Dataset ds = gen_swissroll(512, 13);
    ModelSpec spec = make_spec(Scheme::Verlet, 32, 8);
    spec.input_dim = int(ds.dim());
    Controls init = Controls::random_init(spec, 14);

    ParallelOptions opts = base_opts(6400, true);
    opts.batch_size = 32;
    opts.lr = {1.0, 2000.0};
    opts.coarse = {2, 200, {1.0, 2000.0}};
    ParallelResult par = parallel_train(spec, make_plan(spec, 2, {}, 2), ds, init, opts);

    BatchStream stream(ds.size(), 32, opts.seed);
    Controls ser = serial_train(spec, init, ds, stream, opts.lr, 6400).controls;

    const double acc_par = evaluate(spec, par.controls, ds).accuracy;
    const double acc_ser = evaluate(spec, ser, ds).accuracy;
    CHECK(acc_par >= 0.98);
    CHECK(acc_ser >= 0.98);
    CHECK(std::abs(acc_par - acc_ser) <= 0.02);
}
