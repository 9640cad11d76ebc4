#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "timepar/runner.hpp"

using namespace timepar;

namespace {

std::filesystem::path scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() / "timepar_runner_test";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string write_file(const std::string& name, const std::string& body) {
    auto path = scratch_dir() / name;
    std::ofstream out(path);
    out << body;
    return path.string();
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.dataset = "ellipse";
    cfg.n_per_class = 16;
    cfg.scheme = Scheme::Euler;
    cfg.n_layers = 4;
    cfg.width = 2;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.lr = 0.05;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("flat TOML parsing") {
    SECTION("keys, comments, quotes, and arrays") {
        std::istringstream in(
            "# run setup\n"
            "dataset = \"swissroll\"\n"
            "layers = 64   # depth\n"
            "lr = 0.5\n"
            "splits = [16, 32, 48]\n"
            "\n"
            "mode = parallel\n");
        auto kv = parse_flat_toml(in);
        CHECK(kv.at("dataset") == "swissroll");
        CHECK(kv.at("layers") == "64");
        CHECK(kv.at("lr") == "0.5");
        CHECK(kv.at("mode") == "parallel");
        CHECK(parse_int_list(kv.at("splits")) == std::vector<int>{16, 32, 48});
    }
    SECTION("sections and malformed lines rejected") {
        std::istringstream sec("[training]\nlr = 0.1\n");
        CHECK_THROWS_AS(parse_flat_toml(sec), FormatError);
        std::istringstream bad("just words\n");
        CHECK_THROWS_AS(parse_flat_toml(bad), FormatError);
    }
}

TEST_CASE("config entries apply with validation") {
    ExperimentConfig cfg;
    apply_config_entry(cfg, "scheme", "euler");
    apply_config_entry(cfg, "layers", "16");
    apply_config_entry(cfg, "mode", "lockstep-oracle");
    apply_config_entry(cfg, "level", "multilevel");
    apply_config_entry(cfg, "seed", "42");
    CHECK(cfg.scheme == Scheme::Euler);
    CHECK(cfg.n_layers == 16);
    CHECK(cfg.mode == RunMode::LockstepOracle);
    CHECK(cfg.level == LevelMode::Multilevel);
    CHECK(cfg.seed == 42);

    SECTION("unknown key and enum values are format errors") {
        CHECK_THROWS_AS(apply_config_entry(cfg, "learning_rate", "0.1"), FormatError);
        CHECK_THROWS_AS(apply_config_entry(cfg, "scheme", "rk4"), FormatError);
        CHECK_THROWS_AS(apply_config_entry(cfg, "mode", "hybrid"), FormatError);
    }
    SECTION("default horizon tracks depth, explicit horizon wins") {
        CHECK(cfg.effective_horizon() == Catch::Approx(1.6));
        apply_config_entry(cfg, "horizon", "2.5");
        CHECK(cfg.effective_horizon() == 2.5);
    }
    SECTION("validate rejects inconsistent setups") {
        ExperimentConfig bad = tiny_config();
        bad.dataset = "imagenet";
        CHECK_THROWS_AS(bad.validate(), ContractError);
        bad = tiny_config();
        bad.dataset = "mnist";  // no idx paths given
        CHECK_THROWS_AS(bad.validate(), ContractError);
        bad = tiny_config();
        bad.level = LevelMode::Multilevel;
        bad.n_layers = 5;  // not divisible by coarsening
        CHECK_THROWS_AS(bad.validate(), ContractError);
    }
}

TEST_CASE("load_config round-trips a file") {
    const std::string path = write_file("run.toml",
                                        "dataset = \"ellipse\"\n"
                                        "scheme = \"euler\"\n"
                                        "layers = 8\n"
                                        "width = 2\n"
                                        "epochs = 1\n"
                                        "lr = 0.01\n");
    ExperimentConfig cfg = load_config(path);
    CHECK(cfg.dataset == "ellipse");
    CHECK(cfg.scheme == Scheme::Euler);
    CHECK(cfg.n_layers == 8);
    CHECK(cfg.epochs == 1);
    CHECK_THROWS_AS(load_config((scratch_dir() / "missing.toml").string()), FormatError);
}

TEST_CASE("run_experiment serial mode writes config, rounds, and summary") {
    ExperimentConfig cfg = tiny_config();
    cfg.out = (scratch_dir() / "serial.jsonl").string();

    SECTION("epochs = 0 gives a summary-only file at the initial accuracy") {
        cfg.epochs = 0;
        MetricsWriter writer(cfg.out);
        Controls final_controls = run_experiment(cfg, writer);
        RunDigest d = digest_metrics(cfg.out);
        CHECK(d.rounds.empty());
        CHECK(d.summary["rounds"].get<long>() == 0);
        // summary accuracy must match an independent evaluation of the init
        Dataset ds = make_dataset(cfg);
        ModelSpec spec = make_spec(cfg, ds);
        EvalResult ev = evaluate(spec, Controls::random_init(spec, cfg.seed), ds);
        CHECK(d.summary["final_train_accuracy"].get<double>() == ev.accuracy);
        CHECK(d.summary["controls_checksum"].get<std::string>() ==
              controls_checksum(final_controls));
    }
    SECTION("two epochs write one record per iteration plus evals") {
        cfg.eval_every = 4;
        MetricsWriter writer(cfg.out);
        run_experiment(cfg, writer);
        auto records = read_jsonl(cfg.out);
        long rounds = 0, evals = 0;
        for (const auto& r : records) {
            if (r.contains("round")) ++rounds;
            if (r.contains("eval_at")) ++evals;
        }
        CHECK(rounds == 8);  // 32 samples / batch 8 * 2 epochs
        CHECK(evals == 2);
        CHECK(records.front().contains("config"));
        CHECK(records.back().contains("summary"));
    }
}

TEST_CASE("lockstep-oracle run matches the serial checksum exactly") {
    ExperimentConfig serial = tiny_config();
    serial.out = (scratch_dir() / "ser.jsonl").string();
    ExperimentConfig lockstep = serial;
    lockstep.mode = RunMode::LockstepOracle;
    lockstep.segments = 2;
    lockstep.out = (scratch_dir() / "lock.jsonl").string();

    MetricsWriter w1(serial.out);
    run_experiment(serial, w1);
    MetricsWriter w2(lockstep.out);
    run_experiment(lockstep, w2);

    RunDigest a = digest_metrics(serial.out);
    RunDigest b = digest_metrics(lockstep.out);
    CHECK(a.summary["controls_checksum"] == b.summary["controls_checksum"]);
    CHECK(a.summary["final_train_loss"] == b.summary["final_train_loss"]);
}

TEST_CASE("parallel multilevel run emits fit_mse and epsilon per round") {
    ExperimentConfig cfg = tiny_config();
    cfg.mode = RunMode::Parallel;
    cfg.level = LevelMode::Multilevel;
    cfg.segments = 2;
    cfg.coarse_iters = 3;
    cfg.coarse_lr = 0.05;
    cfg.out = (scratch_dir() / "par.jsonl").string();
    MetricsWriter writer(cfg.out);
    run_experiment(cfg, writer);
    RunDigest d = digest_metrics(cfg.out);
    REQUIRE(d.rounds.size() == 8);
    for (const auto& rec : d.rounds) {
        REQUIRE(rec.contains("fit_mse"));
        CHECK(rec["fit_mse"].contains("2"));  // split at layer 2 of 4
        REQUIRE(rec.contains("epsilon_p"));
        CHECK(rec["segment_seconds"].size() == 2);
    }
}

TEST_CASE("compare_report") {
    namespace fs = std::filesystem;
    auto dir = scratch_dir();

    auto fabricate = [&](const std::string& name, const std::string& mode, int segments,
                         double secs, double acc, int layers,
                         const std::vector<double>& mses) {
        MetricsWriter w((dir / name).string());
        json cfg = config_to_json(tiny_config());
        cfg["mode"] = mode;
        cfg["segments"] = segments;
        cfg["layers"] = layers;
        w.write(json{{"config", cfg}});
        for (std::size_t k = 0; k < mses.size(); ++k)
            w.write(json{{"round", k},
                         {"loss", 0.5},
                         {"eta", 0.1},
                         {"fit_mse", {{"2", mses[k]}}}});
        w.write(json{{"summary",
                      {{"rounds", long(mses.size())},
                       {"total_seconds", secs},
                       {"final_train_accuracy", acc},
                       {"final_train_loss", 0.1},
                       {"controls_checksum", "0"}}}});
        return (dir / name).string();
    };

    const std::string base = fabricate("base.jsonl", "serial", 2, 10.0, 0.99, 4, {});
    const std::string par = fabricate("fast.jsonl", "parallel", 2, 6.0, 0.98, 4, {0.5, 0.25});
    const std::string other = fabricate("other.jsonl", "serial", 2, 10.0, 0.99, 8, {});

    SECTION("file against itself: speedup 1, accuracy delta 0") {
        std::string rep = compare_report({base, base});
        std::istringstream in(rep);
        std::string header, row1, row2;
        std::getline(in, header);
        std::getline(in, row1);
        std::getline(in, row2);
        CHECK(row2.find(",1,1,0.99,0,yes") != std::string::npos);
    }
    SECTION("10s serial baseline vs 6s K=2 parallel: speedup 1.67, efficiency 0.83") {
        std::string rep = compare_report({base, par});
        CHECK(rep.find("1.66667,0.833333") != std::string::npos);
        // MSE series section present for the parallel run
        CHECK(rep.find("fit_mse_series") != std::string::npos);
        CHECK(rep.find("fast.jsonl,0,0.5") != std::string::npos);
        CHECK(rep.find("fast.jsonl,1,0.25") != std::string::npos);
    }
    SECTION("mismatched depth flagged incompatible") {
        std::string rep = compare_report({base, other});
        CHECK(rep.find("INCOMPATIBLE") != std::string::npos);
    }
    SECTION("no inputs rejected") {
        CHECK_THROWS_AS(compare_report({}), ContractError);
    }
}
