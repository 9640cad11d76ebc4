#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "timepar/runner.hpp"

namespace {

int run_train(const std::string& config_path,
              const std::vector<std::pair<std::string, std::string>>& overrides) {
    timepar::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = timepar::load_config(config_path);
    for (const auto& [k, v] : overrides)
        if (!v.empty()) timepar::apply_config_entry(cfg, k, v);
    cfg.validate();
    timepar::MetricsWriter writer(cfg.out);
    timepar::run_experiment(cfg, writer);
    std::cout << "metrics written to " << cfg.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"parallel-in-time residual network trainer"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run a training experiment");
    std::string config_path;
    train->add_option("--config", config_path, "TOML config file (flat keys)");
    // every config field is overridable on the command line
    std::map<std::string, std::string> ov;
    for (const char* key : {"dataset", "mnist_images", "mnist_labels", "n_per_class",
                            "scheme", "layers", "width", "horizon", "segments", "splits",
                            "mode", "level", "coarse_iters", "coarsening", "coarse_lr",
                            "lr", "lr_decay_k0", "weight_decay", "ridge", "window",
                            "batch_size", "epochs", "seed", "eval_every", "out"})
        train->add_option("--" + std::string(key), ov[key]);

    // report
    auto* report = app.add_subcommand("report", "compare metrics files");
    std::vector<std::string> metrics_files;
    report->add_option("files", metrics_files, "metrics.jsonl files; first is the baseline")
        ->required();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "export a synthetic dataset as CSV");
    std::string gd_dataset = "swissroll", gd_out = "data.csv";
    int gd_n = 256;
    std::uint64_t gd_seed = 0;
    gen->add_option("--dataset", gd_dataset, "ellipse or swissroll")->required();
    gen->add_option("--n", gd_n, "samples per class");
    gen->add_option("--seed", gd_seed, "generator seed");
    gen->add_option("--out", gd_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            std::vector<std::pair<std::string, std::string>> pairs(ov.begin(), ov.end());
            return run_train(config_path, pairs);
        }
        if (report->parsed()) {
            std::cout << timepar::compare_report(metrics_files);
            return 0;
        }
        if (gen->parsed()) {
            timepar::Dataset ds;
            if (gd_dataset == "ellipse") ds = timepar::gen_ellipse(gd_n, gd_seed);
            else if (gd_dataset == "swissroll") ds = timepar::gen_swissroll(gd_n, gd_seed);
            else {
                std::cerr << "gen-data: unknown dataset '" << gd_dataset << "'\n";
                return 2;
            }
            std::ofstream out(gd_out);
            if (!out) {
                std::cerr << "gen-data: cannot open " << gd_out << "\n";
                return 2;
            }
            timepar::write_csv(ds, out);
            std::cout << "wrote " << ds.size() << " samples to " << gd_out << "\n";
            return 0;
        }
    } catch (const timepar::ContractError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const timepar::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
