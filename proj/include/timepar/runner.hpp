#pragma once

#include <chrono>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "timepar/config.hpp"
#include "timepar/metrics.hpp"
#include "timepar/parallel.hpp"

namespace timepar {

namespace detail {

inline void fnv_mix(std::uint64_t& h, const double* data, std::size_t n) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
}

}  // namespace detail

// FNV-1a over the raw bytes of every parameter, as a reproducibility fingerprint.
inline std::string controls_checksum(const Controls& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& blk : c.layers) {
        detail::fnv_mix(h, blk.W.data(), std::size_t(blk.W.size()));
        detail::fnv_mix(h, blk.b.data(), std::size_t(blk.b.size()));
        if (blk.W2.size() > 0) detail::fnv_mix(h, blk.W2.data(), std::size_t(blk.W2.size()));
        if (blk.b2.size() > 0) detail::fnv_mix(h, blk.b2.data(), std::size_t(blk.b2.size()));
    }
    detail::fnv_mix(h, c.opening.W.data(), std::size_t(c.opening.W.size()));
    detail::fnv_mix(h, c.opening.b.data(), std::size_t(c.opening.b.size()));
    detail::fnv_mix(h, c.head.W.data(), std::size_t(c.head.W.size()));
    detail::fnv_mix(h, c.head.b.data(), std::size_t(c.head.b.size()));
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline Dataset make_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == "ellipse") return gen_ellipse(cfg.n_per_class, cfg.seed);
    if (cfg.dataset == "swissroll") return gen_swissroll(cfg.n_per_class, cfg.seed);
    return load_mnist_idx(cfg.mnist_images, cfg.mnist_labels);
}

inline ModelSpec make_spec(const ExperimentConfig& cfg, const Dataset& ds) {
    ModelSpec spec;
    spec.scheme = cfg.scheme;
    spec.width = cfg.width;
    spec.input_dim = int(ds.dim());
    spec.n_classes = ds.n_classes;
    spec.horizon = cfg.effective_horizon();
    spec.n_layers = cfg.n_layers;
    spec.weight_decay = cfg.weight_decay;
    spec.validate();
    return spec;
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = cfg.dataset;
    j["n_per_class"] = cfg.n_per_class;
    j["scheme"] = scheme_name(cfg.scheme);
    j["layers"] = cfg.n_layers;
    j["width"] = cfg.width;
    j["horizon"] = cfg.effective_horizon();
    j["segments"] = cfg.segments;
    j["splits"] = cfg.splits;
    j["mode"] = cfg.mode == RunMode::Serial ? "serial"
              : cfg.mode == RunMode::Parallel ? "parallel" : "lockstep-oracle";
    j["level"] = cfg.level == LevelMode::Single ? "single" : "multilevel";
    j["coarse_iters"] = cfg.coarse_iters;
    j["coarsening"] = cfg.coarsening;
    j["coarse_lr"] = cfg.coarse_lr;
    j["lr"] = cfg.lr;
    j["lr_decay_k0"] = cfg.lr_decay_k0;
    j["weight_decay"] = cfg.weight_decay;
    j["ridge"] = cfg.ridge;
    j["window"] = cfg.window;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["eval_every"] = cfg.eval_every;
    return j;
}

// Executes the configured run end to end and writes one JSONL record per
// round plus a final summary. Returns the final controls.
inline Controls run_experiment(const ExperimentConfig& cfg, MetricsWriter& writer) {
    cfg.validate();
    Dataset ds = make_dataset(cfg);
    ds.validate();
    ModelSpec spec = make_spec(cfg, ds);
    Controls init = Controls::random_init(spec, cfg.seed);
    BatchStream stream(ds.size(), cfg.batch_size, cfg.seed);
    const long total_iters = long(cfg.epochs) * stream.batches_per_epoch();

    writer.write(json{{"config", config_to_json(cfg)}});

    Controls final_controls = init;
    double compute_seconds = 0.0;
    using clock = std::chrono::steady_clock;

    if (cfg.mode == RunMode::Serial) {
        Controls controls = init;
        const long chunk = cfg.eval_every > 0 ? cfg.eval_every : total_iters;
        long k = 0;
        while (k < total_iters) {
            const long step = std::min(chunk, total_iters - k);
            const auto t0 = clock::now();
            SerialResult res = serial_train(spec, std::move(controls), ds, stream,
                                            {cfg.lr, cfg.lr_decay_k0}, step, {}, k);
            compute_seconds += std::chrono::duration<double>(clock::now() - t0).count();
            controls = std::move(res.controls);
            for (const auto& it : res.history)
                writer.write(json{{"round", it.iter}, {"loss", it.loss}, {"eta", it.eta}});
            if (cfg.eval_every > 0) {
                EvalResult ev = evaluate(spec, controls, ds);
                writer.write(json{{"eval_at", k + step},
                                  {"train_accuracy", ev.accuracy},
                                  {"train_loss", ev.loss}});
            }
            k += step;
        }
        final_controls = std::move(controls);
    } else {
        ParallelOptions opts;
        opts.n_rounds = total_iters;
        opts.batch_size = cfg.batch_size;
        opts.seed = cfg.seed;
        opts.lr = {cfg.lr, cfg.lr_decay_k0};
        opts.ridge = cfg.ridge;
        opts.window_capacity = std::size_t(cfg.window);
        opts.multilevel = (cfg.level == LevelMode::Multilevel);
        opts.coarse = {cfg.coarsening, cfg.coarse_iters, LrSchedule{cfg.coarse_lr, 0.0}};
        opts.lockstep = (cfg.mode == RunMode::LockstepOracle);
        opts.eval_every = cfg.eval_every;
        SegmentPlan plan = make_plan(spec, cfg.segments, cfg.splits,
                                     opts.multilevel ? cfg.coarsening : 1);
        const auto t0 = clock::now();
        ParallelResult res = parallel_train(spec, plan, ds, init, opts);
        compute_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        for (const auto& rec : res.rounds) writer.write(round_to_json(rec));
        final_controls = std::move(res.controls);
    }

    EvalResult final_eval = evaluate(spec, final_controls, ds);
    writer.write(json{{"summary",
                       {{"rounds", total_iters},
                        {"total_seconds", compute_seconds},
                        {"final_train_accuracy", final_eval.accuracy},
                        {"final_train_loss", final_eval.loss},
                        {"controls_checksum", controls_checksum(final_controls)}}}});
    return final_controls;
}

struct RunDigest {
    json config;
    json summary;
    std::vector<json> rounds;
};

inline RunDigest digest_metrics(const std::string& path) {
    RunDigest d;
    for (auto& rec : read_jsonl(path)) {
        if (rec.contains("config")) d.config = rec["config"];
        else if (rec.contains("summary")) d.summary = rec["summary"];
        else if (rec.contains("round")) d.rounds.push_back(rec);
    }
    if (d.config.is_null() || d.summary.is_null())
        throw FormatError("metrics file missing config or summary record: " + path);
    return d;
}

// Speedup / efficiency / accuracy table against the first file as baseline,
// followed by per-round regression-MSE series for files that carry them.
inline std::string compare_report(const std::vector<std::string>& paths) {
    require(!paths.empty(), "compare_report: no input files");
    std::vector<RunDigest> runs;
    for (const auto& p : paths) runs.push_back(digest_metrics(p));

    const RunDigest& base = runs.front();
    std::ostringstream out;
    out << "file,mode,level,scheme,layers,segments,seconds,speedup,efficiency,"
           "final_accuracy,accuracy_delta,compatible\n";
    const double base_secs = base.summary["total_seconds"].get<double>();
    const double base_acc = base.summary["final_train_accuracy"].get<double>();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const bool compatible =
            r.config["dataset"] == base.config["dataset"] &&
            r.config["layers"] == base.config["layers"];
        const double secs = r.summary["total_seconds"].get<double>();
        const double acc = r.summary["final_train_accuracy"].get<double>();
        const std::string mode = r.config["mode"].get<std::string>();
        const int K = (mode == "serial") ? 1 : r.config["segments"].get<int>();
        const double speedup = secs > 0.0 ? base_secs / secs : 0.0;
        out << paths[i] << ',' << mode << ',' << r.config["level"].get<std::string>()
            << ',' << r.config["scheme"].get<std::string>() << ','
            << r.config["layers"].get<int>() << ',' << K << ',' << secs << ','
            << speedup << ',' << speedup / K << ',' << acc << ',' << (acc - base_acc)
            << ',' << (compatible ? "yes" : "INCOMPATIBLE") << '\n';
    }

    bool any_mse = false;
    for (const auto& r : runs)
        for (const auto& rec : r.rounds)
            if (rec.contains("fit_mse")) { any_mse = true; break; }
    if (any_mse) {
        out << "\nfit_mse_series\nfile,round,mean_fit_mse\n";
        for (std::size_t i = 0; i < runs.size(); ++i) {
            for (const auto& rec : runs[i].rounds) {
                if (!rec.contains("fit_mse")) continue;
                double sum = 0.0;
                int n = 0;
                for (const auto& [_, v] : rec["fit_mse"].items()) {
                    sum += v.get<double>();
                    ++n;
                }
                out << paths[i] << ',' << rec["round"].get<long>() << ','
                    << (n ? sum / n : 0.0) << '\n';
            }
        }
    }
    return out.str();
}

}  // namespace timepar
