#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "timepar/common.hpp"
#include "timepar/model.hpp"

namespace timepar {

enum class RunMode { Serial, Parallel, LockstepOracle };
enum class LevelMode { Single, Multilevel };

struct ExperimentConfig {
    std::string dataset = "swissroll";   // "ellipse", "swissroll", or "mnist"
    std::string mnist_images;
    std::string mnist_labels;
    int n_per_class = 256;
    Scheme scheme = Scheme::Verlet;
    int n_layers = 32;
    int width = 4;
    double horizon = 0.0;  // 0: defaults to n_layers * 0.1
    int segments = 2;
    std::vector<int> splits;  // optional explicit split layers
    RunMode mode = RunMode::Serial;
    LevelMode level = LevelMode::Single;
    long coarse_iters = 20;
    int coarsening = 2;
    double coarse_lr = 0.1;
    double lr = 0.1;
    double lr_decay_k0 = 0.0;
    double weight_decay = 1e-4;
    double ridge = 1e-4;
    int window = 2048;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
    int eval_every = 0;
    std::string out = "metrics.jsonl";

    double effective_horizon() const {
        return horizon > 0.0 ? horizon : 0.1 * n_layers;
    }

    void validate() const {
        require(dataset == "ellipse" || dataset == "swissroll" || dataset == "mnist",
                "config: unknown dataset '" + dataset + "'");
        if (dataset == "mnist")
            require(!mnist_images.empty() && !mnist_labels.empty(),
                    "config: mnist requires mnist_images and mnist_labels paths");
        require(n_layers >= 1, "config: n_layers");
        require(width >= 2, "config: width");
        require(batch_size >= 1, "config: batch_size");
        require(epochs >= 0, "config: epochs");
        require(lr > 0.0, "config: lr");
        if (mode != RunMode::Serial) require(segments >= 2, "config: segments");
        if (level == LevelMode::Multilevel) {
            require(coarsening >= 2, "config: coarsening");
            require(n_layers % coarsening == 0, "config: coarsening must divide n_layers");
            for (int s : splits)
                require(s % coarsening == 0, "config: splits must sit on coarse nodes");
        }
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

// Flat TOML subset: `key = value` lines, # comments, quoted strings, numbers,
// booleans, and [a, b, c] integer arrays. Section headers are rejected.
inline std::map<std::string, std::string> parse_flat_toml(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t[0] == '[')
            throw FormatError("config line " + std::to_string(lineno) +
                              ": sections are not supported; use flat keys");
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        std::string val = detail::trim(t.substr(eq + 1));
        const auto hash = val.find(" #");
        if (hash != std::string::npos && val[0] != '"') val = detail::trim(val.substr(0, hash));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        kv[key] = val;
    }
    return kv;
}

inline std::vector<int> parse_int_list(const std::string& s) {
    std::string body = detail::trim(s);
    if (!body.empty() && body.front() == '[') body = body.substr(1, body.size() - 2);
    std::vector<int> out;
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = detail::trim(tok);
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                               const std::string& val) {
    auto as_long = [&](const std::string& v) { return std::stol(v); };
    auto as_double = [&](const std::string& v) { return std::stod(v); };
    if (key == "dataset") cfg.dataset = val;
    else if (key == "mnist_images") cfg.mnist_images = val;
    else if (key == "mnist_labels") cfg.mnist_labels = val;
    else if (key == "n_per_class") cfg.n_per_class = int(as_long(val));
    else if (key == "scheme") {
        if (val == "euler") cfg.scheme = Scheme::Euler;
        else if (val == "verlet") cfg.scheme = Scheme::Verlet;
        else throw FormatError("config: unknown scheme '" + val + "'");
    }
    else if (key == "layers") cfg.n_layers = int(as_long(val));
    else if (key == "width") cfg.width = int(as_long(val));
    else if (key == "horizon") cfg.horizon = as_double(val);
    else if (key == "segments") cfg.segments = int(as_long(val));
    else if (key == "splits") cfg.splits = parse_int_list(val);
    else if (key == "mode") {
        if (val == "serial") cfg.mode = RunMode::Serial;
        else if (val == "parallel") cfg.mode = RunMode::Parallel;
        else if (val == "lockstep-oracle") cfg.mode = RunMode::LockstepOracle;
        else throw FormatError("config: unknown mode '" + val + "'");
    }
    else if (key == "level") {
        if (val == "single") cfg.level = LevelMode::Single;
        else if (val == "multilevel") cfg.level = LevelMode::Multilevel;
        else throw FormatError("config: unknown level '" + val + "'");
    }
    else if (key == "coarse_iters") cfg.coarse_iters = as_long(val);
    else if (key == "coarsening") cfg.coarsening = int(as_long(val));
    else if (key == "coarse_lr") cfg.coarse_lr = as_double(val);
    else if (key == "lr") cfg.lr = as_double(val);
    else if (key == "lr_decay_k0") cfg.lr_decay_k0 = as_double(val);
    else if (key == "weight_decay") cfg.weight_decay = as_double(val);
    else if (key == "ridge") cfg.ridge = as_double(val);
    else if (key == "window") cfg.window = int(as_long(val));
    else if (key == "batch_size") cfg.batch_size = int(as_long(val));
    else if (key == "epochs") cfg.epochs = int(as_long(val));
    else if (key == "seed") cfg.seed = std::uint64_t(as_long(val));
    else if (key == "eval_every") cfg.eval_every = int(as_long(val));
    else if (key == "out") cfg.out = val;
    else throw FormatError("config: unknown key '" + key + "'");
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file: " + path);
    ExperimentConfig cfg;
    for (const auto& [k, v] : parse_flat_toml(in)) apply_config_entry(cfg, k, v);
    return cfg;
}

}  // namespace timepar
