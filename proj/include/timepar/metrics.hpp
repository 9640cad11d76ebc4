#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "timepar/parallel.hpp"

namespace timepar {

using json = nlohmann::json;

inline json round_to_json(const RoundRecord& rec) {
    json j;
    j["round"] = rec.round;
    j["loss"] = rec.loss;
    j["eta"] = rec.eta;
    j["segment_seconds"] = rec.segment_seconds;
    if (!rec.fit_mse.empty()) {
        json mse = json::object();
        for (const auto& [s, v] : rec.fit_mse) mse[std::to_string(s)] = v;
        j["fit_mse"] = mse;
    }
    if (!rec.epsilon.empty()) {
        json eps = json::object();
        for (const auto& [s, v] : rec.epsilon) {
            if (v) eps[std::to_string(s)] = *v;
            else eps[std::to_string(s)] = nullptr;  // undefined marker
        }
        j["epsilon_p"] = eps;
    }
    if (rec.objective) j["objective"] = *rec.objective;
    if (rec.train_accuracy) j["train_accuracy"] = *rec.train_accuracy;
    if (rec.train_loss) j["train_loss"] = *rec.train_loss;
    return j;
}

// Append-only JSON Lines writer; first record is the run configuration.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path) : out_(path) {
        if (!out_) throw FormatError("cannot open metrics file for writing: " + path);
    }

    void write(const json& record) {
        out_ << record.dump() << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

inline std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open metrics file: " + path);
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(json::parse(line));
    }
    return records;
}

}  // namespace timepar
