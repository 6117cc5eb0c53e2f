#include "raretok/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "raretok/common.hpp"

namespace raretok {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

double parse_number(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0') {
        fail(ErrorCode::ConfigError, "config key '" + key + "' needs a number, got '" + value + "'");
    }
    return v;
}

std::int64_t parse_integer(const std::string& key, const std::string& value) {
    const double v = parse_number(key, value);
    const auto n = static_cast<std::int64_t>(v);
    if (static_cast<double>(n) != v) {
        fail(ErrorCode::ConfigError, "config key '" + key + "' needs an integer, got '" + value + "'");
    }
    return n;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    fail(ErrorCode::ConfigError, "config key '" + key + "' needs true or false, got '" + value + "'");
}

std::string parse_string(const std::string& key, const std::string& value) {
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        return value.substr(1, value.size() - 2);
    }
    if (!value.empty() && value.front() != '"') return value;
    fail(ErrorCode::ConfigError, "config key '" + key + "' has an unterminated string");
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value) {
    PipelineConfig& p = config.pipeline;
    if (key == "model") {
        config.model = parse_string(key, value);
    } else if (key == "corpus") {
        config.corpus = parse_string(key, value);
    } else if (key == "count_corpus") {
        config.count_corpus = parse_string(key, value);
    } else if (key == "out") {
        config.out = parse_string(key, value);
    } else if (key == "seed") {
        p.seed = static_cast<std::uint64_t>(parse_integer(key, value));
        config.seed_set = true;
    } else if (key == "threads") {
        p.threads = static_cast<int>(parse_integer(key, value));
    } else if (key == "eval_tokens") {
        p.eval_tokens = parse_integer(key, value);
    } else if (key == "percentile") {
        p.percentile = parse_number(key, value);
    } else if (key == "elbow_window") {
        p.elbow_window = static_cast<int>(parse_integer(key, value));
    } else if (key == "tau") {
        p.tau = parse_number(key, value);
    } else if (key == "bins") {
        p.bins = static_cast<int>(parse_integer(key, value));
    } else if (key == "baselines") {
        p.baselines = static_cast<int>(parse_integer(key, value));
    } else if (key == "restarts") {
        p.restarts = static_cast<int>(parse_integer(key, value));
    } else if (key == "resolution") {
        p.resolution = parse_number(key, value);
    } else if (key == "plateau_slope_max") {
        p.regimes.plateau_slope_max = parse_number(key, value);
    } else if (key == "gap_min") {
        p.regimes.gap_min = parse_number(key, value);
    } else if (key == "tail_ratio") {
        p.regimes.tail_ratio = parse_number(key, value);
    } else if (key == "spectral_use_w_out") {
        p.spectral_use_w_out = parse_bool(key, value);
    } else if (key == "geometry") {
        p.run_geometry = parse_bool(key, value);
    } else if (key == "graph") {
        p.run_graph = parse_bool(key, value);
    } else if (key == "attention") {
        p.run_attention = parse_bool(key, value);
    } else if (key == "spectral") {
        p.run_spectral = parse_bool(key, value);
    } else {
        fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    }
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open config file " + path);
    RunConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line.substr(0, line.find('#')));
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            fail(ErrorCode::ConfigError,
                 path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty()) {
            fail(ErrorCode::ConfigError,
                 path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        apply_config_entry(config, key, value);
    }
    return config;
}

void RunConfig::validate_io(bool need_model, bool need_corpus) const {
    if (need_model && model.empty()) fail(ErrorCode::ConfigError, "no model given");
    if (need_corpus && corpus.empty()) fail(ErrorCode::ConfigError, "no corpus given");
    if (!seed_set) fail(ErrorCode::ConfigError, "seed is required");
    pipeline.validate();
}

std::string RunConfig::resolved_json() const {
    nlohmann::ordered_json doc;
    doc["seed"] = pipeline.seed;
    doc["percentile"] = pipeline.percentile;
    doc["elbow_window"] = pipeline.elbow_window;
    doc["eval_tokens"] = pipeline.eval_tokens;
    doc["tau"] = pipeline.tau;
    doc["bins"] = pipeline.bins;
    doc["baselines"] = pipeline.baselines;
    doc["restarts"] = pipeline.restarts;
    doc["resolution"] = pipeline.resolution;
    doc["plateau_slope_max"] = pipeline.regimes.plateau_slope_max;
    doc["gap_min"] = pipeline.regimes.gap_min;
    doc["tail_ratio"] = pipeline.regimes.tail_ratio;
    doc["spectral_use_w_out"] = pipeline.spectral_use_w_out;
    doc["geometry"] = pipeline.run_geometry;
    doc["graph"] = pipeline.run_graph;
    doc["attention"] = pipeline.run_attention;
    doc["spectral"] = pipeline.run_spectral;
    return doc.dump();
}

std::vector<int> parse_group_list(const std::string& text) {
    std::vector<int> group;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        char* end = nullptr;
        const long v = std::strtol(t.c_str(), &end, 10);
        if (end == t.c_str() || *end != '\0' || v < 0) {
            fail(ErrorCode::ConfigError, "bad neuron index '" + t + "' in group list");
        }
        group.push_back(static_cast<int>(v));
    }
    if (group.empty()) fail(ErrorCode::ConfigError, "empty neuron group");
    return group;
}

}  // namespace raretok
