#include "raretok/token_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "raretok/common.hpp"

namespace raretok {

const char* token_class_name(TokenClass c) {
    switch (c) {
        case TokenClass::Excluded: return "excluded";
        case TokenClass::Rare: return "rare";
        case TokenClass::Common: return "common";
    }
    fail(ErrorCode::ConfigError, "unknown token class");
}

TokenClass token_class_from_name(const std::string& name) {
    if (name == "excluded") return TokenClass::Excluded;
    if (name == "rare") return TokenClass::Rare;
    if (name == "common") return TokenClass::Common;
    fail(ErrorCode::ConfigError, "unknown token class '" + name + "'");
}

std::vector<uint32_t> TokenClassSplit::ids_in_class(TokenClass c) const {
    std::vector<uint32_t> ids;
    for (size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == c) ids.push_back(static_cast<uint32_t>(i));
    }
    return ids;
}

int64_t TokenClassSplit::class_size(TokenClass c) const {
    return std::count(classes.begin(), classes.end(), c);
}

std::vector<int64_t> count_frequencies(const TokenStream& stream) {
    stream.validate();
    std::vector<int64_t> counts(stream.vocab_size, 0);
    for (uint32_t id : stream.ids) counts[id] += 1;
    return counts;
}

std::vector<double> descending_log_frequencies(const std::vector<int64_t>& freq) {
    std::vector<int64_t> positive;
    positive.reserve(freq.size());
    for (int64_t c : freq) {
        if (c > 0) positive.push_back(c);
    }
    if (positive.empty()) {
        fail(ErrorCode::DegenerateVocabulary, "no token occurs in the corpus");
    }
    std::sort(positive.begin(), positive.end(), std::greater<int64_t>());
    std::vector<double> curve(positive.size());
    for (size_t i = 0; i < positive.size(); ++i) {
        curve[i] = std::log(static_cast<double>(positive[i]));
    }
    return curve;
}

ElbowResult detect_elbow(const std::vector<double>& sorted_log_freq, int window) {
    if (window < 1) fail(ErrorCode::ConfigError, "elbow window must be positive");
    const int64_t n = static_cast<int64_t>(sorted_log_freq.size());
    if (n <= 2 * static_cast<int64_t>(window)) {
        fail(ErrorCode::CurveTooShort,
             "frequency curve has " + std::to_string(n) + " points, need more than " +
                 std::to_string(2 * window));
    }
    const auto& f = sorted_log_freq;
    // Downward bend strength at rank s. Positive where the slope steepens.
    auto bend = [&](int64_t s) { return -(f[s - 1] - 2.0 * f[s] + f[s + 1]); };

    const int64_t half = window / 2;
    const int64_t lo = std::max<int64_t>(n / 2, 1 + half);
    const int64_t hi = n - 2 - half;
    ElbowResult result{n - 1, false};
    double best = 0.0;
    for (int64_t r = lo; r <= hi; ++r) {
        double acc = 0.0;
        for (int64_t s = r - half; s <= r + half; ++s) acc += bend(s);
        const double curvature = acc / static_cast<double>(2 * half + 1);
        if (curvature > best) {
            best = curvature;
            result.rank = r;
        }
    }
    // A perfectly straight line leaves best at the noise floor.
    result.found = best > 1e-9;
    if (!result.found) result.rank = n - 1;
    return result;
}

TokenClassSplit split_classes(const std::vector<int64_t>& freq, const ElbowResult& elbow,
                              double percentile) {
    if (!(percentile > 0.0 && percentile < 1.0)) {
        fail(ErrorCode::ConfigError, "percentile must lie in (0, 1)");
    }
    std::vector<int64_t> positive;
    for (int64_t c : freq) {
        if (c > 0) positive.push_back(c);
    }
    if (positive.empty()) {
        fail(ErrorCode::DegenerateVocabulary, "no token occurs in the corpus");
    }
    std::sort(positive.begin(), positive.end(), std::greater<int64_t>());
    if (elbow.rank < 0 || elbow.rank >= static_cast<int64_t>(positive.size())) {
        fail(ErrorCode::ConfigError, "elbow rank outside the frequency curve");
    }
    // Classes depend only on each token's count, so relabeling token ids
    // permutes the partition and nothing else.
    const int64_t cutoff = positive[elbow.rank];

    std::vector<int64_t> survivors;
    for (int64_t c : positive) {
        if (c >= cutoff) survivors.push_back(c);
    }
    if (survivors.empty()) {
        fail(ErrorCode::DegenerateVocabulary, "elbow cutoff excludes every token");
    }
    std::sort(survivors.begin(), survivors.end());
    const auto k = static_cast<size_t>(percentile * static_cast<double>(survivors.size()));
    const int64_t quantile = survivors[std::min(k, survivors.size() - 1)];

    TokenClassSplit split;
    split.freq = freq;
    split.elbow_rank = elbow.rank;
    split.elbow_found = elbow.found;
    split.percentile_cut = percentile;
    split.classes.resize(freq.size(), TokenClass::Excluded);
    for (size_t i = 0; i < freq.size(); ++i) {
        if (freq[i] < cutoff) continue;
        split.classes[i] = freq[i] < quantile ? TokenClass::Rare : TokenClass::Common;
    }
    return split;
}

std::string split_to_json(const TokenClassSplit& split) {
    nlohmann::ordered_json doc;
    doc["vocab_size"] = split.classes.size();
    doc["elbow_rank"] = split.elbow_rank;
    doc["elbow_found"] = split.elbow_found;
    doc["percentile"] = split.percentile_cut;
    auto runs = nlohmann::ordered_json::array();
    size_t i = 0;
    while (i < split.classes.size()) {
        size_t j = i;
        while (j < split.classes.size() && split.classes[j] == split.classes[i]) ++j;
        runs.push_back({j - i, token_class_name(split.classes[i])});
        i = j;
    }
    doc["classes"] = std::move(runs);
    return doc.dump(2) + "\n";
}

TokenClassSplit split_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedHeader, std::string("split.json is not valid JSON: ") + e.what());
    }
    TokenClassSplit split;
    try {
        const auto vocab = doc.at("vocab_size").get<size_t>();
        split.elbow_rank = doc.at("elbow_rank").get<int64_t>();
        split.elbow_found = doc.value("elbow_found", true);
        split.percentile_cut = doc.at("percentile").get<double>();
        split.classes.reserve(vocab);
        for (const auto& run : doc.at("classes")) {
            const auto length = run.at(0).get<size_t>();
            const TokenClass c = token_class_from_name(run.at(1).get<std::string>());
            split.classes.insert(split.classes.end(), length, c);
        }
        if (split.classes.size() != vocab) {
            fail(ErrorCode::MalformedHeader, "class runs do not cover the vocabulary");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedHeader, std::string("split.json missing fields: ") + e.what());
    }
    return split;
}

void save_split(const TokenClassSplit& split, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
    out << split_to_json(split);
    if (!out) fail(ErrorCode::IoFailure, "short write to '" + path + "'");
}

TokenClassSplit load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return split_from_json(text);
}

}  // namespace raretok
