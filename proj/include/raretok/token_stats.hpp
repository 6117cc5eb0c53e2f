#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raretok/tensor_io.hpp"

namespace raretok {

enum class TokenClass : uint8_t { Excluded = 0, Rare = 1, Common = 2 };

const char* token_class_name(TokenClass c);
TokenClass token_class_from_name(const std::string& name);

// Vocabulary partition derived from unigram counts. Tokens whose frequency
// falls below the elbow of the rank-frequency curve are excluded; the
// survivors are split at a frequency quantile into rare and common.
struct TokenClassSplit {
    std::vector<int64_t> freq;
    int64_t elbow_rank = 0;
    bool elbow_found = false;
    double percentile_cut = 0.15;
    std::vector<TokenClass> classes;

    std::vector<uint32_t> ids_in_class(TokenClass c) const;
    int64_t class_size(TokenClass c) const;
};

std::vector<int64_t> count_frequencies(const TokenStream& stream);

// Log frequencies of the positive-count tokens, sorted descending. This is
// the curve detect_elbow operates on.
std::vector<double> descending_log_frequencies(const std::vector<int64_t>& freq);

struct ElbowResult {
    int64_t rank = 0;    // index into the descending curve
    bool found = false;  // false: no bend detected, rank points at the curve end
};

// Locates the rank in the lower half of the curve where the downward bend is
// sharpest, measured by the discrete second difference averaged over a
// centered window. A straight line has no bend and yields found = false.
ElbowResult detect_elbow(const std::vector<double>& sorted_log_freq, int window = 51);

TokenClassSplit split_classes(const std::vector<int64_t>& freq, const ElbowResult& elbow,
                              double percentile = 0.15);

// split.json round trip. Classes are run-length encoded as [length, name]
// pairs; freq is not persisted.
std::string split_to_json(const TokenClassSplit& split);
TokenClassSplit split_from_json(const std::string& text);
void save_split(const TokenClassSplit& split, const std::string& path);
TokenClassSplit load_split(const std::string& path);

}  // namespace raretok
