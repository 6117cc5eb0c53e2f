#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace raretok {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Every failure the library reports carries one of these codes. The CLI maps
// the category to its exit code (config=2, data=3, numeric=4).
enum class ErrorCode {
    // container / stream I/O
    MalformedHeader,
    ShapeMismatch,
    MissingTensor,
    IoFailure,
    DtypeUnsupported,
    NonFiniteValue,
    OutOfRangeTokenId,
    CorruptBoundaryTable,
    // engine
    ContextOverflow,
    InvalidIntervention,
    LengthMismatch,
    EmptyReferenceSet,
    // token stats
    CurveTooShort,
    DegenerateVocabulary,
    // estimators
    AllZeroWeights,
    ConstantInput,
    DegenerateSample,
    ZeroVariance,
    NonPositiveValue,
    SpectrumTooSmall,
    DegenerateTail,
    EmptyGraph,
    LabelOutOfRange,
    // pipelines
    EmptyTokenClass,
    InsufficientPositiveMass,
    GroupTooSmall,
    TooFewLayers,
    InfeasibleStream,
    // cli
    ConfigError,
};

enum class ErrorCategory { Config, Data, Numeric };

ErrorCategory error_category(ErrorCode code);
const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code),
          detail_(message) {}

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return error_category(code_); }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

// Seeded normal sampler with a fixed Box-Muller implementation so generated
// fixtures are bit-identical across standard libraries.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_open();
        double u2 = uniform_open();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // uniform in (0, 1]
    double uniform_open() {
        return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    std::uint64_t next_u64() { return rng_(); }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Static chunking over [0, n); each index is processed exactly once and
// results must go to pre-indexed slots, so output is independent of the
// thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

// FNV-1a over a byte range, used for input fingerprints in reports.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string fnv1a64_file_hex(const std::string& path);

std::string format_double(double v, int significant = 17);

}  // namespace raretok
