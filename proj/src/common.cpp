#include "raretok/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

namespace raretok {

ErrorCategory error_category(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidIntervention:
            return ErrorCategory::Config;
        case ErrorCode::MalformedHeader:
        case ErrorCode::ShapeMismatch:
        case ErrorCode::MissingTensor:
        case ErrorCode::IoFailure:
        case ErrorCode::DtypeUnsupported:
        case ErrorCode::NonFiniteValue:
        case ErrorCode::OutOfRangeTokenId:
        case ErrorCode::CorruptBoundaryTable:
        case ErrorCode::ContextOverflow:
        case ErrorCode::LengthMismatch:
        case ErrorCode::EmptyReferenceSet:
        case ErrorCode::DegenerateVocabulary:
        case ErrorCode::EmptyTokenClass:
        case ErrorCode::GroupTooSmall:
        case ErrorCode::TooFewLayers:
        case ErrorCode::InfeasibleStream:
            return ErrorCategory::Data;
        default:
            return ErrorCategory::Numeric;
    }
}

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::MissingTensor: return "MissingTensor";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::DtypeUnsupported: return "DtypeUnsupported";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::OutOfRangeTokenId: return "OutOfRangeTokenId";
        case ErrorCode::CorruptBoundaryTable: return "CorruptBoundaryTable";
        case ErrorCode::ContextOverflow: return "ContextOverflow";
        case ErrorCode::InvalidIntervention: return "InvalidIntervention";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyReferenceSet: return "EmptyReferenceSet";
        case ErrorCode::CurveTooShort: return "CurveTooShort";
        case ErrorCode::DegenerateVocabulary: return "DegenerateVocabulary";
        case ErrorCode::AllZeroWeights: return "AllZeroWeights";
        case ErrorCode::ConstantInput: return "ConstantInput";
        case ErrorCode::DegenerateSample: return "DegenerateSample";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::NonPositiveValue: return "NonPositiveValue";
        case ErrorCode::SpectrumTooSmall: return "SpectrumTooSmall";
        case ErrorCode::DegenerateTail: return "DegenerateTail";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorCode::EmptyTokenClass: return "EmptyTokenClass";
        case ErrorCode::InsufficientPositiveMass: return "InsufficientPositiveMass";
        case ErrorCode::GroupTooSmall: return "GroupTooSmall";
        case ErrorCode::TooFewLayers: return "TooFewLayers";
        case ErrorCode::InfeasibleStream: return "InfeasibleStream";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "UnknownError";
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    std::size_t workers = threads <= 0 ? std::thread::hardware_concurrency() : static_cast<std::size_t>(threads);
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    workers = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi]() {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> guard(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a64_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

std::string format_double(double v, int significant) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
    return std::string(buf);
}

}  // namespace raretok
