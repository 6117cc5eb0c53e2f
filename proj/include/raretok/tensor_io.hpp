#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "raretok/common.hpp"

namespace raretok {

enum class Dtype { F32, F64, U32 };

const char* dtype_name(Dtype dt);
std::size_t dtype_size(Dtype dt);

// One named tensor from a container. Numeric payloads are widened to f64 in
// memory; the original dtype is kept so a save round-trips bit-exactly.
struct TensorRecord {
    std::string name;
    Dtype dtype = Dtype::F64;
    std::vector<std::int64_t> shape;

    std::vector<double> fdata;        // f32/f64 payloads (widened)
    std::vector<std::uint32_t> udata; // u32 payloads

    std::size_t element_count() const;
    bool is_float() const { return dtype != Dtype::U32; }

    // Row-major view as a matrix; requires a 2-d float tensor.
    Matrix as_matrix() const;
    Vector as_vector() const;

    static TensorRecord from_matrix(const std::string& name, const Matrix& m, Dtype dt = Dtype::F64);
    static TensorRecord from_vector(const std::string& name, const Vector& v, Dtype dt = Dtype::F64);
};

struct ArchDescriptor {
    int n_layers = 0;
    int d_model = 0;
    int d_mlp = 0;
    int n_heads = 0;
    int vocab_size = 0;
    int max_context = 0;
    std::string activation = "gelu";
    std::string norm = "pre_layernorm";

    void validate() const;
    std::string to_json() const;
    static ArchDescriptor from_json(const std::string& text);
};

// Weights plus architecture, immutable after load. Tensors live in a
// name-keyed map; required names derive from the architecture, layernorm
// and positional parameters are optional with identity/zero defaults.
struct ModelBundle {
    ArchDescriptor arch;
    std::map<std::string, TensorRecord> tensors;

    bool has(const std::string& name) const { return tensors.count(name) > 0; }
    const TensorRecord& tensor(const std::string& name) const;

    // Matrix accessors used by the engine; optional tensors fall back to
    // defaults (layernorm gain 1 / bias 0, zero positional embedding).
    Matrix matrix(const std::string& name) const;
    Vector vector_or(const std::string& name, int size, double fill) const;

    void validate() const;
};

// Canonical tensor names for the architecture. Required: token embedding,
// unembedding, and per layer the four attention and four MLP tensors.
std::vector<std::string> required_tensor_names(const ArchDescriptor& arch);
std::vector<std::string> optional_tensor_names(const ArchDescriptor& arch);
// Declared shape of a canonical tensor name, or nullopt if not canonical.
std::optional<std::vector<std::int64_t>> canonical_shape(const ArchDescriptor& arch, const std::string& name);

struct TokenStream {
    std::vector<std::uint32_t> ids;
    std::vector<std::size_t> doc_boundaries; // end offsets, strictly increasing, last == ids.size()
    std::uint32_t vocab_size = 0;

    void validate() const;
    std::size_t size() const { return ids.size(); }
    std::size_t document_count() const { return doc_boundaries.size(); }
};

struct ActivationMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    Dtype dtype = Dtype::F64;
    Matrix values;
};

// --- container I/O -----------------------------------------------------
//
// Containers are flat binary files in safetensors layout: a little-endian
// u64 header length, a JSON header mapping tensor name to
// {"dtype","shape","data_offsets"}, optional "__metadata__" string map,
// then the raw little-endian payload.

void save_container(const std::string& path,
                    const std::vector<TensorRecord>& tensors,
                    const std::map<std::string, std::string>& metadata = {});
std::vector<TensorRecord> load_container(const std::string& path,
                                         std::map<std::string, std::string>* metadata = nullptr);

ModelBundle load_model(const std::string& path);
void save_model(const ModelBundle& bundle, const std::string& path);

void save_activation_shard(const ActivationMatrix& matrix, const std::string& path);
ActivationMatrix load_activation_shard(const std::string& path);

// Token streams are raw little-endian u32 arrays; `path + ".json"` is the
// sidecar manifest carrying vocab_size and document boundaries.
TokenStream load_token_stream(const std::string& path);
void save_token_stream(const TokenStream& stream, const std::string& path);

}  // namespace raretok
