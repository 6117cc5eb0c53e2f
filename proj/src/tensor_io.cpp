#include "raretok/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace raretok {

using json = nlohmann::ordered_json;

const char* dtype_name(Dtype dt) {
    switch (dt) {
        case Dtype::F32: return "F32";
        case Dtype::F64: return "F64";
        case Dtype::U32: return "U32";
    }
    return "?";
}

std::size_t dtype_size(Dtype dt) {
    return dt == Dtype::F64 ? 8 : 4;
}

static Dtype dtype_from_name(const std::string& s) {
    if (s == "F32") return Dtype::F32;
    if (s == "F64") return Dtype::F64;
    if (s == "U32") return Dtype::U32;
    fail(ErrorCode::DtypeUnsupported, "dtype " + s);
}

std::size_t TensorRecord::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d < 0) fail(ErrorCode::ShapeMismatch, name + ": negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Matrix TensorRecord::as_matrix() const {
    if (shape.size() != 2 || !is_float())
        fail(ErrorCode::ShapeMismatch, name + ": expected 2-d float tensor");
    Matrix m(shape[0], shape[1]);
    for (std::int64_t r = 0; r < shape[0]; ++r)
        for (std::int64_t c = 0; c < shape[1]; ++c)
            m(r, c) = fdata[static_cast<std::size_t>(r * shape[1] + c)];
    return m;
}

Vector TensorRecord::as_vector() const {
    if (shape.size() != 1 || !is_float())
        fail(ErrorCode::ShapeMismatch, name + ": expected 1-d float tensor");
    Vector v(shape[0]);
    for (std::int64_t i = 0; i < shape[0]; ++i) v(i) = fdata[static_cast<std::size_t>(i)];
    return v;
}

TensorRecord TensorRecord::from_matrix(const std::string& name, const Matrix& m, Dtype dt) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = dt;
    rec.shape = {m.rows(), m.cols()};
    rec.fdata.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            rec.fdata[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return rec;
}

TensorRecord TensorRecord::from_vector(const std::string& name, const Vector& v, Dtype dt) {
    TensorRecord rec;
    rec.name = name;
    rec.dtype = dt;
    rec.shape = {v.size()};
    rec.fdata.assign(v.data(), v.data() + v.size());
    return rec;
}

void ArchDescriptor::validate() const {
    if (n_layers < 1) fail(ErrorCode::MalformedHeader, "arch: n_layers must be >= 1");
    if (d_model < 1 || d_mlp < d_model)
        fail(ErrorCode::MalformedHeader, "arch: requires d_mlp >= d_model >= 1");
    if (vocab_size < 2) fail(ErrorCode::MalformedHeader, "arch: vocab_size must be >= 2");
    if (n_heads < 1 || d_model % n_heads != 0)
        fail(ErrorCode::MalformedHeader, "arch: d_model must be divisible by n_heads");
    if (max_context < 2) fail(ErrorCode::MalformedHeader, "arch: max_context must be >= 2");
    if (activation != "gelu") fail(ErrorCode::MalformedHeader, "arch: unsupported activation " + activation);
    if (norm != "pre_layernorm") fail(ErrorCode::MalformedHeader, "arch: unsupported norm " + norm);
}

std::string ArchDescriptor::to_json() const {
    json j;
    j["n_layers"] = n_layers;
    j["d_model"] = d_model;
    j["d_mlp"] = d_mlp;
    j["n_heads"] = n_heads;
    j["vocab_size"] = vocab_size;
    j["max_context"] = max_context;
    j["activation"] = activation;
    j["norm"] = norm;
    return j.dump();
}

ArchDescriptor ArchDescriptor::from_json(const std::string& text) {
    ArchDescriptor a;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedHeader, std::string("arch json: ") + e.what());
    }
    try {
        a.n_layers = j.at("n_layers").get<int>();
        a.d_model = j.at("d_model").get<int>();
        a.d_mlp = j.at("d_mlp").get<int>();
        a.n_heads = j.at("n_heads").get<int>();
        a.vocab_size = j.at("vocab_size").get<int>();
        a.max_context = j.at("max_context").get<int>();
        a.activation = j.value("activation", "gelu");
        a.norm = j.value("norm", "pre_layernorm");
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedHeader, std::string("arch json: ") + e.what());
    }
    a.validate();
    return a;
}

std::vector<std::string> required_tensor_names(const ArchDescriptor& arch) {
    std::vector<std::string> names;
    names.push_back("embed.wte");
    names.push_back("unembed.weight");
    for (int l = 0; l < arch.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        names.push_back(p + "attn.w_qkv");
        names.push_back(p + "attn.b_qkv");
        names.push_back(p + "attn.w_out");
        names.push_back(p + "attn.b_out");
        names.push_back(p + "mlp.w_in");
        names.push_back(p + "mlp.b_in");
        names.push_back(p + "mlp.w_out");
        names.push_back(p + "mlp.b_out");
    }
    return names;
}

std::vector<std::string> optional_tensor_names(const ArchDescriptor& arch) {
    std::vector<std::string> names;
    names.push_back("embed.wpe");
    for (int l = 0; l < arch.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l) + ".";
        names.push_back(p + "ln1.weight");
        names.push_back(p + "ln1.bias");
        names.push_back(p + "ln2.weight");
        names.push_back(p + "ln2.bias");
    }
    names.push_back("ln_f.weight");
    names.push_back("ln_f.bias");
    return names;
}

std::optional<std::vector<std::int64_t>> canonical_shape(const ArchDescriptor& arch, const std::string& name) {
    const std::int64_t d = arch.d_model;
    const std::int64_t m = arch.d_mlp;
    const std::int64_t v = arch.vocab_size;
    if (name == "embed.wte") return {{v, d}};
    if (name == "embed.wpe") return {{arch.max_context, d}};
    if (name == "unembed.weight") return {{d, v}};
    if (name == "ln_f.weight" || name == "ln_f.bias") return {{d}};
    if (name.rfind("layer", 0) != 0) return std::nullopt;
    auto dot = name.find('.');
    if (dot == std::string::npos) return std::nullopt;
    int layer = -1;
    try {
        layer = std::stoi(name.substr(5, dot - 5));
    } catch (...) {
        return std::nullopt;
    }
    if (layer < 0 || layer >= arch.n_layers) return std::nullopt;
    std::string rest = name.substr(dot + 1);
    if (rest == "attn.w_qkv") return {{d, 3 * d}};
    if (rest == "attn.b_qkv") return {{3 * d}};
    if (rest == "attn.w_out") return {{d, d}};
    if (rest == "attn.b_out") return {{d}};
    if (rest == "mlp.w_in") return {{m, d}};
    if (rest == "mlp.b_in") return {{m}};
    if (rest == "mlp.w_out") return {{d, m}};
    if (rest == "mlp.b_out") return {{d}};
    if (rest == "ln1.weight" || rest == "ln1.bias" || rest == "ln2.weight" || rest == "ln2.bias") return {{d}};
    return std::nullopt;
}

const TensorRecord& ModelBundle::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorCode::MissingTensor, name);
    return it->second;
}

Matrix ModelBundle::matrix(const std::string& name) const {
    return tensor(name).as_matrix();
}

Vector ModelBundle::vector_or(const std::string& name, int size, double fill) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) return Vector::Constant(size, fill);
    Vector v = it->second.as_vector();
    if (v.size() != size) fail(ErrorCode::ShapeMismatch, name);
    return v;
}

void ModelBundle::validate() const {
    arch.validate();
    for (const auto& name : required_tensor_names(arch)) {
        auto it = tensors.find(name);
        if (it == tensors.end()) fail(ErrorCode::MissingTensor, name);
    }
    for (const auto& [name, rec] : tensors) {
        auto want = canonical_shape(arch, name);
        if (want && *want != rec.shape) {
            fail(ErrorCode::ShapeMismatch, name + ": declared shape does not match architecture");
        }
        std::size_t n = rec.element_count();
        std::size_t have = rec.is_float() ? rec.fdata.size() : rec.udata.size();
        if (n != have) fail(ErrorCode::ShapeMismatch, name + ": buffer size vs shape");
    }
}

void TokenStream::validate() const {
    if (vocab_size == 0) fail(ErrorCode::CorruptBoundaryTable, "vocab_size missing");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= vocab_size)
            fail(ErrorCode::OutOfRangeTokenId,
                 "id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                     " with vocab " + std::to_string(vocab_size));
    }
    std::size_t prev = 0;
    for (std::size_t i = 0; i < doc_boundaries.size(); ++i) {
        std::size_t b = doc_boundaries[i];
        if (b > ids.size() || (i > 0 && b <= prev) || b == 0)
            fail(ErrorCode::CorruptBoundaryTable, "boundary " + std::to_string(b));
        prev = b;
    }
    if (!ids.empty() && (doc_boundaries.empty() || doc_boundaries.back() != ids.size()))
        fail(ErrorCode::CorruptBoundaryTable, "last boundary must equal stream length");
}

// --- low-level file helpers ---------------------------------------------

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t len) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) fail(ErrorCode::IoFailure, "short write");
}

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
    auto size = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size));
    in.read(buf.data(), size);
    if (!in) fail(ErrorCode::IoFailure, "short read on " + path);
    return buf;
}

void encode_payload(const TensorRecord& rec, std::vector<unsigned char>& out) {
    if (rec.dtype == Dtype::F32) {
        for (double d : rec.fdata) {
            float f = static_cast<float>(d);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            out.insert(out.end(), b, b + 4);
        }
    } else if (rec.dtype == Dtype::F64) {
        for (double d : rec.fdata) {
            unsigned char b[8];
            std::memcpy(b, &d, 8);
            out.insert(out.end(), b, b + 8);
        }
    } else {
        for (std::uint32_t u : rec.udata) {
            unsigned char b[4];
            std::memcpy(b, &u, 4);
            out.insert(out.end(), b, b + 4);
        }
    }
}

void decode_payload(TensorRecord& rec, const char* bytes, std::size_t len) {
    std::size_t n = rec.element_count();
    if (len != n * dtype_size(rec.dtype))
        fail(ErrorCode::ShapeMismatch, rec.name + ": payload size vs declared shape");
    if (rec.dtype == Dtype::F32) {
        rec.fdata.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, bytes + 4 * i, 4);
            rec.fdata[i] = static_cast<double>(f);
        }
    } else if (rec.dtype == Dtype::F64) {
        rec.fdata.resize(n);
        std::memcpy(rec.fdata.data(), bytes, n * 8);
    } else {
        rec.udata.resize(n);
        std::memcpy(rec.udata.data(), bytes, n * 4);
    }
}

}  // namespace

void save_container(const std::string& path,
                    const std::vector<TensorRecord>& tensors,
                    const std::map<std::string, std::string>& metadata) {
    json header;
    if (!metadata.empty()) {
        json meta;
        for (const auto& [k, v] : metadata) meta[k] = v;
        header["__metadata__"] = meta;
    }
    std::vector<unsigned char> payload;
    std::map<std::string, bool> seen;
    for (const auto& rec : tensors) {
        if (seen.count(rec.name)) fail(ErrorCode::MalformedHeader, "duplicate tensor " + rec.name);
        seen[rec.name] = true;
        std::size_t n = rec.element_count();
        std::size_t have = rec.is_float() ? rec.fdata.size() : rec.udata.size();
        if (n != have) fail(ErrorCode::ShapeMismatch, rec.name + ": buffer size vs shape");
        if (rec.is_float()) {
            for (double v : rec.fdata)
                if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, rec.name + ": non-finite value");
        }
        std::size_t begin = payload.size();
        encode_payload(rec, payload);
        json entry;
        entry["dtype"] = dtype_name(rec.dtype);
        entry["shape"] = rec.shape;
        entry["data_offsets"] = {begin, payload.size()};
        header[rec.name] = entry;
    }
    std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoFailure, "cannot create " + path);
    std::uint64_t hlen = header_text.size();
    unsigned char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>((hlen >> (8 * i)) & 0xff);
    write_bytes(out, lenb, 8);
    write_bytes(out, header_text.data(), header_text.size());
    if (!payload.empty()) write_bytes(out, payload.data(), payload.size());
}

std::vector<TensorRecord> load_container(const std::string& path,
                                         std::map<std::string, std::string>* metadata) {
    std::vector<char> buf = read_all(path);
    if (buf.size() < 8) fail(ErrorCode::MalformedHeader, path + ": too short for header length");
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i)
        hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    if (8 + hlen > buf.size()) fail(ErrorCode::MalformedHeader, path + ": header length exceeds file");
    json header;
    try {
        header = json::parse(buf.begin() + 8, buf.begin() + 8 + static_cast<std::ptrdiff_t>(hlen));
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedHeader, path + ": " + e.what());
    }
    const char* payload = buf.data() + 8 + hlen;
    std::size_t payload_len = buf.size() - 8 - hlen;

    std::vector<TensorRecord> tensors;
    for (auto it = header.begin(); it != header.end(); ++it) {
        if (it.key() == "__metadata__") {
            if (metadata) {
                for (auto m = it.value().begin(); m != it.value().end(); ++m)
                    (*metadata)[m.key()] = m.value().get<std::string>();
            }
            continue;
        }
        const json& entry = it.value();
        TensorRecord rec;
        rec.name = it.key();
        try {
            rec.dtype = dtype_from_name(entry.at("dtype").get<std::string>());
            rec.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            auto offs = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offs.size() != 2 || offs[1] < offs[0] || offs[1] > payload_len)
                fail(ErrorCode::MalformedHeader, rec.name + ": bad data_offsets");
            decode_payload(rec, payload + offs[0], offs[1] - offs[0]);
        } catch (const json::exception& e) {
            fail(ErrorCode::MalformedHeader, rec.name + ": " + e.what());
        }
        tensors.push_back(std::move(rec));
    }
    return tensors;
}

ModelBundle load_model(const std::string& path) {
    std::map<std::string, std::string> metadata;
    auto tensors = load_container(path, &metadata);
    auto arch_it = metadata.find("arch");
    if (arch_it == metadata.end())
        fail(ErrorCode::MalformedHeader, path + ": missing arch metadata");
    ModelBundle bundle;
    bundle.arch = ArchDescriptor::from_json(arch_it->second);
    for (auto& rec : tensors) {
        std::string name = rec.name;
        bundle.tensors.emplace(std::move(name), std::move(rec));
    }
    bundle.validate();
    return bundle;
}

void save_model(const ModelBundle& bundle, const std::string& path) {
    bundle.validate();
    std::vector<TensorRecord> tensors;
    tensors.reserve(bundle.tensors.size());
    for (const auto& [name, rec] : bundle.tensors) tensors.push_back(rec);
    save_container(path, tensors, {{"arch", bundle.arch.to_json()}});
}

void save_activation_shard(const ActivationMatrix& matrix, const std::string& path) {
    if (matrix.dtype == Dtype::U32) fail(ErrorCode::DtypeUnsupported, "activation shards are float");
    if (!matrix.values.allFinite())
        fail(ErrorCode::NonFiniteValue, "activation shard has non-finite entries");
    TensorRecord rec = TensorRecord::from_matrix("activations", matrix.values, matrix.dtype);
    save_container(path, {rec});
}

ActivationMatrix load_activation_shard(const std::string& path) {
    auto tensors = load_container(path);
    for (auto& rec : tensors) {
        if (rec.name == "activations") {
            if (rec.shape.size() != 2) fail(ErrorCode::ShapeMismatch, "activations must be 2-d");
            ActivationMatrix m;
            m.rows = rec.shape[0];
            m.cols = rec.shape[1];
            m.dtype = rec.dtype;
            m.values = rec.as_matrix();
            return m;
        }
    }
    fail(ErrorCode::MissingTensor, "activations");
}

TokenStream load_token_stream(const std::string& path) {
    std::vector<char> raw = read_all(path);
    if (raw.size() % 4 != 0) fail(ErrorCode::MalformedHeader, path + ": length not a multiple of 4");
    TokenStream stream;
    stream.ids.resize(raw.size() / 4);
    if (!stream.ids.empty()) std::memcpy(stream.ids.data(), raw.data(), raw.size());

    std::string manifest_path = path + ".json";
    std::vector<char> mraw = read_all(manifest_path);
    json manifest;
    try {
        manifest = json::parse(mraw.begin(), mraw.end());
        stream.vocab_size = manifest.at("vocab_size").get<std::uint32_t>();
        stream.doc_boundaries = manifest.at("doc_boundaries").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptBoundaryTable, manifest_path + ": " + e.what());
    }
    stream.validate();
    return stream;
}

void save_token_stream(const TokenStream& stream, const std::string& path) {
    stream.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoFailure, "cannot create " + path);
    if (!stream.ids.empty())
        write_bytes(out, stream.ids.data(), stream.ids.size() * 4);
    json manifest;
    manifest["vocab_size"] = stream.vocab_size;
    manifest["doc_boundaries"] = stream.doc_boundaries;
    std::ofstream mout(path + ".json");
    if (!mout) fail(ErrorCode::IoFailure, "cannot create " + path + ".json");
    mout << manifest.dump(2) << "\n";
}

}  // namespace raretok
