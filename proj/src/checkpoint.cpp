#include "stcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "stcnn/errors.hpp"

namespace stcnn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts are unsupported");

constexpr char kMagic[8] = {'S', 'T', 'C', 'N', 'N', 'C', 'K', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_i64(std::ofstream& out, std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_str(std::ofstream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::int64_t read_i64(std::ifstream& in) {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

std::string read_str(std::ifstream& in) {
    const std::uint32_t n = read_u32(in);
    if (n > (1u << 20)) {
        throw FormatError("checkpoint: unreasonable string length");
    }
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write checkpoint " + path.string());
    }
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, 1);  // format version
    write_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        write_str(out, k);
        write_str(out, v);
    }
    write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        write_str(out, name);
        out.put(static_cast<char>(t.dtype() == DType::f32 ? 0 : 1));
        write_u32(out, static_cast<std::uint32_t>(t.shape().size()));
        for (const auto e : t.shape()) {
            write_i64(out, e);
        }
        out.write(reinterpret_cast<const char*>(t.node()->value.raw()),
                  static_cast<std::streamsize>(t.node()->value.raw_bytes()));
    }
    if (!out) {
        throw FormatError("short write on checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot read checkpoint " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a checkpoint file: " + path.string());
    }
    const std::uint32_t version = read_u32(in);
    if (version != 1) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " +
                          path.string());
    }
    Checkpoint ckpt;
    const std::uint32_t meta_n = read_u32(in);
    for (std::uint32_t i = 0; i < meta_n; ++i) {
        std::string k = read_str(in);
        std::string v = read_str(in);
        ckpt.meta.emplace(std::move(k), std::move(v));
    }
    const std::uint32_t tensor_n = read_u32(in);
    for (std::uint32_t i = 0; i < tensor_n; ++i) {
        std::string name = read_str(in);
        const int dtype_tag = in.get();
        if (dtype_tag != 0 && dtype_tag != 1) {
            throw FormatError("checkpoint: bad dtype tag in " + path.string());
        }
        const DType dtype = dtype_tag == 0 ? DType::f32 : DType::f64;
        const std::uint32_t ndim = read_u32(in);
        if (ndim > 8) {
            throw FormatError("checkpoint: unreasonable rank in " + path.string());
        }
        Shape shape(ndim);
        for (auto& e : shape) {
            e = read_i64(in);
            if (e <= 0) {
                throw FormatError("checkpoint: non-positive extent in " + path.string());
            }
        }
        Tensor t = Tensor::zeros(shape, dtype, false);
        detail::dispatch(dtype, [&](auto tag) {
            using T = decltype(tag);
            auto& buf = t.node()->value.as<T>();
            in.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(buf.size() * sizeof(T)));
        });
        if (!in) {
            throw FormatError("truncated checkpoint " + path.string());
        }
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void load_state(std::vector<std::pair<std::string, Tensor>> dst, const Checkpoint& src,
                const std::string& prefix) {
    for (auto& [name, t] : dst) {
        const std::string key = prefix + name;
        const Tensor* found = nullptr;
        for (const auto& [sname, st] : src.tensors) {
            if (sname == key) {
                found = &st;
                break;
            }
        }
        if (found == nullptr) {
            throw FormatError("checkpoint lacks tensor '" + key + "'");
        }
        if (found->shape() != t.shape()) {
            throw DimensionError("checkpoint tensor '" + key + "' has shape " +
                                 shape_str(found->shape()) + ", model expects " +
                                 shape_str(t.shape()));
        }
        const auto vals = found->values();
        t.assign(vals);
    }
}

}  // namespace stcnn
