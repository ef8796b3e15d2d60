#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "modnet/model.hpp"

namespace modnet {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t lo = get_u32(is);
    std::uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

inline float get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

// MDNT checkpoint: magic, version, canonical-JSON model spec, then each
// parameter tensor in spec order as rank + extents + little-endian f32 data.
inline void save_checkpoint(const std::string& path, const ModelSpec& spec,
                            const ModelState<float>& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write("MDNT", 4);
    detail::put_u32(os, kCheckpointVersion);
    std::string json = spec_to_json(spec).dump();
    detail::put_u64(os, json.size());
    os.write(json.data(), static_cast<std::streamsize>(json.size()));
    for (const Tensor<float>* t : state.flat()) {
        detail::put_u32(os, static_cast<std::uint32_t>(t->rank()));
        for (int a = 0; a < t->rank(); ++a)
            detail::put_u32(os, static_cast<std::uint32_t>(t->extent(a)));
        for (std::size_t i = 0; i < t->size(); ++i) detail::put_f32(os, (*t)[i]);
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

struct Checkpoint {
    ModelSpec spec;
    ModelState<float> state;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MDNT", 4) != 0)
        throw IoError("not an MDNT checkpoint: " + path);
    std::uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t json_len = detail::get_u64(is);
    std::string json(json_len, '\0');
    is.read(json.data(), static_cast<std::streamsize>(json_len));
    if (!is) throw IoError("truncated checkpoint spec block");

    Checkpoint ck;
    ck.spec = spec_from_json(nlohmann::json::parse(json));
    auto shapes = infer_shapes(ck.spec);
    ck.state.params.resize(ck.spec.layers.size());
    for (std::size_t li = 0; li < ck.spec.layers.size(); ++li) {
        for (const Shape& want : layer_param_shapes(ck.spec, li, shapes)) {
            std::uint32_t rank = detail::get_u32(is);
            if (rank != want.size())
                throw IoError("checkpoint/spec mismatch: tensor rank " +
                              std::to_string(rank) + " where spec expects " +
                              shape_str(want));
            Shape got(rank);
            for (std::uint32_t a = 0; a < rank; ++a)
                got[a] = static_cast<int>(detail::get_u32(is));
            if (got != want)
                throw IoError("checkpoint/spec mismatch: tensor shape " + shape_str(got) +
                              " where spec expects " + shape_str(want));
            Tensor<float> t(got);
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = detail::get_f32(is);
            if (!is) throw IoError("truncated checkpoint tensor data");
            ck.state.params[li].push_back(std::move(t));
        }
    }
    // must be at end of file
    is.peek();
    if (!is.eof()) throw IoError("trailing bytes after checkpoint payload");
    return ck;
}

}  // namespace modnet
