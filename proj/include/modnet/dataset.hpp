#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "modnet/channel.hpp"
#include "modnet/modulate.hpp"
#include "modnet/rng.hpp"
#include "modnet/tensor.hpp"

namespace modnet {

inline constexpr int kFrameLen = 128;
inline constexpr int kFrameFloats = 2 * kFrameLen;  // I row then Q row

struct DatasetConfig {
    std::vector<std::string> classes = mod_class_names();
    std::vector<double> snr_grid_db;  // e.g. -20..18 step 2
    int frames_per_cell = 200;
    int sps = 8;
    std::vector<PdpTap> pdp = {{0, 0.0}, {1, -2.0}, {3, -10.0}};
    double max_cfo = 0.01;      // cycles/sample
    double max_sro_ppm = 50.0;  // parts per million
    int frames_per_group = 16;  // frames sharing one channel realization
    std::uint64_t seed = 1;

    static std::vector<double> snr_range(double lo, double hi, double step) {
        std::vector<double> v;
        for (double s = lo; s <= hi + 1e-9; s += step) v.push_back(s);
        return v;
    }

    // 11 classes x 20 SNRs x 1000 frames = 220,000 frames
    static DatasetConfig full_scale() {
        DatasetConfig c;
        c.snr_grid_db = snr_range(-20.0, 18.0, 2.0);
        c.frames_per_cell = 1000;
        return c;
    }

    // 11 classes x 10 SNRs x 200 frames = 22,000 frames
    static DatasetConfig desk_scale() {
        DatasetConfig c;
        c.snr_grid_db = snr_range(-20.0, 18.0, 4.0);
        c.frames_per_cell = 200;
        return c;
    }

    void validate_config() const {
        if (classes.empty()) throw ConfigError("dataset config: no classes");
        for (const auto& name : classes) mod_class_from_name(name);
        if (snr_grid_db.empty()) throw ConfigError("dataset config: empty SNR grid");
        if (frames_per_cell < 1) throw ConfigError("dataset config: frames_per_cell < 1");
        if (sps < 2) throw ConfigError("dataset config: sps must be >= 2");
        if (max_cfo < 0.0 || max_cfo >= 0.5)
            throw ConfigError("dataset config: max_cfo must be in [0, 0.5)");
        if (max_sro_ppm < 0.0) throw ConfigError("dataset config: max_sro_ppm < 0");
        if (frames_per_group < 1) throw ConfigError("dataset config: frames_per_group < 1");
        validate_pdp(pdp);
    }
};

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
    nlohmann::json pdp = nlohmann::json::array();
    for (const auto& tap : c.pdp)
        pdp.push_back(nlohmann::json::array({tap.delay_samples, tap.power_db}));
    return nlohmann::json{{"classes", c.classes},
                          {"snr_grid_db", c.snr_grid_db},
                          {"frames_per_cell", c.frames_per_cell},
                          {"sps", c.sps},
                          {"pdp", pdp},
                          {"max_cfo", c.max_cfo},
                          {"max_sro_ppm", c.max_sro_ppm},
                          {"frames_per_group", c.frames_per_group},
                          {"seed", c.seed}};
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    DatasetConfig c;
    c.classes = j.at("classes").get<std::vector<std::string>>();
    c.snr_grid_db = j.at("snr_grid_db").get<std::vector<double>>();
    c.frames_per_cell = j.at("frames_per_cell").get<int>();
    c.sps = j.at("sps").get<int>();
    c.pdp.clear();
    for (const auto& tap : j.at("pdp"))
        c.pdp.push_back({tap.at(0).get<int>(), tap.at(1).get<double>()});
    c.max_cfo = j.at("max_cfo").get<double>();
    c.max_sro_ppm = j.at("max_sro_ppm").get<double>();
    c.frames_per_group = j.at("frames_per_group").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

// Labeled I/Q frames: parallel arrays plus the generating config.
struct DatasetBundle {
    std::vector<std::string> class_names;  // label index -> name
    std::vector<double> snr_grid_db;
    std::vector<float> frames;  // frame_count * 256, I row then Q row
    std::vector<int> mod_labels;
    std::vector<float> snr_labels_db;
    nlohmann::json config;

    std::size_t frame_count() const { return mod_labels.size(); }

    const float* frame(std::size_t i) const {
        return frames.data() + i * kFrameFloats;
    }

    Tensor<float> frame_tensor(std::size_t i) const {
        Tensor<float> t(Shape{2, kFrameLen});
        std::memcpy(t.data(), frame(i), sizeof(float) * kFrameFloats);
        return t;
    }

    int snr_index(double snr_db) const {
        for (std::size_t i = 0; i < snr_grid_db.size(); ++i)
            if (std::abs(snr_grid_db[i] - snr_db) < 1e-6) return static_cast<int>(i);
        return -1;
    }
};

namespace detail {

inline void store_frame(std::vector<float>& frames, const std::vector<cplx>& window) {
    for (int i = 0; i < kFrameLen; ++i)
        frames.push_back(static_cast<float>(window[static_cast<std::size_t>(i)].real()));
    for (int i = 0; i < kFrameLen; ++i)
        frames.push_back(static_cast<float>(window[static_cast<std::size_t>(i)].imag()));
}

}  // namespace detail

// Synthesizes the full labeled dataset. Each (class, snr) cell draws from its
// own derived RNG stream, so output is a pure function of the config no matter
// how cells are scheduled.
inline DatasetBundle synth_dataset(const DatasetConfig& config) {
    config.validate_config();
    DatasetBundle bundle;
    bundle.class_names = config.classes;
    bundle.snr_grid_db = config.snr_grid_db;
    bundle.config = dataset_config_to_json(config);
    const std::size_t total = config.classes.size() * config.snr_grid_db.size() *
                              static_cast<std::size_t>(config.frames_per_cell);
    bundle.frames.reserve(total * kFrameFloats);
    bundle.mod_labels.reserve(total);
    bundle.snr_labels_db.reserve(total);

    for (std::size_t ci = 0; ci < config.classes.size(); ++ci) {
        ModClass cls = mod_class_from_name(config.classes[ci]);
        for (std::size_t si = 0; si < config.snr_grid_db.size(); ++si) {
            const double snr_db = config.snr_grid_db[si];
            Rng cell_rng = Rng::substream(config.seed, "dataset", ci * 4096 + si);
            int remaining = config.frames_per_cell;
            while (remaining > 0) {
                const int group = std::min(remaining, config.frames_per_group);
                const int n_samples = group * kFrameLen + 512;
                auto sig = modulate(cls, cell_rng, n_samples, config.sps);
                sig = apply_fading(sig, config.pdp, cell_rng);
                sig = apply_cfo(sig, cell_rng.uniform(-config.max_cfo, config.max_cfo));
                sig = apply_sro(sig,
                                cell_rng.uniform(-config.max_sro_ppm, config.max_sro_ppm));
                const std::size_t span = sig.size() - kFrameLen;
                for (int f = 0; f < group; ++f) {
                    std::size_t start = cell_rng.uniform_index(span + 1);
                    std::vector<cplx> window(sig.begin() + static_cast<std::ptrdiff_t>(start),
                                             sig.begin() + static_cast<std::ptrdiff_t>(start) +
                                                 kFrameLen);
                    normalize_power(window);  // unit average power pre-noise
                    window = add_awgn(window, snr_db, cell_rng);
                    detail::store_frame(bundle.frames, window);
                    bundle.mod_labels.push_back(static_cast<int>(ci));
                    bundle.snr_labels_db.push_back(static_cast<float>(snr_db));
                }
                remaining -= group;
            }
        }
    }
    return bundle;
}

// ---- IQDS container --------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

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
inline std::uint32_t get_u32d(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of dataset file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
inline std::uint64_t get_u64d(std::istream& is) {
    std::uint64_t lo = get_u32d(is);
    std::uint64_t hi = get_u32d(is);
    return lo | (hi << 32);
}
inline float get_f32d(std::istream& is) {
    std::uint32_t bits = get_u32d(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline void write_iqds(const std::string& path, const DatasetBundle& bundle) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open dataset for writing: " + path);
    os.write("IQDS", 4);
    detail::put_u32(os, kDatasetVersion);
    detail::put_u64(os, bundle.frame_count());
    detail::put_u32(os, static_cast<std::uint32_t>(bundle.class_names.size()));
    for (const auto& name : bundle.class_names) {
        detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    detail::put_u32(os, static_cast<std::uint32_t>(bundle.snr_grid_db.size()));
    for (double s : bundle.snr_grid_db) detail::put_f32(os, static_cast<float>(s));
    std::string cfg = bundle.config.dump();
    detail::put_u64(os, cfg.size());
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    for (float v : bundle.frames) detail::put_f32(os, v);
    for (int label : bundle.mod_labels)
        detail::put_u32(os, static_cast<std::uint32_t>(label));
    for (float s : bundle.snr_labels_db) detail::put_f32(os, s);
    if (!os) throw IoError("failed writing dataset: " + path);
}

inline DatasetBundle read_iqds(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "IQDS", 4) != 0)
        throw IoError("not an IQDS dataset: " + path);
    std::uint32_t version = detail::get_u32d(is);
    if (version != kDatasetVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    DatasetBundle bundle;
    std::uint64_t n = detail::get_u64d(is);
    std::uint32_t n_classes = detail::get_u32d(is);
    for (std::uint32_t i = 0; i < n_classes; ++i) {
        std::uint32_t len = detail::get_u32d(is);
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        bundle.class_names.push_back(std::move(name));
    }
    std::uint32_t n_snrs = detail::get_u32d(is);
    for (std::uint32_t i = 0; i < n_snrs; ++i)
        bundle.snr_grid_db.push_back(detail::get_f32d(is));
    std::uint64_t cfg_len = detail::get_u64d(is);
    std::string cfg(cfg_len, '\0');
    is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
    if (!is) throw IoError("truncated dataset header");
    bundle.config = nlohmann::json::parse(cfg);
    bundle.frames.resize(n * kFrameFloats);
    for (auto& v : bundle.frames) v = detail::get_f32d(is);
    bundle.mod_labels.resize(n);
    for (auto& v : bundle.mod_labels) v = static_cast<int>(detail::get_u32d(is));
    bundle.snr_labels_db.resize(n);
    for (auto& v : bundle.snr_labels_db) v = detail::get_f32d(is);
    is.peek();
    if (!is.eof()) throw IoError("trailing bytes after dataset payload");
    return bundle;
}

// Sidecar metadata for tooling; `created_at` may vary between runs, the
// binary payload never does.
inline nlohmann::json dataset_manifest(const DatasetBundle& bundle,
                                       const std::string& created_at = "") {
    nlohmann::json j{{"magic", "IQDS"},
                     {"version", kDatasetVersion},
                     {"frame_count", bundle.frame_count()},
                     {"classes", bundle.class_names},
                     {"snr_grid_db", bundle.snr_grid_db},
                     {"config", bundle.config}};
    if (!created_at.empty()) j["created_at"] = created_at;
    return j;
}

// ---- splitting --------------------------------------------------------------------

namespace detail {

inline DatasetBundle take_subset(const DatasetBundle& src,
                                 const std::vector<std::size_t>& indices) {
    DatasetBundle out;
    out.class_names = src.class_names;
    out.snr_grid_db = src.snr_grid_db;
    out.config = src.config;
    out.frames.reserve(indices.size() * kFrameFloats);
    out.mod_labels.reserve(indices.size());
    out.snr_labels_db.reserve(indices.size());
    for (std::size_t i : indices) {
        const float* f = src.frame(i);
        out.frames.insert(out.frames.end(), f, f + kFrameFloats);
        out.mod_labels.push_back(src.mod_labels[i]);
        out.snr_labels_db.push_back(src.snr_labels_db[i]);
    }
    return out;
}

}  // namespace detail

struct SplitBundles {
    DatasetBundle train, val, test;
};

// Stratified split by (class, snr) cell with largest-remainder allocation;
// per-cell counts land within one frame of fraction * cell size.
inline SplitBundles split_dataset(const DatasetBundle& bundle, double f_train,
                                  double f_val, double f_test, std::uint64_t seed) {
    if (f_train < 0 || f_val < 0 || f_test < 0 ||
        std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");

    // group frame indices per cell, preserving generation order
    std::vector<std::vector<std::size_t>> cells;
    std::vector<std::pair<int, int>> cell_keys;  // (mod, snr index)
    auto cell_of = [&](std::size_t i) {
        int mod = bundle.mod_labels[i];
        int snr = bundle.snr_index(bundle.snr_labels_db[i]);
        std::pair<int, int> key{mod, snr};
        for (std::size_t c = 0; c < cell_keys.size(); ++c)
            if (cell_keys[c] == key) return c;
        cell_keys.push_back(key);
        cells.emplace_back();
        return cells.size() - 1;
    };
    for (std::size_t i = 0; i < bundle.frame_count(); ++i) {
        std::size_t c = cell_of(i);
        cells[c].push_back(i);
    }

    std::vector<std::size_t> train_idx, val_idx, test_idx;
    const double fracs[3] = {f_train, f_val, f_test};
    for (std::size_t c = 0; c < cells.size(); ++c) {
        auto& idx = cells[c];
        Rng rng = Rng::substream(seed, "split", c);
        rng.shuffle(idx.begin(), idx.end());
        const std::size_t n = idx.size();
        std::size_t counts[3];
        double rema[3];
        std::size_t used = 0;
        for (int k = 0; k < 3; ++k) {
            double t = fracs[k] * static_cast<double>(n);
            counts[k] = static_cast<std::size_t>(t);
            rema[k] = t - static_cast<double>(counts[k]);
            used += counts[k];
        }
        while (used < n) {
            int best = 0;
            for (int k = 1; k < 3; ++k)
                if (rema[k] > rema[best] + 1e-12) best = k;
            counts[best] += 1;
            rema[best] = -1.0;
            ++used;
        }
        std::size_t pos = 0;
        for (std::size_t k = 0; k < counts[0]; ++k) train_idx.push_back(idx[pos++]);
        for (std::size_t k = 0; k < counts[1]; ++k) val_idx.push_back(idx[pos++]);
        for (std::size_t k = 0; k < counts[2]; ++k) test_idx.push_back(idx[pos++]);
    }
    // keep original order inside each split so results do not depend on cell
    // discovery order
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return SplitBundles{detail::take_subset(bundle, train_idx),
                        detail::take_subset(bundle, val_idx),
                        detail::take_subset(bundle, test_idx)};
}

}  // namespace modnet
