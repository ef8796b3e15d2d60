#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modnet/csv.hpp"
#include "modnet/dataset.hpp"
#include "modnet/fft.hpp"
#include "modnet/model.hpp"

namespace modnet {

// Complex-tap reading of a first-layer filter (I-channel weights = real part,
// Q-channel weights = imaginary part) plus its 128-point magnitude spectrum.
struct FilterView {
    int layer_idx = 0;
    int filter_idx = 0;
    std::vector<cplx> taps;
    std::vector<double> spectrum;  // 128 bins, |FFT(zero-padded taps)|
};

inline FilterView filter_view(const ModelSpec& spec, const ModelState<float>& state,
                              int layer_idx, int filter_idx) {
    if (layer_idx < 0 || layer_idx >= static_cast<int>(spec.layers.size()))
        throw IndexError("filter_view: layer index out of range");
    const LayerSpec& layer = spec.layers[static_cast<std::size_t>(layer_idx)];
    if (layer.kind != LayerKind::Conv1d)
        throw ConfigError("filter_view: layer " + std::to_string(layer_idx) +
                          " is not conv1d");
    const Tensor<float>& w = state.params[static_cast<std::size_t>(layer_idx)][0];
    if (w.extent(1) != 2)
        throw ConfigError("filter_view: conv layer must have 2 input channels (I/Q)");
    if (filter_idx < 0 || filter_idx >= w.extent(0))
        throw IndexError("filter_view: filter index out of range");
    const int taps = w.extent(2);
    if (taps > kFftSize)
        throw ConfigError("filter_view: more taps than FFT bins");

    FilterView view;
    view.layer_idx = layer_idx;
    view.filter_idx = filter_idx;
    std::vector<cplx> padded(kFftSize, cplx(0.0, 0.0));
    for (int n = 0; n < taps; ++n) {
        cplx h(static_cast<double>(w.at(filter_idx, 0, n)),
               static_cast<double>(w.at(filter_idx, 1, n)));
        view.taps.push_back(h);
        padded[static_cast<std::size_t>(n)] = h;
    }
    auto spec128 = fft128(padded);
    view.spectrum.resize(kFftSize);
    for (int k = 0; k < kFftSize; ++k)
        view.spectrum[static_cast<std::size_t>(k)] = std::abs(spec128[static_cast<std::size_t>(k)]);
    return view;
}

struct DreamResult {
    Tensor<float> frame;        // 2 x 128, unit average power
    std::vector<double> trace;  // objective after each step; length steps + 1
    int layer_idx = 0;
    int filter_idx = 0;
    int steps = 0;
    double step_size = 0.0;
    std::uint64_t seed = 0;
    bool degenerate = false;  // dead filter: zero gradient at the start
};

namespace detail {

// unit average power over the 128 complex samples
inline void renorm_frame(Tensor<float>& frame) {
    double p = 0.0;
    for (std::size_t i = 0; i < frame.size(); ++i)
        p += static_cast<double>(frame[i]) * frame[i];
    p /= static_cast<double>(kFrameLen);
    if (p <= 0.0) return;
    float s = static_cast<float>(1.0 / std::sqrt(p));
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= s;
}

}  // namespace detail

// Gradient ascent on the input: synthesizes a unit-power frame that maximizes
// the mean rectified activation of one filter's feature map. Steps use the
// L2-normalized gradient and are accepted greedily (a step that would lower
// the objective is retried at smaller sizes, then skipped), so the endpoint
// never falls below the start.
inline DreamResult activation_maximize(const ModelSpec& spec, ModelState<float>& state,
                                       int layer_idx, int filter_idx, int steps = 200,
                                       double step_size = 0.1, std::uint64_t seed = 1) {
    if (layer_idx < 0 || layer_idx >= static_cast<int>(spec.layers.size()))
        throw IndexError("activation_maximize: layer index out of range");
    if (spec.layers[static_cast<std::size_t>(layer_idx)].kind != LayerKind::Conv1d)
        throw ConfigError("activation_maximize: target layer is not conv1d");
    const int n_filters = spec.layers[static_cast<std::size_t>(layer_idx)].filters;
    if (filter_idx < 0 || filter_idx >= n_filters)
        throw IndexError("activation_maximize: filter index out of range");

    DreamResult result;
    result.layer_idx = layer_idx;
    result.filter_idx = filter_idx;
    result.steps = steps;
    result.step_size = step_size;
    result.seed = seed;

    Rng rng = Rng::substream(seed, "dream",
                             static_cast<std::uint64_t>(layer_idx) * 65536 +
                                 static_cast<std::uint64_t>(filter_idx));
    Tensor<float> frame(Shape{1, 2, kFrameLen});
    for (std::size_t i = 0; i < frame.size(); ++i)
        frame[i] = static_cast<float>(rng.normal(0.0, 0.5));

    // objective and its gradient w.r.t. the frame
    auto eval = [&](const Tensor<float>& f, bool want_grad,
                    Tensor<float>* grad_out) -> double {
        Tape<float> tape;
        Var<float> x = tape.leaf(f, want_grad);
        auto fwd = forward_graph(tape, spec, state, x, Mode::Infer, nullptr,
                                 /*param_grads=*/false);
        Var<float> fmap =
            slice_channels(tape, fwd.layer_out[static_cast<std::size_t>(layer_idx)],
                           filter_idx, filter_idx + 1);
        Var<float> obj = mean(tape, relu(tape, fmap));
        double value = static_cast<double>(tape.value(obj)[0]);
        if (want_grad) {
            tape.backward(obj);
            const Tensor<float>& g = tape.grad(x);
            *grad_out = g.empty() ? Tensor<float>(f.shape()) : g;
        }
        return value;
    };

    double current = eval(frame, false, nullptr);
    result.trace.push_back(current);

    Tensor<float> grad;
    for (int step = 0; step < steps; ++step) {
        double obj = eval(frame, true, &grad);
        double gnorm = 0.0;
        for (std::size_t i = 0; i < grad.size(); ++i)
            gnorm += static_cast<double>(grad[i]) * grad[i];
        gnorm = std::sqrt(gnorm);
        if (gnorm == 0.0) {
            if (step == 0) result.degenerate = true;
            // nothing to ascend; hold the current frame
            for (int s = step; s < steps; ++s) result.trace.push_back(current);
            break;
        }
        bool accepted = false;
        double trial_step = step_size;
        for (int attempt = 0; attempt < 4 && !accepted; ++attempt, trial_step *= 0.5) {
            Tensor<float> proposal = frame;
            const float scale = static_cast<float>(trial_step / gnorm);
            for (std::size_t i = 0; i < proposal.size(); ++i) proposal[i] += scale * grad[i];
            detail::renorm_frame(proposal);
            double trial = eval(proposal, false, nullptr);
            if (trial >= obj) {
                frame = std::move(proposal);
                current = trial;
                accepted = true;
            }
        }
        if (!accepted) current = obj;
        result.trace.push_back(current);
    }

    Tensor<float> out(Shape{2, kFrameLen});
    std::copy(frame.data(), frame.data() + frame.size(), out.data());
    result.frame = std::move(out);
    return result;
}

// FNV-1a over the parameter bytes; used to assert introspection is read-only.
inline std::uint64_t state_hash(const ModelState<float>& state) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Tensor<float>* t : state.flat()) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
        for (std::size_t i = 0; i < t->size() * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

struct ExportOptions {
    int layer_idx = 0;
    std::vector<int> filters;  // empty -> all filters of the layer
    bool dreams = true;
    int dream_steps = 200;
    double dream_step_size = 0.1;
    std::uint64_t seed = 1;
};

// Writes per-filter tap/spectrum CSVs (plus dream-frame CSVs) and an
// index.json listing every emitted file. Deterministic bytes for a given
// state.
inline nlohmann::json export_views(const ModelSpec& spec, ModelState<float>& state,
                                   const std::string& out_dir,
                                   const ExportOptions& opt = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<int> filters = opt.filters;
    if (filters.empty()) {
        const int n = spec.layers[static_cast<std::size_t>(opt.layer_idx)].filters;
        for (int f = 0; f < n; ++f) filters.push_back(f);
    }

    nlohmann::json index;
    index["layer"] = opt.layer_idx;
    index["files"] = nlohmann::json::array();
    for (int f : filters) {
        auto view = filter_view(spec, state, opt.layer_idx, f);
        const std::string stem =
            "filter_l" + std::to_string(opt.layer_idx) + "_f" + std::to_string(f);
        {
            CsvWriter w(out_dir + "/" + stem + "_taps.csv");
            w.row({"n", "tap_i", "tap_q"});
            for (std::size_t n = 0; n < view.taps.size(); ++n)
                w.row({csv_num(n), csv_num(view.taps[n].real()), csv_num(view.taps[n].imag())});
        }
        {
            CsvWriter w(out_dir + "/" + stem + "_spectrum.csv");
            w.row({"bin", "magnitude"});
            for (std::size_t k = 0; k < view.spectrum.size(); ++k)
                w.row({csv_num(k), csv_num(view.spectrum[k])});
        }
        nlohmann::json entry{{"filter", f},
                             {"taps_csv", stem + "_taps.csv"},
                             {"spectrum_csv", stem + "_spectrum.csv"}};
        if (opt.dreams) {
            auto dream = activation_maximize(spec, state, opt.layer_idx, f, opt.dream_steps,
                                             opt.dream_step_size, opt.seed);
            const std::string dream_csv =
                "dream_l" + std::to_string(opt.layer_idx) + "_f" + std::to_string(f) + ".csv";
            CsvWriter w(out_dir + "/" + dream_csv);
            w.row({"n", "i", "q"});
            for (int n = 0; n < kFrameLen; ++n)
                w.row({csv_num(n), csv_num(static_cast<double>(dream.frame.at(0, n))),
                       csv_num(static_cast<double>(dream.frame.at(1, n)))});
            entry["dream_csv"] = dream_csv;
            entry["dream_degenerate"] = dream.degenerate;
            entry["dream_objective_initial"] = dream.trace.front();
            entry["dream_objective_final"] = dream.trace.back();
        }
        index["files"].push_back(std::move(entry));
    }
    std::ofstream os(out_dir + "/index.json", std::ios::binary);
    os << index.dump(2) << "\n";
    if (!os) throw IoError("failed writing index.json in " + out_dir);
    return index;
}

}  // namespace modnet
