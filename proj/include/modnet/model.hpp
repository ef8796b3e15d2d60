#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modnet/nn_ops.hpp"
#include "modnet/rng.hpp"
#include "modnet/tape.hpp"

namespace modnet {

enum class LayerKind {
    Conv1d,
    Dense,
    Relu,
    Dropout,
    MaxPool,
    Lstm,
    ResidualAdd,
    Concat,
    SoftmaxHead,
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv1d: return "conv1d";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Lstm: return "lstm";
        case LayerKind::ResidualAdd: return "residual_add";
        case LayerKind::Concat: return "concat";
        case LayerKind::SoftmaxHead: return "softmax_head";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    for (LayerKind k : {LayerKind::Conv1d, LayerKind::Dense, LayerKind::Relu,
                        LayerKind::Dropout, LayerKind::MaxPool, LayerKind::Lstm,
                        LayerKind::ResidualAdd, LayerKind::Concat, LayerKind::SoftmaxHead})
        if (s == layer_kind_name(k)) return k;
    throw ConfigError("unknown layer kind '" + s + "'");
}

// One node of the layer DAG. `sources` holds indices of earlier layers;
// kInputSource refers to the model input.
struct LayerSpec {
    LayerKind kind;
    std::vector<int> sources;
    int filters = 0;   // conv1d
    int taps = 0;      // conv1d
    int units = 0;     // dense / lstm hidden width
    double rate = 0.0; // dropout
    int width = 0;     // maxpool
    int stride = 0;    // maxpool
    std::string name;
};

inline constexpr int kInputSource = -1;

// Declarative architecture: an acyclic layer list in topological order.
// The input is a C x L frame (2 x 128 for I/Q data); the terminal layer is a
// softmax classifier head over n_classes.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    int input_channels = 2;
    int input_length = 128;
    int n_classes = 11;
};

// ---- shape inference ----------------------------------------------------------

// Per-layer output shapes (batch-free: [C, L] spatial or [D] flat), derivable
// from the spec alone. Throws ShapeError when the graph cannot type-check, so
// a spec that passes here never raises shape errors at runtime.
inline std::vector<Shape> infer_shapes(const ModelSpec& spec) {
    std::vector<Shape> shapes;
    shapes.reserve(spec.layers.size());
    auto src_shape = [&](const LayerSpec& layer, int which) -> Shape {
        int s = layer.sources[static_cast<std::size_t>(which)];
        if (s == kInputSource) return Shape{spec.input_channels, spec.input_length};
        return shapes[static_cast<std::size_t>(s)];
    };
    auto flat = [](const Shape& s) {
        return static_cast<int>(shape_numel(s));
    };

    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& layer = spec.layers[li];
        for (int s : layer.sources)
            if (s < kInputSource || s >= static_cast<int>(li))
                throw ShapeError("layer " + std::to_string(li) + " (" + layer.name +
                                 ") references invalid source " + std::to_string(s));
        std::size_t want_sources =
            (layer.kind == LayerKind::ResidualAdd || layer.kind == LayerKind::Concat) ? 2 : 1;
        if (layer.sources.size() != want_sources)
            throw ShapeError("layer " + std::to_string(li) + " (" +
                             layer_kind_name(layer.kind) + ") expects " +
                             std::to_string(want_sources) + " source(s)");

        switch (layer.kind) {
            case LayerKind::Conv1d: {
                Shape in = src_shape(layer, 0);
                if (in.size() != 2)
                    throw ShapeError("conv1d input must be [C,L] at layer " + layer.name);
                if (layer.filters < 1 || layer.taps < 1)
                    throw ShapeError("conv1d needs filters >= 1 and taps >= 1 at layer " +
                                     layer.name);
                shapes.push_back(Shape{layer.filters, in[1]});
                break;
            }
            case LayerKind::Dense: {
                Shape in = src_shape(layer, 0);
                if (layer.units < 1) throw ShapeError("dense needs units >= 1");
                (void)in;
                shapes.push_back(Shape{layer.units});
                break;
            }
            case LayerKind::Relu:
                shapes.push_back(src_shape(layer, 0));
                break;
            case LayerKind::Dropout:
                if (layer.rate < 0.0 || layer.rate >= 1.0)
                    throw ShapeError("dropout rate must be in [0,1) at layer " + layer.name);
                shapes.push_back(src_shape(layer, 0));
                break;
            case LayerKind::MaxPool: {
                Shape in = src_shape(layer, 0);
                if (in.size() != 2)
                    throw ShapeError("maxpool input must be [C,L] at layer " + layer.name);
                if (layer.width < 1 || layer.stride < 1)
                    throw ShapeError("maxpool needs width/stride >= 1");
                if (layer.width > in[1])
                    throw ShapeError("maxpool width " + std::to_string(layer.width) +
                                     " exceeds time extent " + std::to_string(in[1]));
                shapes.push_back(Shape{in[0], (in[1] - layer.width) / layer.stride + 1});
                break;
            }
            case LayerKind::Lstm: {
                Shape in = src_shape(layer, 0);
                if (in.size() != 2)
                    throw ShapeError("lstm input must be [C,L] at layer " + layer.name);
                if (layer.units < 1) throw ShapeError("lstm needs units >= 1");
                shapes.push_back(Shape{layer.units});
                break;
            }
            case LayerKind::ResidualAdd: {
                Shape a = src_shape(layer, 0);
                Shape b = src_shape(layer, 1);
                if (a != b)
                    throw ShapeError("residual_add operands disagree: " + shape_str(a) +
                                     " vs " + shape_str(b) + " at layer " + layer.name);
                shapes.push_back(b);
                break;
            }
            case LayerKind::Concat: {
                Shape a = src_shape(layer, 0);
                Shape b = src_shape(layer, 1);
                if (a.size() != 2 || b.size() != 2)
                    throw ShapeError("concat operands must be [C,L] at layer " + layer.name);
                if (a[1] != b[1])
                    throw ShapeError("concat time extents disagree: " + shape_str(a) +
                                     " vs " + shape_str(b) + " at layer " + layer.name);
                shapes.push_back(Shape{a[0] + b[0], b[1]});
                break;
            }
            case LayerKind::SoftmaxHead: {
                Shape in = src_shape(layer, 0);
                (void)flat(in);
                shapes.push_back(Shape{spec.n_classes});
                break;
            }
        }
    }
    return shapes;
}

inline void validate(const ModelSpec& spec) {
    if (spec.layers.empty()) throw ShapeError("model has no layers");
    if (spec.input_channels < 1 || spec.input_length < 1 || spec.n_classes < 1)
        throw ShapeError("model input/output extents must be positive");
    int heads = 0;
    for (const auto& l : spec.layers)
        if (l.kind == LayerKind::SoftmaxHead) ++heads;
    if (heads != 1)
        throw ShapeError("model must have exactly one softmax_head, found " +
                         std::to_string(heads));
    if (spec.layers.back().kind != LayerKind::SoftmaxHead)
        throw ShapeError("softmax_head must be the terminal layer");
    infer_shapes(spec);  // throws on any inconsistency
}

// ---- parameter shapes / state ---------------------------------------------------

inline std::vector<Shape> layer_param_shapes(const ModelSpec& spec, std::size_t li,
                                             const std::vector<Shape>& shapes) {
    const LayerSpec& layer = spec.layers[li];
    auto in_shape = [&](int which) -> Shape {
        int s = layer.sources[static_cast<std::size_t>(which)];
        return s == kInputSource ? Shape{spec.input_channels, spec.input_length}
                                 : shapes[static_cast<std::size_t>(s)];
    };
    switch (layer.kind) {
        case LayerKind::Conv1d: {
            Shape in = in_shape(0);
            return {Shape{layer.filters, in[0], layer.taps}, Shape{layer.filters}};
        }
        case LayerKind::Dense: {
            int d = static_cast<int>(shape_numel(in_shape(0)));
            return {Shape{layer.units, d}, Shape{layer.units}};
        }
        case LayerKind::Lstm: {
            Shape in = in_shape(0);
            int c = in[0], h = layer.units;
            return {Shape{4 * h, c}, Shape{4 * h, h}, Shape{4 * h}};
        }
        case LayerKind::SoftmaxHead: {
            int d = static_cast<int>(shape_numel(in_shape(0)));
            return {Shape{spec.n_classes, d}, Shape{spec.n_classes}};
        }
        default:
            return {};
    }
}

inline std::size_t param_count(const ModelSpec& spec) {
    auto shapes = infer_shapes(spec);
    std::size_t n = 0;
    for (std::size_t li = 0; li < spec.layers.size(); ++li)
        for (const Shape& s : layer_param_shapes(spec, li, shapes)) n += shape_numel(s);
    return n;
}

// Learned parameters, aligned with the spec's layer list. Shapes are a pure
// function of the spec.
template <typename T>
struct ModelState {
    std::vector<std::vector<Tensor<T>>> params;  // per layer

    std::vector<Tensor<T>*> flat() {
        std::vector<Tensor<T>*> out;
        for (auto& layer : params)
            for (auto& t : layer) out.push_back(&t);
        return out;
    }
    std::vector<const Tensor<T>*> flat() const {
        std::vector<const Tensor<T>*> out;
        for (const auto& layer : params)
            for (const auto& t : layer) out.push_back(&t);
        return out;
    }

    template <typename U>
    ModelState<U> cast() const {
        ModelState<U> out;
        out.params.reserve(params.size());
        for (const auto& layer : params) {
            std::vector<Tensor<U>> lp;
            lp.reserve(layer.size());
            for (const auto& t : layer) lp.push_back(t.template cast<U>());
            out.params.push_back(std::move(lp));
        }
        return out;
    }
};

// Fan-in-scaled uniform init for conv/dense/head; LSTM forget-gate bias set
// to 1 so cells retain state early in training.
template <typename T = float>
ModelState<T> init_model(const ModelSpec& spec, Rng& rng) {
    validate(spec);
    auto shapes = infer_shapes(spec);
    ModelState<T> state;
    state.params.resize(spec.layers.size());
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& layer = spec.layers[li];
        auto pshapes = layer_param_shapes(spec, li, shapes);
        auto& lp = state.params[li];
        switch (layer.kind) {
            case LayerKind::Conv1d:
            case LayerKind::Dense:
            case LayerKind::SoftmaxHead: {
                Tensor<T> w(pshapes[0]);
                double fan_in = static_cast<double>(shape_numel(pshapes[0])) / pshapes[0][0];
                double a = 1.0 / std::sqrt(fan_in);
                for (std::size_t i = 0; i < w.size(); ++i)
                    w[i] = static_cast<T>(rng.uniform(-a, a));
                lp.push_back(std::move(w));
                lp.emplace_back(pshapes[1]);  // zero bias
                break;
            }
            case LayerKind::Lstm: {
                int h = layer.units;
                Tensor<T> wx(pshapes[0]), wh(pshapes[1]), b(pshapes[2]);
                double ax = 1.0 / std::sqrt(static_cast<double>(pshapes[0][1]));
                double ah = 1.0 / std::sqrt(static_cast<double>(h));
                for (std::size_t i = 0; i < wx.size(); ++i)
                    wx[i] = static_cast<T>(rng.uniform(-ax, ax));
                for (std::size_t i = 0; i < wh.size(); ++i)
                    wh[i] = static_cast<T>(rng.uniform(-ah, ah));
                for (int j = h; j < 2 * h; ++j) b[static_cast<std::size_t>(j)] = T(1);
                lp.push_back(std::move(wx));
                lp.push_back(std::move(wh));
                lp.push_back(std::move(b));
                break;
            }
            default:
                break;
        }
    }
    return state;
}

// ---- forward pass ----------------------------------------------------------------

template <typename T>
struct ForwardResult {
    Var<T> logits;                  // [N, K]
    Var<T> probs;                   // [N, K]
    std::vector<Var<T>> params;     // flattened, same order as ModelState::flat()
    std::vector<Var<T>> layer_out;  // per-layer outputs
};

// Builds the batched graph for a spec on a tape. x is [N, C, L]. In train
// mode dropout draws from `dropout_rng`; pass param_grads=false for pure
// inference so the tape skips gradient bookkeeping.
template <typename T>
ForwardResult<T> forward_graph(Tape<T>& tape, const ModelSpec& spec,
                               ModelState<T>& state, Var<T> x, Mode mode,
                               Rng* dropout_rng = nullptr, bool param_grads = true) {
    const int n = tape.value(x).extent(0);
    ForwardResult<T> result;
    std::vector<Var<T>> outs(spec.layers.size());

    auto src = [&](const LayerSpec& layer, int which) {
        int s = layer.sources[static_cast<std::size_t>(which)];
        return s == kInputSource ? x : outs[static_cast<std::size_t>(s)];
    };
    auto as_matrix = [&](Var<T> v) {
        const Tensor<T>& t = tape.value(v);
        if (t.rank() == 2) return v;
        return reshape(tape, v, Shape{n, static_cast<int>(t.size() / n)});
    };

    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& layer = spec.layers[li];
        tape.set_scope(layer.name.empty()
                           ? "layer " + std::to_string(li) + " (" + layer_kind_name(layer.kind) + ")"
                           : layer.name);
        auto& lp = state.params[li];
        std::vector<Var<T>> pv;
        for (auto& p : lp) {
            pv.push_back(tape.leaf(p, param_grads));
            result.params.push_back(pv.back());
        }
        Var<T> out;
        switch (layer.kind) {
            case LayerKind::Conv1d:
                out = conv1d(tape, src(layer, 0), pv[0], pv[1]);
                break;
            case LayerKind::Dense:
                out = dense(tape, as_matrix(src(layer, 0)), pv[0], pv[1]);
                break;
            case LayerKind::Relu:
                out = relu(tape, src(layer, 0));
                break;
            case LayerKind::Dropout: {
                if (mode == Mode::Train && layer.rate > 0.0 && dropout_rng == nullptr)
                    throw StateError("train-mode dropout requires an RNG");
                static Rng dummy(0);
                out = dropout(tape, src(layer, 0), layer.rate, mode,
                              dropout_rng ? *dropout_rng : dummy);
                break;
            }
            case LayerKind::MaxPool:
                out = maxpool1d(tape, src(layer, 0), layer.width, layer.stride);
                break;
            case LayerKind::Lstm:
                out = lstm(tape, seq_transpose(tape, src(layer, 0)), pv[0], pv[1], pv[2],
                           /*return_sequence=*/false);
                break;
            case LayerKind::ResidualAdd:
                out = add(tape, src(layer, 0), src(layer, 1));
                break;
            case LayerKind::Concat:
                out = concat_channels(tape, src(layer, 0), src(layer, 1));
                break;
            case LayerKind::SoftmaxHead:
                out = dense(tape, as_matrix(src(layer, 0)), pv[0], pv[1]);
                result.logits = out;
                break;
        }
        outs[li] = out;
    }
    tape.set_scope("");
    result.probs = softmax_op(tape, result.logits);
    result.layer_out = std::move(outs);
    return result;
}

// Single-frame inference: class probabilities for one [C, L] frame.
template <typename T>
Tensor<T> forward_model(const ModelSpec& spec, ModelState<T>& state,
                        const Tensor<T>& frame, Mode mode = Mode::Infer,
                        Rng* dropout_rng = nullptr) {
    if (frame.rank() != 2 || frame.extent(0) != spec.input_channels ||
        frame.extent(1) != spec.input_length)
        throw ShapeError("forward_model frame shape " + shape_str(frame.shape()) +
                         " does not match model input [" +
                         std::to_string(spec.input_channels) + "x" +
                         std::to_string(spec.input_length) + "]");
    Tape<T> tape;
    Tensor<T> batched(Shape{1, frame.extent(0), frame.extent(1)});
    std::copy(frame.data(), frame.data() + frame.size(), batched.data());
    Var<T> x = tape.leaf(std::move(batched), false);
    auto fwd = forward_graph(tape, spec, state, x, mode, dropout_rng,
                             /*param_grads=*/false);
    const Tensor<T>& p = tape.value(fwd.probs);
    Tensor<T> out(Shape{spec.n_classes});
    std::copy(p.data(), p.data() + p.size(), out.data());
    return out;
}

// ---- spec (de)serialization ------------------------------------------------------

inline nlohmann::json spec_to_json(const ModelSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        nlohmann::json j;
        j["kind"] = layer_kind_name(l.kind);
        j["sources"] = l.sources;
        j["name"] = l.name;
        switch (l.kind) {
            case LayerKind::Conv1d:
                j["filters"] = l.filters;
                j["taps"] = l.taps;
                break;
            case LayerKind::Dense:
            case LayerKind::Lstm:
                j["units"] = l.units;
                break;
            case LayerKind::Dropout:
                j["rate"] = l.rate;
                break;
            case LayerKind::MaxPool:
                j["width"] = l.width;
                j["stride"] = l.stride;
                break;
            default:
                break;
        }
        layers.push_back(std::move(j));
    }
    return nlohmann::json{{"input_channels", spec.input_channels},
                          {"input_length", spec.input_length},
                          {"n_classes", spec.n_classes},
                          {"layers", layers}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    spec.input_channels = j.at("input_channels").get<int>();
    spec.input_length = j.at("input_length").get<int>();
    spec.n_classes = j.at("n_classes").get<int>();
    for (const auto& lj : j.at("layers")) {
        LayerSpec l;
        l.kind = layer_kind_from_name(lj.at("kind").get<std::string>());
        l.sources = lj.at("sources").get<std::vector<int>>();
        l.name = lj.value("name", "");
        l.filters = lj.value("filters", 0);
        l.taps = lj.value("taps", 0);
        l.units = lj.value("units", 0);
        l.rate = lj.value("rate", 0.0);
        l.width = lj.value("width", 0);
        l.stride = lj.value("stride", 0);
        spec.layers.push_back(std::move(l));
    }
    validate(spec);
    return spec;
}

}  // namespace modnet
