#pragma once

#include <string>

#include "modnet/model.hpp"

namespace modnet {

namespace detail {

struct SpecBuilder {
    ModelSpec spec;
    int last = kInputSource;

    int conv(int filters, int taps, const std::string& name, int source) {
        LayerSpec l;
        l.kind = LayerKind::Conv1d;
        l.sources = {source};
        l.filters = filters;
        l.taps = taps;
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int conv(int filters, int taps, const std::string& name) {
        return conv(filters, taps, name, last);
    }
    int relu(const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::Relu;
        l.sources = {last};
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int dropout(double rate, const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::Dropout;
        l.sources = {last};
        l.rate = rate;
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int dense(int units, const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::Dense;
        l.sources = {last};
        l.units = units;
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int maxpool(int width, int stride, const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::MaxPool;
        l.sources = {last};
        l.width = width;
        l.stride = stride;
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int lstm(int units, const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::Lstm;
        l.sources = {last};
        l.units = units;
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int residual_add(int a, int b, const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::ResidualAdd;
        l.sources = {a, b};
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int concat(int a, int b, const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::Concat;
        l.sources = {a, b};
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    int head(const std::string& name) {
        LayerSpec l;
        l.kind = LayerKind::SoftmaxHead;
        l.sources = {last};
        l.name = name;
        spec.layers.push_back(std::move(l));
        return last = static_cast<int>(spec.layers.size()) - 1;
    }
    // conv + relu + dropout, the standard hidden block
    int conv_block(int filters, int taps, double rate, const std::string& tag, int source) {
        conv(filters, taps, tag, source);
        relu(tag + "_relu");
        return dropout(rate, tag + "_drop");
    }
    int dense_block(int units, double rate, const std::string& tag) {
        dense(units, tag);
        relu(tag + "_relu");
        return dropout(rate, tag + "_drop");
    }
    ModelSpec finish() {
        validate(spec);
        return std::move(spec);
    }
};

}  // namespace detail

inline constexpr double kDropRate = 0.5;
inline constexpr int kDefaultHiddenDense = 128;

// Two conv layers, one hidden dense layer, softmax classifier; ReLU and 50%
// dropout on every hidden layer.
inline ModelSpec build_baseline_cnn(int n_filt = 50, int n_taps = 8, int n_classes = 11,
                                    int hidden_dense = kDefaultHiddenDense) {
    detail::SpecBuilder b;
    b.spec.n_classes = n_classes;
    b.conv_block(n_filt, n_taps, kDropRate, "conv1", kInputSource);
    b.conv_block(n_filt, n_taps, kDropRate, "conv2", b.last);
    b.dense_block(hidden_dense, kDropRate, "dense1");
    b.head("softmax");
    return b.finish();
}

// Baseline with a configurable number of conv layers (depth >= 2).
inline ModelSpec build_deep_cnn(int depth, int n_filt = 50, int n_taps = 8,
                                int n_classes = 11, int hidden_dense = kDefaultHiddenDense) {
    if (depth < 2) throw ConfigError("deep cnn depth must be >= 2");
    detail::SpecBuilder b;
    b.spec.n_classes = n_classes;
    int src = kInputSource;
    for (int i = 0; i < depth; ++i) {
        src = b.conv_block(n_filt, n_taps, kDropRate, "conv" + std::to_string(i + 1), src);
    }
    b.dense_block(hidden_dense, kDropRate, "dense1");
    b.head("softmax");
    return b.finish();
}

// Conv stack with a skip connection every two layers: the pair input is added
// to the pair output (identity skip when channel counts match, 1x1 conv
// projection otherwise). An odd trailing layer is left unskipped.
inline ModelSpec build_resnet(int n_layers, int n_filt = 50, int n_taps = 8,
                              int n_classes = 11, int hidden_dense = kDefaultHiddenDense) {
    if (n_layers < 5 || n_layers > 9)
        throw ConfigError("resnet supports 5-9 conv layers, got " + std::to_string(n_layers));
    detail::SpecBuilder b;
    b.spec.n_classes = n_classes;
    int src = kInputSource;
    int src_channels = b.spec.input_channels;
    int layer_idx = 0;
    int pair = 0;
    while (n_layers - layer_idx >= 2) {
        ++pair;
        const std::string tag = "res" + std::to_string(pair);
        int block_in = src;
        b.conv_block(n_filt, n_taps, kDropRate, tag + "_conv1", block_in);
        int out = b.conv_block(n_filt, n_taps, kDropRate, tag + "_conv2", b.last);
        int skip = block_in;
        if (src_channels != n_filt)
            skip = b.conv(n_filt, 1, tag + "_proj", block_in);
        src = b.residual_add(skip, out, tag + "_add");
        src_channels = n_filt;
        layer_idx += 2;
    }
    if (layer_idx < n_layers) {
        src = b.conv_block(n_filt, n_taps, kDropRate, "conv_tail", src);
        ++layer_idx;
    }
    b.last = src;
    b.dense_block(hidden_dense, kDropRate, "dense1");
    b.head("softmax");
    return b.finish();
}

struct InceptionOptions {
    int n_filt = 50;
    int branch_b_taps = 3;  // paper's explicit branch list: 1x1, 1x3, 1x8
    int branch_c_taps = 8;
};

// Repeated inception modules: three parallel branches (1x1; 1x1 -> 1x3;
// 1x1 -> 1x8) concatenated on the channel axis, 150 channels per module.
inline ModelSpec build_inception(int n_modules, InceptionOptions opt = {},
                                 int n_classes = 11,
                                 int hidden_dense = kDefaultHiddenDense) {
    if (n_modules < 1 || n_modules > 4)
        throw ConfigError("inception supports 1-4 modules, got " + std::to_string(n_modules));
    detail::SpecBuilder b;
    b.spec.n_classes = n_classes;
    int src = kInputSource;
    for (int m = 0; m < n_modules; ++m) {
        const std::string tag = "inc" + std::to_string(m + 1);
        b.conv(opt.n_filt, 1, tag + "_a1x1", src);
        int br_a = b.relu(tag + "_a_relu");
        b.conv(opt.n_filt, 1, tag + "_b1x1", src);
        b.relu(tag + "_b1_relu");
        b.conv(opt.n_filt, opt.branch_b_taps, tag + "_b_conv");
        int br_b = b.relu(tag + "_b_relu");
        b.conv(opt.n_filt, 1, tag + "_c1x1", src);
        b.relu(tag + "_c1_relu");
        b.conv(opt.n_filt, opt.branch_c_taps, tag + "_c_conv");
        int br_c = b.relu(tag + "_c_relu");
        int ab = b.concat(br_a, br_b, tag + "_cat_ab");
        b.concat(ab, br_c, tag + "_cat");
        src = b.dropout(kDropRate, tag + "_drop");
    }
    b.last = src;
    b.dense_block(hidden_dense, kDropRate, "dense1");
    b.head("softmax");
    return b.finish();
}

enum class CldnnBypass {
    FirstConv,  // concatenate the first conv block's output (Fig.-caption reading)
    RawInput,   // concatenate the raw I/Q input
    None,       // plain conv stack into the LSTM (ablation)
};

// Four conv layers into an LSTM, with a bypass concatenation before the
// recurrent layer.
inline ModelSpec build_cldnn(int n_filt = 50, int n_taps = 8, int lstm_units = 50,
                             CldnnBypass bypass = CldnnBypass::FirstConv,
                             int n_classes = 11, int hidden_dense = kDefaultHiddenDense) {
    detail::SpecBuilder b;
    b.spec.n_classes = n_classes;
    int conv1 = b.conv_block(n_filt, n_taps, kDropRate, "conv1", kInputSource);
    b.conv_block(n_filt, n_taps, kDropRate, "conv2", conv1);
    b.conv_block(n_filt, n_taps, kDropRate, "conv3", b.last);
    int conv4 = b.conv_block(n_filt, n_taps, kDropRate, "conv4", b.last);
    switch (bypass) {
        case CldnnBypass::FirstConv:
            b.concat(conv1, conv4, "bypass_cat");
            break;
        case CldnnBypass::RawInput:
            b.concat(kInputSource, conv4, "bypass_cat");
            break;
        case CldnnBypass::None:
            b.last = conv4;
            break;
    }
    b.lstm(lstm_units, "lstm");
    b.dense_block(hidden_dense, kDropRate, "dense1");
    b.head("softmax");
    return b.finish();
}

// Receiver-shaped network: matched-filter-like conv, decimating pool,
// synchronizer-like LSTM, dense classifier.
inline ModelSpec build_conv_matched_filter(int n_filt = 50, int n_taps = 8,
                                           int pool_width = 2, int lstm_units = 50,
                                           int n_classes = 11,
                                           int hidden_dense = kDefaultHiddenDense) {
    if (pool_width < 1) throw ConfigError("pool width must be >= 1");
    detail::SpecBuilder b;
    b.spec.n_classes = n_classes;
    b.conv(n_filt, n_taps, "conv1", kInputSource);
    b.relu("conv1_relu");
    b.maxpool(pool_width, pool_width, "pool");
    b.lstm(lstm_units, "lstm");
    b.dense_block(hidden_dense, kDropRate, "dense1");
    b.head("softmax");
    return b.finish();
}

}  // namespace modnet
