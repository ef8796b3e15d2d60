#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "modnet/architectures.hpp"
#include "modnet/checkpoint.hpp"

using namespace modnet;

namespace {

int count_kind(const ModelSpec& spec, LayerKind k) {
    int n = 0;
    for (const auto& l : spec.layers)
        if (l.kind == k) ++n;
    return n;
}

const LayerSpec* nth_of_kind(const ModelSpec& spec, LayerKind k, int n) {
    for (const auto& l : spec.layers)
        if (l.kind == k && n-- == 0) return &l;
    return nullptr;
}

}  // namespace

TEST(Builders, BaselineWeightShapes) {
    auto spec = build_baseline_cnn(50, 8);
    auto shapes = infer_shapes(spec);
    // first conv: 50 x 2 x 8, second conv: 50 x 50 x 8
    auto p0 = layer_param_shapes(spec, 0, shapes);
    EXPECT_EQ(p0[0], (Shape{50, 2, 8}));
    int conv2_idx = -1;
    for (std::size_t i = 1; i < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::Conv1d) {
            conv2_idx = static_cast<int>(i);
            break;
        }
    ASSERT_GE(conv2_idx, 0);
    auto p1 = layer_param_shapes(spec, static_cast<std::size_t>(conv2_idx), shapes);
    EXPECT_EQ(p1[0], (Shape{50, 50, 8}));
}

TEST(Builders, FilterSweepDomainBuilds) {
    std::size_t prev = 0;
    for (int nf = 20; nf <= 90; nf += 10) {
        auto spec = build_baseline_cnn(nf, 3);
        EXPECT_NO_THROW(validate(spec));
        std::size_t count = param_count(spec);
        EXPECT_GT(count, prev) << "param count must increase with filters";
        prev = count;
    }
}

TEST(Builders, DeepCnnDepthTwoEqualsBaseline) {
    auto a = build_baseline_cnn(50, 8);
    auto b = build_deep_cnn(2, 50, 8);
    EXPECT_EQ(spec_to_json(a), spec_to_json(b));
}

TEST(Builders, DeepCnnKeepsTimeExtent) {
    auto spec = build_deep_cnn(9, 50, 8);
    auto shapes = infer_shapes(spec);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Conv1d) {
            EXPECT_EQ(shapes[i][1], 128) << "conv layer " << i;
        }
    }
}

TEST(Builders, DeepCnnDepthOneRejected) {
    EXPECT_THROW(build_deep_cnn(1), ConfigError);
}

TEST(Builders, ResnetTopology) {
    auto spec9 = build_resnet(9);
    EXPECT_EQ(count_kind(spec9, LayerKind::ResidualAdd), 4);
    // conv layers: 9 main-path + 1 projection (first pair, 2->50 channels)
    EXPECT_EQ(count_kind(spec9, LayerKind::Conv1d), 10);
    EXPECT_NO_THROW(validate(spec9));

    auto spec5 = build_resnet(5);
    EXPECT_EQ(count_kind(spec5, LayerKind::ResidualAdd), 2);
    EXPECT_NO_THROW(validate(spec5));

    EXPECT_THROW(build_resnet(4), ConfigError);
    EXPECT_THROW(build_resnet(10), ConfigError);
}

TEST(Builders, ResnetAddOperandsShapeMatched) {
    for (int layers = 5; layers <= 9; ++layers) {
        auto spec = build_resnet(layers);
        auto shapes = infer_shapes(spec);
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            if (spec.layers[i].kind != LayerKind::ResidualAdd) continue;
            Shape a = spec.layers[i].sources[0] == kInputSource
                          ? Shape{spec.input_channels, spec.input_length}
                          : shapes[static_cast<std::size_t>(spec.layers[i].sources[0])];
            Shape b = shapes[static_cast<std::size_t>(spec.layers[i].sources[1])];
            EXPECT_EQ(a, b);
        }
    }
}

TEST(Builders, InceptionModuleChannels) {
    auto spec = build_inception(2);
    auto shapes = infer_shapes(spec);
    int seen = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind != LayerKind::Concat) continue;
        ++seen;
        if (seen % 2 == 0) {  // second concat of each module carries all 3 branches
            EXPECT_EQ(shapes[i][0], 150);
        }
        EXPECT_EQ(shapes[i][1], 128);
    }
    EXPECT_EQ(seen, 4);  // two concats per module
    EXPECT_NO_THROW(validate(build_inception(1)));
    EXPECT_NO_THROW(validate(build_inception(4)));
    EXPECT_THROW(build_inception(0), ConfigError);
    EXPECT_THROW(build_inception(5), ConfigError);
}

TEST(Builders, CldnnBypassChannels) {
    auto spec = build_cldnn();
    auto shapes = infer_shapes(spec);
    bool found = false;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Concat) {
            found = true;
            EXPECT_EQ(shapes[i][0], 100);  // 50 + 50
            EXPECT_EQ(shapes[i][1], 128);
        }
    }
    EXPECT_TRUE(found);

    auto raw = build_cldnn(50, 8, 50, CldnnBypass::RawInput);
    auto raw_shapes = infer_shapes(raw);
    for (std::size_t i = 0; i < raw.layers.size(); ++i) {
        if (raw.layers[i].kind == LayerKind::Concat) {
            EXPECT_EQ(raw_shapes[i][0], 52);  // 2 + 50
        }
    }

    auto plain = build_cldnn(50, 8, 50, CldnnBypass::None);
    EXPECT_EQ(count_kind(plain, LayerKind::Concat), 0);
    EXPECT_NO_THROW(validate(plain));
}

TEST(Builders, ConvMatchedFilterPooling) {
    auto spec = build_conv_matched_filter(50, 8, 2, 50);
    auto shapes = infer_shapes(spec);
    const LayerSpec* pool = nth_of_kind(spec, LayerKind::MaxPool, 0);
    ASSERT_NE(pool, nullptr);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::MaxPool) {
            EXPECT_EQ(shapes[i][1], 64);
        }
    }

    EXPECT_NO_THROW(validate(build_conv_matched_filter(50, 8, 1, 50)));
    for (int taps = 3; taps <= 12; ++taps)
        EXPECT_NO_THROW(validate(build_conv_matched_filter(50, taps, 2, 50)));
}

TEST(Builders, EveryBuilderHasOneTerminalHead) {
    std::vector<ModelSpec> specs = {
        build_baseline_cnn(), build_deep_cnn(5),        build_resnet(7),
        build_inception(3),   build_cldnn(),            build_conv_matched_filter()};
    for (const auto& spec : specs) {
        EXPECT_EQ(count_kind(spec, LayerKind::SoftmaxHead), 1);
        EXPECT_EQ(spec.layers.back().kind, LayerKind::SoftmaxHead);
    }
}

TEST(Forward, FreshModelNearUniformEntropy) {
    auto spec = build_baseline_cnn(16, 8);
    Rng init_rng = Rng::substream(7, "init");
    auto state = init_model<float>(spec, init_rng);
    Rng frame_rng(3);
    double worst_ratio = 1.0;
    for (int trial = 0; trial < 5; ++trial) {
        Tensor<float> frame(Shape{2, 128});
        for (std::size_t i = 0; i < frame.size(); ++i)
            frame[i] = static_cast<float>(frame_rng.normal());
        auto p = forward_model(spec, state, frame);
        double entropy = 0, total = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_GT(p[i], 0.f);
            entropy -= static_cast<double>(p[i]) * std::log(static_cast<double>(p[i]));
            total += p[i];
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
        worst_ratio = std::min(worst_ratio, entropy / std::log(11.0));
    }
    EXPECT_GT(worst_ratio, 0.95);
}

TEST(Forward, InferModeDeterministic) {
    auto spec = build_cldnn(8, 4, 8, CldnnBypass::FirstConv, 11, 16);
    Rng init_rng = Rng::substream(21, "init");
    auto state = init_model<float>(spec, init_rng);
    Tensor<float> frame(Shape{2, 128});
    Rng frame_rng(4);
    for (std::size_t i = 0; i < frame.size(); ++i)
        frame[i] = static_cast<float>(frame_rng.normal());
    auto p1 = forward_model(spec, state, frame);
    auto p2 = forward_model(spec, state, frame);
    for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i], p2[i]);
}

TEST(Forward, WrongFrameShapeRejected) {
    auto spec = build_baseline_cnn(4, 3);
    Rng rng(1);
    auto state = init_model<float>(spec, rng);
    Tensor<float> bad(Shape{2, 64});
    EXPECT_THROW(forward_model(spec, state, bad), ShapeError);
}

TEST(Checkpoint, RoundTripPreservesSpecAndParams) {
    auto spec = build_cldnn(6, 4, 6, CldnnBypass::FirstConv, 11, 12);
    Rng rng(77);
    auto state = init_model<float>(spec, rng);
    auto path = std::filesystem::temp_directory_path() / "modnet_test_ckpt.mdnt";
    save_checkpoint(path.string(), spec, state);
    auto loaded = load_checkpoint(path.string());
    EXPECT_EQ(spec_to_json(loaded.spec), spec_to_json(spec));
    auto a = state.flat();
    auto e = loaded.state.flat();
    ASSERT_EQ(a.size(), e.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i]->shape(), e[i]->shape());
        for (std::size_t j = 0; j < a[i]->size(); ++j)
            EXPECT_EQ((*a[i])[j], (*e[i])[j]);  // bitwise for f32 payloads
    }
    std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptedFileRejected) {
    auto spec = build_baseline_cnn(4, 3);
    Rng rng(78);
    auto state = init_model<float>(spec, rng);
    auto path = std::filesystem::temp_directory_path() / "modnet_test_ckpt_bad.mdnt";
    save_checkpoint(path.string(), spec, state);
    // truncate the tail
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 17);
    EXPECT_THROW(load_checkpoint(path.string()), IoError);
    std::filesystem::remove(path);
}

TEST(ModelSpec, InvalidGraphsRejected) {
    // two heads
    auto spec = build_baseline_cnn(4, 3);
    auto twice = spec;
    LayerSpec extra;
    extra.kind = LayerKind::SoftmaxHead;
    extra.sources = {static_cast<int>(twice.layers.size()) - 1};
    twice.layers.push_back(extra);
    EXPECT_THROW(validate(twice), ShapeError);

    // forward reference
    auto fwd = spec;
    fwd.layers[0].sources = {5};
    EXPECT_THROW(validate(fwd), ShapeError);

    // concat with mismatched time extents
    ModelSpec bad;
    bad.n_classes = 3;
    LayerSpec c1;
    c1.kind = LayerKind::MaxPool;
    c1.sources = {kInputSource};
    c1.width = 2;
    c1.stride = 2;
    bad.layers.push_back(c1);
    LayerSpec cat;
    cat.kind = LayerKind::Concat;
    cat.sources = {kInputSource, 0};
    bad.layers.push_back(cat);
    LayerSpec head;
    head.kind = LayerKind::SoftmaxHead;
    head.sources = {1};
    bad.layers.push_back(head);
    EXPECT_THROW(validate(bad), ShapeError);
}
