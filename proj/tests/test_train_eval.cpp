#include <gtest/gtest.h>

#include "modnet/architectures.hpp"
#include "modnet/sweeps.hpp"
#include "modnet/train.hpp"

using namespace modnet;

namespace {

// tiny 2-class bundle for fast smoke training
DatasetBundle smoke_bundle(double snr_db = 18.0, int frames_per_cell = 100,
                           std::uint64_t seed = 3) {
    DatasetConfig c;
    c.classes = {"bpsk", "gfsk"};
    c.snr_grid_db = {snr_db};
    c.frames_per_cell = frames_per_cell;
    c.seed = seed;
    return synth_dataset(c);
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
    auto bundle = smoke_bundle(18.0, 24);
    auto spec = build_baseline_cnn(8, 4, 2, 16);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 3;
    cfg.lr = 0.0;
    cfg.seed = 5;

    Rng init_rng = Rng::substream(cfg.seed, "init");
    auto reference = init_model<float>(spec, init_rng);

    auto result = train(spec, bundle, cfg);
    auto got = result.state.flat();
    auto want = reference.flat();
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i)
        for (std::size_t j = 0; j < got[i]->size(); ++j)
            ASSERT_EQ((*got[i])[j], (*want[i])[j]);

    // parameters never move, so the dropout-free validation loss is constant
    for (std::size_t e = 1; e < result.history.val_loss.size(); ++e)
        EXPECT_DOUBLE_EQ(result.history.val_loss[e], result.history.val_loss[0]);
}

TEST(Train, DeterministicHistoryGivenSeed) {
    auto bundle = smoke_bundle(18.0, 32);
    auto spec = build_baseline_cnn(8, 4, 2, 16);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 4;
    cfg.seed = 11;
    auto r1 = train(spec, bundle, cfg);
    auto r2 = train(spec, bundle, cfg);
    EXPECT_EQ(r1.history.train_loss, r2.history.train_loss);
    EXPECT_EQ(r1.history.val_loss, r2.history.val_loss);
    EXPECT_EQ(r1.history.val_acc, r2.history.val_acc);
    EXPECT_EQ(r1.history.best_epoch, r2.history.best_epoch);

    cfg.seed = 12;
    auto r3 = train(spec, bundle, cfg);
    EXPECT_NE(r1.history.train_loss, r3.history.train_loss);
}

TEST(Train, TwoClassSmokeReachesNinetyFivePercent) {
    // linearly-trivial pair: BPSK vs GFSK at +18 dB
    auto bundle = smoke_bundle(18.0, 100);
    auto spec = build_baseline_cnn(50, 8, 2, 128);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 20;
    cfg.lr = 2e-3;
    cfg.seed = 21;
    auto result = train(spec, bundle, cfg);
    double best_acc = 0.0;
    for (double a : result.history.val_acc) best_acc = std::max(best_acc, a);
    EXPECT_GE(best_acc, 0.95);
}

TEST(Train, EarlyStopReturnsBestValidationState) {
    auto bundle = smoke_bundle(10.0, 60, 9);
    auto spec = build_baseline_cnn(8, 4, 2, 16);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.max_epochs = 12;
    cfg.patience = 3;
    cfg.seed = 31;
    auto result = train(spec, bundle, cfg);
    double best_hist = *std::min_element(result.history.val_loss.begin(),
                                         result.history.val_loss.end());
    EXPECT_EQ(result.history.val_loss[static_cast<std::size_t>(result.history.best_epoch)],
              best_hist);

    // re-evaluating the returned state reproduces the best epoch's loss
    auto splits = split_dataset(bundle, cfg.f_train, cfg.f_val, cfg.f_test, cfg.seed);
    auto stats = detail::eval_split(spec, result.state, splits.val, cfg.batch_size);
    EXPECT_NEAR(stats.loss, best_hist, 1e-9);
}

TEST(Train, LossDecreasesOverFirstFiveAdamSteps) {
    // statistical property over 20 seeds on one fixed batch
    auto bundle = smoke_bundle(18.0, 20, 13);
    auto spec = build_baseline_cnn(50, 8, 2, 128);

    int improved = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Rng init_rng = Rng::substream(100 + static_cast<std::uint64_t>(s), "init");
        auto state = init_model<float>(spec, init_rng);
        AdamState<float> adam;
        {
            auto flat = state.flat();
            std::vector<const Tensor<float>*> cflat(flat.begin(), flat.end());
            adam.init(cflat);
        }
        Rng dropout_rng = Rng::substream(100 + static_cast<std::uint64_t>(s), "dropout");

        const int bn = 16;
        Tensor<float> batch(Shape{bn, 2, kFrameLen});
        std::vector<int> labels;
        for (int b = 0; b < bn; ++b) {
            std::memcpy(batch.data() + static_cast<std::size_t>(b) * kFrameFloats,
                        bundle.frame(static_cast<std::size_t>(b)), sizeof(float) * kFrameFloats);
            labels.push_back(bundle.mod_labels[static_cast<std::size_t>(b)]);
        }

        auto loss_of = [&](bool update) {
            double last = 0.0;
            Tape<float> tape;
            Var<float> x = tape.leaf(batch, false);
            auto fwd = forward_graph(tape, spec, state, x, Mode::Train, &dropout_rng, update);
            Var<float> loss = nll_mean(tape, log_softmax_op(tape, fwd.logits), labels);
            last = tape.value(loss)[0];
            if (update) {
                tape.backward(loss);
                auto params = state.flat();
                std::vector<const Tensor<float>*> grads;
                for (const auto& pv : fwd.params) {
                    const Tensor<float>& g = tape.grad(pv);
                    grads.push_back(g.empty() ? nullptr : &g);
                }
                adam_step(params, grads, adam);
            }
            return last;
        };

        double first = loss_of(true);
        for (int step = 1; step < 5; ++step) loss_of(true);
        double after = loss_of(false);
        if (after < first) ++improved;
    }
    EXPECT_GE(improved, 19) << improved << "/" << seeds;
}

TEST(Train, ExplodingRunAbortsWithDiagnostic) {
    auto bundle = smoke_bundle(18.0, 24);
    auto spec = build_baseline_cnn(8, 4, 2, 16);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 5;
    cfg.lr = 1e30;  // guaranteed float overflow within an epoch or two
    cfg.seed = 41;
    try {
        train(spec, bundle, cfg);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
        EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
    }
}

TEST(Train, RejectsBadInputs) {
    auto bundle = smoke_bundle(18.0, 10);
    auto spec = build_baseline_cnn(8, 4, 2, 16);
    TrainConfig cfg;
    cfg.batch_size = 4096;  // larger than the train split
    EXPECT_THROW(train(spec, bundle, cfg), ConfigError);

    DatasetBundle empty;
    TrainConfig ok;
    EXPECT_THROW(train(spec, empty, ok), ConfigError);
}

TEST(Evaluate, OraclePredictorScoresPerfectly) {
    auto bundle = smoke_bundle(18.0, 30);
    auto report = evaluate_predictions(bundle.mod_labels, bundle.mod_labels,
                                       bundle.snr_labels_db, bundle.snr_grid_db, 2);
    EXPECT_DOUBLE_EQ(report.accuracy(), 1.0);
    auto confusion = report.confusion_normalized();
    for (std::size_t r = 0; r < confusion.size(); ++r)
        for (std::size_t c = 0; c < confusion[r].size(); ++c)
            EXPECT_DOUBLE_EQ(confusion[r][c], r == c ? 1.0 : 0.0);
}

TEST(Evaluate, UniformRandomPredictorNearChance) {
    DatasetConfig c;
    c.snr_grid_db = {0.0};
    c.frames_per_cell = 100;  // 11 classes x 100
    c.seed = 7;
    auto bundle = synth_dataset(c);
    Rng rng(55);
    std::vector<int> preds;
    for (std::size_t i = 0; i < bundle.frame_count(); ++i)
        preds.push_back(static_cast<int>(rng.uniform_index(11)));
    auto report = evaluate_predictions(preds, bundle.mod_labels, bundle.snr_labels_db,
                                       bundle.snr_grid_db, 11);
    const double p = 1.0 / 11.0;
    const double n = static_cast<double>(report.total);
    double sigma = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(report.accuracy(), p, 3 * sigma);
}

TEST(Evaluate, WeightedPerSnrMeanEqualsOverallAccuracy) {
    DatasetConfig c;
    c.classes = {"bpsk", "qpsk"};
    c.snr_grid_db = {-10.0, 0.0, 10.0};
    c.frames_per_cell = 40;
    c.seed = 17;
    auto bundle = synth_dataset(c);
    Rng rng(18);
    std::vector<int> preds;
    for (std::size_t i = 0; i < bundle.frame_count(); ++i)
        preds.push_back(static_cast<int>(rng.uniform_index(2)));
    auto rep = evaluate_predictions(preds, bundle.mod_labels, bundle.snr_labels_db,
                                    bundle.snr_grid_db, 2);
    // exact identity over integer counts
    std::size_t correct = 0, total = 0;
    for (std::size_t s = 0; s < rep.snr_grid_db.size(); ++s) {
        correct += rep.per_snr_correct[s];
        total += rep.per_snr_total[s];
    }
    EXPECT_EQ(correct, rep.correct);
    EXPECT_EQ(total, rep.total);

    // confusion rows with samples sum to 1
    auto confusion = rep.confusion_normalized();
    for (std::size_t r = 0; r < confusion.size(); ++r) {
        double row = 0.0;
        for (double v : confusion[r]) row += v;
        if (rep.per_class_total[r] > 0) EXPECT_NEAR(row, 1.0, 1e-9);
    }

    // trace/K equals mean per-class accuracy
    double trace = 0.0, mean_class = 0.0;
    for (std::size_t k = 0; k < confusion.size(); ++k) {
        trace += confusion[k][k];
        mean_class += rep.class_accuracy(k);
    }
    EXPECT_NEAR(trace / 2.0, mean_class / 2.0, 1e-12);
}

TEST(Sweeps, RowCountsAndSharedSplit) {
    DatasetConfig c;
    c.classes = {"bpsk", "qpsk"};
    c.snr_grid_db = {18.0};
    c.frames_per_cell = 24;
    c.seed = 23;
    auto bundle = synth_dataset(c);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 1;
    cfg.seed = 29;

    auto filters = sweep_filters(bundle, cfg, 2);
    EXPECT_EQ(filters.size(), 8u);
    for (std::size_t i = 0; i < filters.size(); ++i)
        EXPECT_DOUBLE_EQ(filters[i].param_value, 20.0 + 10.0 * static_cast<double>(i));

    auto taps = sweep_taps(bundle, cfg, 2);
    EXPECT_EQ(taps.size(), 10u);
    EXPECT_DOUBLE_EQ(taps.front().param_value, 3.0);
    EXPECT_DOUBLE_EQ(taps.back().param_value, 12.0);

    // identical test partition across rows: totals agree everywhere
    for (const auto& row : taps) {
        EXPECT_EQ(row.test_metrics.total, taps.front().test_metrics.total);
        EXPECT_EQ(row.test_metrics.per_snr_total, taps.front().test_metrics.per_snr_total);
    }
}

TEST(Sweeps, RowReproducibleFromRowSeed) {
    DatasetConfig c;
    c.classes = {"bpsk", "gfsk"};
    c.snr_grid_db = {18.0};
    c.frames_per_cell = 24;
    c.seed = 31;
    auto bundle = synth_dataset(c);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 2;
    cfg.seed = 37;

    auto rows = sweep_taps(bundle, cfg, 2);
    const auto& row = rows[2];
    TrainConfig row_cfg = cfg;
    row_cfg.split_seed = cfg.seed;
    auto again = run_row(row.key, row.param_value,
                         build_baseline_cnn(50, 5, 2), bundle, row_cfg, row.row_seed);
    EXPECT_EQ(again.history.train_loss, row.history.train_loss);
    EXPECT_EQ(again.test_metrics.correct, row.test_metrics.correct);
}

TEST(Sweeps, CompareCoversFiveArchitectures) {
    DatasetConfig c;
    c.classes = {"bpsk", "qpsk"};
    c.snr_grid_db = {18.0};
    c.frames_per_cell = 16;
    c.seed = 41;
    auto bundle = synth_dataset(c);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 1;
    cfg.seed = 43;

    auto rows = compare_architectures(bundle, cfg, 2);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].key, "baseline");
    EXPECT_EQ(rows[4].key, "conv_matched_filter");
    for (const auto& row : rows) {
        EXPECT_GT(row.history.epochs_to_best(), 0);
        EXPECT_EQ(row.test_metrics.total, rows[0].test_metrics.total);
    }
}
