#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "modnet/adam.hpp"
#include "modnet/dataset.hpp"
#include "modnet/metrics.hpp"
#include "modnet/model.hpp"

namespace modnet {

struct TrainConfig {
    int batch_size = 128;
    int max_epochs = 100;
    int patience = 5;  // epochs without val-loss improvement before stopping
    double f_train = 0.5;
    double f_val = 0.25;
    double f_test = 0.25;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 0;  // 0 -> use `seed`; sweeps share one split
    bool verbose = false;

    std::uint64_t effective_split_seed() const { return split_seed ? split_seed : seed; }

    void validate_config() const {
        if (batch_size < 1) throw ConfigError("train config: batch_size < 1");
        if (max_epochs < 1) throw ConfigError("train config: max_epochs < 1");
        if (patience < 1) throw ConfigError("train config: patience < 1");
        if (f_train <= 0 || f_val < 0 || f_test < 0 ||
            std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
            throw ConfigError("train config: split fractions must sum to 1");
    }
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_acc;
    std::vector<double> epoch_seconds;  // bookkeeping only, never serialized to CSV
    int best_epoch = -1;                // 0-based

    int epochs_to_best() const { return best_epoch + 1; }
    std::size_t epochs_run() const { return train_loss.size(); }
};

struct TrainResult {
    ModelState<float> state;  // parameters at the best validation loss
    TrainHistory history;
};

namespace detail {

inline Tensor<float> make_batch(const DatasetBundle& bundle,
                                const std::vector<std::size_t>& order,
                                std::size_t start, int bn, std::vector<int>* labels) {
    Tensor<float> batch(Shape{bn, 2, kFrameLen});
    labels->clear();
    for (int b = 0; b < bn; ++b) {
        std::size_t idx = order[start + static_cast<std::size_t>(b)];
        std::memcpy(batch.data() + static_cast<std::size_t>(b) * kFrameFloats,
                    bundle.frame(idx), sizeof(float) * kFrameFloats);
        labels->push_back(bundle.mod_labels[idx]);
    }
    return batch;
}

struct EvalStats {
    double loss = 0.0;
    double acc = 0.0;
};

// Mean cross-entropy and top-1 accuracy in infer mode.
inline EvalStats eval_split(const ModelSpec& spec, ModelState<float>& state,
                            const DatasetBundle& bundle, int batch_size) {
    EvalStats stats;
    const std::size_t n = bundle.frame_count();
    if (n == 0) return stats;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<int> labels;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const int bn = static_cast<int>(std::min<std::size_t>(batch_size, n - start));
        Tape<float> tape;
        Var<float> x = tape.leaf(make_batch(bundle, order, start, bn, &labels), false);
        auto fwd = forward_graph(tape, spec, state, x, Mode::Infer, nullptr, false);
        const Tensor<float>& probs = tape.value(fwd.probs);
        for (int b = 0; b < bn; ++b) {
            const float* row = probs.data() + static_cast<std::size_t>(b) * spec.n_classes;
            int label = labels[static_cast<std::size_t>(b)];
            double p = std::max(static_cast<double>(row[label]), kCrossEntropyClip);
            loss_sum += -std::log(p);
            if (argmax_row(row, spec.n_classes) == label) ++correct;
        }
    }
    stats.loss = loss_sum / static_cast<double>(n);
    stats.acc = static_cast<double>(correct) / static_cast<double>(n);
    return stats;
}

}  // namespace detail

// Minimizes mean categorical cross-entropy with Adam over the bundle's train
// partition; early-stops on validation loss and returns the best-validation
// parameters. Deterministic for a fixed config (init, shuffling and dropout
// all flow from named substreams of config.seed).
inline TrainResult train(const ModelSpec& spec, const DatasetBundle& bundle,
                         const TrainConfig& config) {
    config.validate_config();
    validate(spec);
    if (bundle.frame_count() == 0) throw ConfigError("train: empty dataset");

    auto splits = split_dataset(bundle, config.f_train, config.f_val, config.f_test,
                                config.effective_split_seed());
    const DatasetBundle& train_set = splits.train;
    const DatasetBundle& val_set = splits.val;
    if (train_set.frame_count() == 0) throw ConfigError("train: empty train split");
    if (static_cast<std::size_t>(config.batch_size) > train_set.frame_count())
        throw ConfigError("train: batch size exceeds train split size");

    Rng init_rng = Rng::substream(config.seed, "init");
    Rng shuffle_rng = Rng::substream(config.seed, "shuffle");
    Rng dropout_rng = Rng::substream(config.seed, "dropout");

    ModelState<float> state = init_model<float>(spec, init_rng);
    AdamState<float> adam;
    adam.lr = config.lr;
    {
        auto flat = state.flat();
        std::vector<const Tensor<float>*> cflat(flat.begin(), flat.end());
        adam.init(cflat);
    }

    TrainResult result;
    TrainHistory& hist = result.history;
    ModelState<float> best_state = state;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    const std::size_t n_train = train_set.frame_count();
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    std::vector<int> labels;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        int batch_index = 0;
        for (std::size_t start = 0; start < n_train;
             start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
            const int bn =
                static_cast<int>(std::min<std::size_t>(config.batch_size, n_train - start));
            try {
                Tape<float> tape;
                Var<float> x =
                    tape.leaf(detail::make_batch(train_set, order, start, bn, &labels), false);
                auto fwd = forward_graph(tape, spec, state, x, Mode::Train, &dropout_rng,
                                         /*param_grads=*/true);
                Var<float> loss = nll_mean(tape, log_softmax_op(tape, fwd.logits), labels);
                const double batch_loss = tape.value(loss)[0];
                if (!std::isfinite(batch_loss))
                    throw NumericError("non-finite training loss");
                tape.backward(loss);
                loss_sum += batch_loss * bn;

                auto params = state.flat();
                std::vector<const Tensor<float>*> grads;
                grads.reserve(params.size());
                for (const auto& pv : fwd.params) {
                    const Tensor<float>& g = tape.grad(pv);
                    grads.push_back(g.empty() ? nullptr : &g);
                }
                adam_step(params, grads, adam);
            } catch (const NumericError& e) {
                throw NumericError("training aborted at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index) + ": " +
                                   e.what());
            }
        }
        hist.train_loss.push_back(loss_sum / static_cast<double>(n_train));

        auto val = detail::eval_split(spec, state, val_set, config.batch_size);
        hist.val_loss.push_back(val.loss);
        hist.val_acc.push_back(val.acc);
        hist.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        if (config.verbose)
            std::fprintf(stderr, "epoch %3d  train %.4f  val %.4f  acc %.4f\n", epoch,
                         hist.train_loss.back(), val.loss, val.acc);

        if (val_set.frame_count() == 0 || val.loss < best_val) {
            best_val = val_set.frame_count() == 0 ? hist.train_loss.back() : val.loss;
            best_state = state;
            hist.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    result.state = std::move(best_state);
    return result;
}

}  // namespace modnet
