#pragma once

#include <map>
#include <vector>

#include "modnet/dataset.hpp"
#include "modnet/model.hpp"

namespace modnet {

// Counts first, rates derived, so arithmetic identities (weighted per-SNR
// mean == all-SNR accuracy) hold exactly.
struct MetricsReport {
    std::size_t total = 0;
    std::size_t correct = 0;
    int n_classes = 0;

    std::vector<double> snr_grid_db;
    std::vector<std::size_t> per_snr_total;
    std::vector<std::size_t> per_snr_correct;

    std::vector<std::vector<std::size_t>> confusion_counts;  // [truth][pred]
    std::vector<std::size_t> per_class_total;
    std::vector<std::size_t> per_class_correct;

    double accuracy() const {
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
    double snr_accuracy(std::size_t si) const {
        return per_snr_total[si] == 0
                   ? 0.0
                   : static_cast<double>(per_snr_correct[si]) /
                         static_cast<double>(per_snr_total[si]);
    }
    double class_accuracy(std::size_t ci) const {
        return per_class_total[ci] == 0
                   ? 0.0
                   : static_cast<double>(per_class_correct[ci]) /
                         static_cast<double>(per_class_total[ci]);
    }
    // row-normalized confusion matrix; rows with samples sum to 1 exactly up
    // to rounding
    std::vector<std::vector<double>> confusion_normalized() const {
        std::vector<std::vector<double>> out(confusion_counts.size());
        for (std::size_t r = 0; r < confusion_counts.size(); ++r) {
            std::size_t row_total = 0;
            for (std::size_t v : confusion_counts[r]) row_total += v;
            out[r].resize(confusion_counts[r].size(), 0.0);
            if (row_total == 0) continue;
            for (std::size_t c = 0; c < confusion_counts[r].size(); ++c)
                out[r][c] = static_cast<double>(confusion_counts[r][c]) /
                            static_cast<double>(row_total);
        }
        return out;
    }
    // 95% binomial confidence half-width on the all-SNR accuracy
    double ci95_halfwidth() const {
        if (total == 0) return 0.0;
        double p = accuracy();
        return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(total));
    }
};

inline int argmax_row(const float* p, int k) {
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

// Scores a prediction list against labels; the model-independent core that
// evaluate() and the tests' synthetic predictors share.
inline MetricsReport evaluate_predictions(const std::vector<int>& predictions,
                                          const std::vector<int>& labels,
                                          const std::vector<float>& snr_labels_db,
                                          const std::vector<double>& snr_grid_db,
                                          int n_classes) {
    if (predictions.size() != labels.size() || labels.size() != snr_labels_db.size())
        throw ShapeError("evaluate_predictions: array lengths disagree");
    MetricsReport rep;
    rep.n_classes = n_classes;
    rep.snr_grid_db = snr_grid_db;
    rep.per_snr_total.assign(snr_grid_db.size(), 0);
    rep.per_snr_correct.assign(snr_grid_db.size(), 0);
    rep.confusion_counts.assign(static_cast<std::size_t>(n_classes),
                                std::vector<std::size_t>(static_cast<std::size_t>(n_classes), 0));
    rep.per_class_total.assign(static_cast<std::size_t>(n_classes), 0);
    rep.per_class_correct.assign(static_cast<std::size_t>(n_classes), 0);

    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int truth = labels[i];
        const int pred = predictions[i];
        if (truth < 0 || truth >= n_classes || pred < 0 || pred >= n_classes)
            throw IndexError("evaluate_predictions: label/prediction out of range");
        ++rep.total;
        ++rep.per_class_total[static_cast<std::size_t>(truth)];
        ++rep.confusion_counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)];
        int si = -1;
        for (std::size_t s = 0; s < snr_grid_db.size(); ++s)
            if (std::abs(snr_grid_db[s] - static_cast<double>(snr_labels_db[i])) < 1e-6) {
                si = static_cast<int>(s);
                break;
            }
        if (si < 0) throw IndexError("evaluate_predictions: SNR label not on grid");
        ++rep.per_snr_total[static_cast<std::size_t>(si)];
        if (pred == truth) {
            ++rep.correct;
            ++rep.per_snr_correct[static_cast<std::size_t>(si)];
            ++rep.per_class_correct[static_cast<std::size_t>(truth)];
        }
    }
    return rep;
}

// Batched inference over a bundle; returns argmax class per frame.
template <typename T>
std::vector<int> predict(const ModelSpec& spec, ModelState<T>& state,
                         const DatasetBundle& bundle, int batch_size = 256) {
    std::vector<int> preds;
    preds.reserve(bundle.frame_count());
    const std::size_t n = bundle.frame_count();
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const int bn = static_cast<int>(std::min<std::size_t>(batch_size, n - start));
        Tensor<T> batch(Shape{bn, 2, kFrameLen});
        for (int b = 0; b < bn; ++b) {
            const float* f = bundle.frame(start + static_cast<std::size_t>(b));
            T* dst = batch.data() + static_cast<std::size_t>(b) * kFrameFloats;
            for (int i = 0; i < kFrameFloats; ++i) dst[i] = static_cast<T>(f[i]);
        }
        Tape<T> tape;
        Var<T> x = tape.leaf(std::move(batch), false);
        auto fwd = forward_graph(tape, spec, state, x, Mode::Infer, nullptr, false);
        const Tensor<T>& probs = tape.value(fwd.probs);
        for (int b = 0; b < bn; ++b) {
            const T* row = probs.data() + static_cast<std::size_t>(b) * spec.n_classes;
            int best = 0;
            for (int j = 1; j < spec.n_classes; ++j)
                if (row[j] > row[best]) best = j;
            preds.push_back(best);
        }
    }
    return preds;
}

// Top-1 metrics of a trained model over a (test) bundle.
template <typename T>
MetricsReport evaluate(ModelState<T>& state, const ModelSpec& spec,
                       const DatasetBundle& bundle, int batch_size = 256) {
    auto preds = predict(spec, state, bundle, batch_size);
    return evaluate_predictions(preds, bundle.mod_labels, bundle.snr_labels_db,
                                bundle.snr_grid_db, spec.n_classes);
}

}  // namespace modnet
