#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "modnet/architectures.hpp"
#include "modnet/parallel.hpp"
#include "modnet/train.hpp"

namespace modnet {

struct SweepRowResult {
    std::string key;  // e.g. "40" for n_filt=40, or an architecture name
    double param_value = 0.0;
    std::uint64_t row_seed = 0;
    MetricsReport test_metrics;
    TrainHistory history;
    double seconds = 0.0;
};

// One train+evaluate job: trains on the bundle's train/val partitions and
// scores the held-out test partition (the split is shared across rows via
// config.split_seed).
inline SweepRowResult run_row(const std::string& key, double param_value,
                              const ModelSpec& spec, const DatasetBundle& bundle,
                              TrainConfig config, std::uint64_t row_seed) {
    auto t0 = std::chrono::steady_clock::now();
    SweepRowResult row;
    row.key = key;
    row.param_value = param_value;
    row.row_seed = row_seed;
    config.split_seed = config.effective_split_seed();
    config.seed = row_seed;
    auto trained = train(spec, bundle, config);
    auto splits = split_dataset(bundle, config.f_train, config.f_val, config.f_test,
                                config.split_seed);
    row.test_metrics = evaluate(trained.state, spec, splits.test, config.batch_size);
    row.history = std::move(trained.history);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

namespace detail {

struct SweepJob {
    std::string key;
    double param_value;
    std::function<ModelSpec()> build;
};

inline std::vector<SweepRowResult> run_jobs(const std::vector<SweepJob>& jobs,
                                            const DatasetBundle& bundle,
                                            const TrainConfig& config,
                                            const std::string& sweep_name, int n_jobs) {
    std::vector<SweepRowResult> rows(jobs.size());
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= jobs.size()) return;
                i = next++;
            }
            std::uint64_t row_seed =
                Rng::derive_seed(config.seed, "sweep:" + sweep_name + ":" + jobs[i].key);
            rows[i] = run_row(jobs[i].key, jobs[i].param_value, jobs[i].build(), bundle,
                              config, row_seed);
        }
    };
    if (n_jobs <= 1) {
        worker();
    } else {
        // rows are the parallel unit here; keep per-kernel threading off
        KernelThreadsGuard guard(1);
        std::vector<std::thread> pool;
        for (int t = 0; t < n_jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return rows;
}

}  // namespace detail

// Fig.-3 protocol: 20..90 filters in steps of 10, two conv layers of 1x3
// filters.
inline std::vector<SweepRowResult> sweep_filters(const DatasetBundle& bundle,
                                                 const TrainConfig& config,
                                                 int n_jobs = 1) {
    const int n_classes = static_cast<int>(bundle.class_names.size());
    std::vector<detail::SweepJob> jobs;
    for (int nf = 20; nf <= 90; nf += 10)
        jobs.push_back({std::to_string(nf), static_cast<double>(nf),
                        [nf, n_classes] { return build_baseline_cnn(nf, 3, n_classes); }});
    return detail::run_jobs(jobs, bundle, config, "filters", n_jobs);
}

// Fig.-4 protocol: 50 filters, tap count 3..12.
inline std::vector<SweepRowResult> sweep_taps(const DatasetBundle& bundle,
                                              const TrainConfig& config, int n_jobs = 1) {
    const int n_classes = static_cast<int>(bundle.class_names.size());
    std::vector<detail::SweepJob> jobs;
    for (int taps = 3; taps <= 12; ++taps)
        jobs.push_back({std::to_string(taps), static_cast<double>(taps),
                        [taps, n_classes] { return build_baseline_cnn(50, taps, n_classes); }});
    return detail::run_jobs(jobs, bundle, config, "taps", n_jobs);
}

// Depth protocol: 2..9 conv layers of 50 1x8 filters.
inline std::vector<SweepRowResult> sweep_depth(const DatasetBundle& bundle,
                                               const TrainConfig& config, int n_jobs = 1) {
    const int n_classes = static_cast<int>(bundle.class_names.size());
    std::vector<detail::SweepJob> jobs;
    for (int depth = 2; depth <= 9; ++depth)
        jobs.push_back({std::to_string(depth), static_cast<double>(depth),
                        [depth, n_classes] { return build_deep_cnn(depth, 50, 8, n_classes); }});
    return detail::run_jobs(jobs, bundle, config, "depth", n_jobs);
}

inline const std::vector<std::string>& compare_arch_names() {
    static const std::vector<std::string> names = {"baseline", "resnet9", "inception2",
                                                   "cldnn", "conv_matched_filter"};
    return names;
}

inline ModelSpec build_arch_by_name(const std::string& name, int n_classes) {
    if (name == "baseline") return build_baseline_cnn(50, 8, n_classes);
    if (name == "resnet9") return build_resnet(9, 50, 8, n_classes);
    if (name == "inception2") return build_inception(2, {}, n_classes);
    if (name == "cldnn") return build_cldnn(50, 8, 50, CldnnBypass::FirstConv, n_classes);
    if (name == "conv_matched_filter")
        return build_conv_matched_filter(50, 8, 2, 50, n_classes);
    throw ConfigError("unknown architecture '" + name + "'");
}

// Trains the paper's five architectures under an identical config and test
// split; per-architecture metrics plus training histories (epochs-to-best).
inline std::vector<SweepRowResult> compare_architectures(const DatasetBundle& bundle,
                                                         const TrainConfig& config,
                                                         int n_jobs = 1) {
    const int n_classes = static_cast<int>(bundle.class_names.size());
    std::vector<detail::SweepJob> jobs;
    double idx = 0.0;
    for (const auto& name : compare_arch_names())
        jobs.push_back({name, idx++, [name, n_classes] {
                            return build_arch_by_name(name, n_classes);
                        }});
    return detail::run_jobs(jobs, bundle, config, "compare", n_jobs);
}

}  // namespace modnet
