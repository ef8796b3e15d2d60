#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modnet/nn_ops.hpp"
#include "modnet/rng.hpp"
#include "modnet/tape.hpp"

namespace modnet {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t entries_checked = 0;
    int worst_input = -1;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool pass(double tolerance) const { return max_rel_err < tolerance; }

    std::string describe() const {
        return "max rel err " + std::to_string(max_rel_err) + " (input " +
               std::to_string(worst_input) + "[" + std::to_string(worst_index) +
               "] analytic=" + std::to_string(worst_analytic) +
               " numeric=" + std::to_string(worst_numeric) + ", " +
               std::to_string(entries_checked) + " entries)";
    }
};

// Compares analytic gradients against central finite differences in 64-bit.
//
// `build` maps (tape, vars-for-inputs) to any output Var; the harness projects
// the output to a scalar with a fixed random weighting so index-permutation
// bugs cannot hide inside a plain sum. Element subset sampling uses a fixed
// seed so reports are reproducible.
using GradCheckFn =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline GradCheckReport gradcheck(const GradCheckFn& build,
                                 const std::vector<Tensor<double>>& inputs,
                                 double h = 1e-5,
                                 std::size_t max_samples_per_input = 0,
                                 std::uint64_t seed = 12345) {
    auto run = [&](const std::vector<Tensor<double>>& ins, bool want_grads,
                   std::vector<Tensor<double>>* grads_out) -> double {
        Tape<double> tape;
        std::vector<Var<double>> vars;
        vars.reserve(ins.size());
        for (const auto& t : ins) vars.push_back(tape.leaf(t, want_grads));
        Var<double> out = build(tape, vars);
        // fixed projection, regenerated identically on every call
        Rng r = Rng::substream(seed, "gradcheck-projection");
        Tensor<double> w(tape.value(out).shape());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = r.uniform(-1.0, 1.0);
        Var<double> loss = sum(tape, mul(tape, out, tape.leaf(std::move(w), false)));
        double value = tape.value(loss)[0];
        if (want_grads) {
            tape.backward(loss);
            grads_out->clear();
            for (std::size_t i = 0; i < vars.size(); ++i) {
                const Tensor<double>& g = tape.grad(vars[i]);
                grads_out->push_back(g.empty() ? Tensor<double>(ins[i].shape()) : g);
            }
        }
        return value;
    };

    std::vector<Tensor<double>> analytic;
    run(inputs, true, &analytic);

    GradCheckReport report;
    std::vector<Tensor<double>> work = inputs;
    Rng sample_rng = Rng::substream(seed, "gradcheck-sampling");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::size_t n = inputs[i].size();
        std::vector<std::size_t> idx(n);
        for (std::size_t j = 0; j < n; ++j) idx[j] = j;
        if (max_samples_per_input > 0 && n > max_samples_per_input) {
            sample_rng.shuffle(idx.begin(), idx.end());
            idx.resize(max_samples_per_input);
        }
        for (std::size_t j : idx) {
            const double orig = work[i][j];
            work[i][j] = orig + h;
            const double lp = run(work, false, nullptr);
            work[i][j] = orig - h;
            const double lm = run(work, false, nullptr);
            work[i][j] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[i][j];
            const double denom = std::max(std::abs(a) + std::abs(numeric), 1e-4);
            const double rel = std::abs(a - numeric) / denom;
            ++report.entries_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_input = static_cast<int>(i);
                report.worst_index = j;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace modnet
