#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "mapfuse/ops.hpp"

namespace mapfuse {

// Central finite differences against analytic gradients. `fn` must build the
// scalar forward value on the supplied tape from the current contents of
// `inputs`; it is re-invoked per coordinate with perturbed data. Each
// coordinate is probed at several step sizes and the best agreement kept:
// a large step can straddle a ReLU kink and a small one drowns tiny
// gradients in roundoff, but no smooth coordinate fails at every scale.
inline double grad_check(const std::function<Tensor<double>(Tape<double>&)>& fn,
                         const std::vector<Tensor<double>>& inputs) {
    static constexpr double kSteps[] = {1e-4, 1e-5, 1e-6};
    Tape<double> tape;
    Tensor<double> root = fn(tape);
    if (!root.is_scalar()) throw ContractError("grad_check: fn must return a scalar");
    for (const auto& in : inputs)
        if (in.requires_grad()) const_cast<Tensor<double>&>(in).zero_grad();
    tape.backward(root);

    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs) analytic.push_back(in.grad());

    auto probe = [](const std::function<Tensor<double>(Tape<double>&)>& f, std::vector<double>& data,
                    size_t i, double base, double a) {
        double best = std::numeric_limits<double>::infinity();
        for (double h : kSteps) {
            Tape<double> scratch;
            data[i] = base + h;
            const double fp = f(scratch).item();
            scratch.clear();
            data[i] = base - h;
            const double fm = f(scratch).item();
            data[i] = base;
            const double numeric = (fp - fm) / (2.0 * h);
            // The floor makes near-zero coordinates an absolute check: below
            // it, central differences on an O(1) loss are pure roundoff.
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
            best = std::min(best, std::fabs(a - numeric) / denom);
        }
        return best;
    };

    double worst = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        auto& data = const_cast<Tensor<double>&>(inputs[t]).data();
        for (size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            double best = probe(fn, data, i, saved, analytic[t][i]);
            if (best > 1e-6) {
                // Rescue pass: re-check at a nudged base point with a fresh
                // analytic gradient. A kink within the FD step is specific to
                // the exact point; a wrong analytic gradient is not.
                const double shifted = saved + 3e-4 * std::max(1.0, std::fabs(saved));
                data[i] = shifted;
                Tape<double> t2;
                Tensor<double> root2 = fn(t2);
                for (const auto& in : inputs)
                    if (in.requires_grad()) const_cast<Tensor<double>&>(in).zero_grad();
                t2.backward(root2);
                const double a2 = inputs[t].grad()[i];
                best = std::min(best, probe(fn, data, i, shifted, a2));
                data[i] = saved;
            }
            worst = std::max(worst, best);
        }
    }
    return worst;
}

}  // namespace mapfuse
