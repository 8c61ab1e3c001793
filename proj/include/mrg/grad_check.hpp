#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mrg/ops.hpp"

namespace mrg {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // "param#p[i]" of the worst element
    size_t checked = 0;
};

/// Central-difference check of reverse-mode gradients. `loss_fn` must rebuild
/// the forward graph from the given parameter tensors each call and return a
/// scalar. Relative error uses a unit floor in the denominator so near-zero
/// gradients (e.g. through a softmax that sums to a constant) are compared
/// on an absolute scale.
inline GradCheckReport grad_check(std::vector<Tensor> params,
                                  const std::function<Tensor(Tape&)>& loss_fn,
                                  double h = 1e-5) {
    // Analytic pass.
    for (auto& p : params) p.zero_grad();
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));

    auto eval = [&]() -> double {
        Tape t;
        NoGradGuard guard(t);
        return loss_fn(t).item();
    };

    GradCheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = eval();
            vals[i] = keep - h;
            const double dn = eval();
            vals[i] = keep;
            const double numeric = (up - dn) / (2.0 * h);
            const double a = analytic[pi][i];
            const double rel = std::abs(a - numeric) /
                               std::max({std::abs(a), std::abs(numeric), 1.0});
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = strf("param#%zu[%zu] analytic=%s numeric=%s", pi, i,
                                 fmt_double(a).c_str(), fmt_double(numeric).c_str());
            }
        }
    }
    return rep;
}

} // namespace mrg
