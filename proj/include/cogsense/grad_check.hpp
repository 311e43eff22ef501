#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cogsense/autodiff.hpp"
#include "cogsense/rng.hpp"
#include "cogsense/tensor.hpp"

namespace cogsense {

struct GradCheckEntry {
    int tensor_index = 0;
    int element = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    int checked = 0;
    double max_rel_err = 0.0;
    std::vector<GradCheckEntry> violations;
    bool passed() const { return violations.empty(); }
};

// Scalar loss built from the current contents of the checked tensors. The
// builder must read the tensors afresh on every call (Tape::param copies).
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Compares tape gradients against central finite differences, element by
// element. `max_elems_per_tensor` < 0 checks every element; otherwise a
// deterministic random subset per tensor.
inline GradCheckReport grad_check(std::span<Tensor* const> params, const LossBuilder& build,
                                  double h = 1e-5, double tol = 1e-4,
                                  int max_elems_per_tensor = -1, uint64_t seed = 0) {
    const auto eval = [&]() -> double {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (Tensor* p : params) vars.push_back(tape.param(*p));
        const Var loss = build(tape, vars);
        const double v = tape.value(loss).item();
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
        return v;
    };

    // One analytic pass.
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (Tensor* p : params) vars.push_back(tape.param(*p));
        const Var loss = build(tape, vars);
        if (!std::isfinite(tape.value(loss).item())) throw std::runtime_error("grad_check: non-finite loss");
        tape.backward(loss);
        for (Var v : vars) analytic.push_back(tape.grad(v));
    }

    GradCheckReport report;
    Rng rng(seed);
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        std::vector<int> elems;
        const int n = static_cast<int>(p.size());
        if (max_elems_per_tensor < 0 || max_elems_per_tensor >= n) {
            elems.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) elems[static_cast<size_t>(i)] = i;
        } else {
            for (int i = 0; i < max_elems_per_tensor; ++i) elems.push_back(rng.uniform_int(n));
        }
        for (int e : elems) {
            const double saved = p.values[static_cast<size_t>(e)];
            p.values[static_cast<size_t>(e)] = saved + h;
            const double f_plus = eval();
            p.values[static_cast<size_t>(e)] = saved - h;
            const double f_minus = eval();
            p.values[static_cast<size_t>(e)] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[k].values[static_cast<size_t>(e)];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-2});
            const double rel = std::fabs(a - numeric) / denom;
            ++report.checked;
            report.max_rel_err = std::max(report.max_rel_err, rel);
            if (rel > tol) {
                report.violations.push_back({static_cast<int>(k), e, a, numeric, rel});
            }
        }
    }
    return report;
}

}  // namespace cogsense
