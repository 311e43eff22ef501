#pragma once

#include <cmath>
#include <map>
#include <string>

#include "cogsense/model.hpp"

namespace cogsense {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied directly to parameters
};

// Adaptive-moment estimation with decoupled weight decay. Moment slots are
// keyed by parameter name and updated in the fixed visit_params order, so a
// training run is a deterministic function of (initial state, gradients).
class Adam {
public:
    explicit Adam(AdamConfig config) : config_(config) {
        if (config_.learning_rate <= 0.0) {
            throw std::invalid_argument("Adam: learning rate must be positive");
        }
    }

    void step(ModelState& state, const std::map<std::string, Tensor>& grads) {
        ++t_;
        const double bias1 = 1.0 - std::pow(config_.beta1, t_);
        const double bias2 = 1.0 - std::pow(config_.beta2, t_);
        visit_params(state, [&](const std::string& name, Tensor& p) {
            auto it = grads.find(name);
            if (it == grads.end()) return;  // untouched parameter group
            const Tensor& g = it->second;
            if (!g.same_shape(p)) throw DimensionError("Adam: gradient shape mismatch for " + name);
            Tensor& m = slot(m_, name, p);
            Tensor& v = slot(v_, name, p);
            for (size_t i = 0; i < p.values.size(); ++i) {
                const double gi = g.values[i];
                m.values[i] = config_.beta1 * m.values[i] + (1.0 - config_.beta1) * gi;
                v.values[i] = config_.beta2 * v.values[i] + (1.0 - config_.beta2) * gi * gi;
                const double mhat = m.values[i] / bias1;
                const double vhat = v.values[i] / bias2;
                p.values[i] -= config_.learning_rate *
                               (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * p.values[i]);
            }
        });
    }

    int steps_taken() const { return t_; }

private:
    Tensor& slot(std::map<std::string, Tensor>& slots, const std::string& name, const Tensor& like) {
        auto it = slots.find(name);
        if (it == slots.end()) {
            it = slots.emplace(name, Tensor::zeros(like.rows(), like.cols())).first;
        }
        return it->second;
    }

    AdamConfig config_;
    int t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

// Gradients for every lifted parameter, keyed by name.
inline std::map<std::string, Tensor> collect_grads(const Tape& tape, const ParamVars& params) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : params.vars) {
        grads.emplace(name, tape.grad(var));
    }
    return grads;
}

}  // namespace cogsense
