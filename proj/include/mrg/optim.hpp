#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mrg/tensor.hpp"

namespace mrg {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// AdamW with decoupled weight decay:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * p )
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg) : cfg_(cfg), params_(std::move(params)) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            if (!p.has_grad()) continue;
            const auto& g = p.grad();
            auto& vals = p.values();
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (size_t i = 0; i < vals.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                vals[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                      cfg_.weight_decay * vals[i]);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    int64_t step_count() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    const AdamWConfig& config() const { return cfg_; }

    void restore_state(int64_t t, std::vector<std::vector<double>> m,
                       std::vector<std::vector<double>> v) {
        if (m.size() != params_.size() || v.size() != params_.size())
            throw ShapeError(strf("optimizer state: %zu/%zu slots vs %zu params", m.size(),
                                  v.size(), params_.size()));
        for (size_t i = 0; i < params_.size(); ++i)
            if (m[i].size() != params_[i].size() || v[i].size() != params_[i].size())
                throw ShapeError(strf("optimizer state: slot %zu size mismatch", i));
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace mrg
