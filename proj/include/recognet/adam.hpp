#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recognet/tensor.hpp"

namespace recognet {

template <typename T>
struct AdamConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// Adam with bias correction. Moment buffers are bound to a fixed parameter
// list at construction.
template <typename T>
class AdamState {
public:
    AdamState(const std::vector<Tensor<T>>& params, AdamConfig<T> cfg = {}) : cfg_(cfg) {
        if (!(cfg.lr > T(0)) || !(cfg.eps > T(0)))
            throw std::invalid_argument("adam: lr and eps must be positive");
        if (!(cfg.beta1 > T(0) && cfg.beta1 < T(1) && cfg.beta2 > T(0) && cfg.beta2 < T(1)))
            throw std::invalid_argument("adam: betas must lie in (0,1)");
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const auto& p : params) {
            m_.emplace_back(p.numel(), T(0));
            v_.emplace_back(p.numel(), T(0));
        }
    }

    void step(std::vector<Tensor<T>>& params) {
        if (params.size() != m_.size())
            throw std::invalid_argument("adam: parameter count changed");
        ++t_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            auto& p = params[pi].data();
            const auto& g = params[pi].grad();
            auto& m = m_[pi];
            auto& v = v_[pi];
            if (p.size() != m.size())
                throw std::invalid_argument("adam: parameter " + std::to_string(pi) +
                                            " shape changed since state creation");
            for (size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (T(1) - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (T(1) - cfg_.beta2) * g[i] * g[i];
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int64_t step_count() const { return t_; }
    const AdamConfig<T>& config() const { return cfg_; }

    // Serialization access.
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }
    void set_step_count(int64_t t) { t_ = t; }

private:
    AdamConfig<T> cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
    state.step(params);
}

}  // namespace recognet
