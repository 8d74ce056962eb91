#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace selm {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled-weight-decay Adam with bias correction. Moments are kept in double.
class AdamW {
public:
    AdamW(std::size_t n, AdamWConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    template <typename T, typename G>
    void step(std::span<T> params, std::span<const G> grad, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[i] / bc1;
            const double vhat = v_[i] / bc2;
            double p = static_cast<double>(params[i]);
            p -= lr * cfg_.weight_decay * p;
            p -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            params[i] = static_cast<T>(p);
        }
    }

    std::size_t steps() const { return t_; }

private:
    AdamWConfig cfg_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

template <typename T>
double l2_norm(std::span<const T> v) {
    double s = 0.0;
    for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

// Rescales g so that ||g||_2 <= max_norm. Returns the norm before clipping.
template <typename T>
double clip_l2(std::span<T> g, double max_norm) {
    const double norm = l2_norm(std::span<const T>(g.data(), g.size()));
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& x : g) x = static_cast<T>(static_cast<double>(x) * s);
    }
    return norm;
}

} // namespace selm
