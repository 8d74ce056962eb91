#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "selm/error.hpp"
#include "selm/training.hpp"

namespace selm {

std::uint8_t regularizer_tag(const Regularizer& r) { return static_cast<std::uint8_t>(r.index()); }

PenaltyResult l2_target_penalty(std::span<const double> theta, double alpha, double lambda) {
    require(lambda >= 0.0 && alpha >= 0.0, "l2 target penalty needs lambda >= 0 and alpha >= 0");
    double sq = 0.0;
    for (double x : theta) sq += x * x;
    const double norm = std::sqrt(sq);
    PenaltyResult out;
    out.value = lambda * std::abs(norm - alpha);
    out.grad.assign(theta.size(), 0.0);
    if (norm > 0.0 && norm != alpha) {
        const double s = lambda * (norm > alpha ? 1.0 : -1.0) / norm;
        for (std::size_t i = 0; i < theta.size(); ++i) out.grad[i] = s * theta[i];
    }
    return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

PenaltyResult wasserstein_penalty(std::span<const double> theta, double sigma, double lambda) {
    const std::size_t d = theta.size();
    require(d >= 2, "wasserstein penalty needs at least two values");
    require(sigma > 0.0 && lambda >= 0.0, "wasserstein penalty needs sigma > 0 and lambda >= 0");

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return theta[a] < theta[b]; });

    std::vector<double> x(d), gap(d), sgn(d);
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = theta[order[i]];
        const double diff = static_cast<double>(i) / static_cast<double>(d) - normal_cdf(x[i] / sigma);
        gap[i] = std::abs(diff);
        sgn[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }

    double area = 0.0;
    for (std::size_t i = 0; i + 1 < d; ++i) area += (x[i + 1] - x[i]) * (gap[i] + gap[i + 1]) * 0.5;

    PenaltyResult out;
    out.value = lambda * area;
    out.grad.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double g = 0.0;
        double half_width = 0.0;
        if (k > 0) {
            g += (gap[k - 1] + gap[k]) * 0.5;
            half_width += (x[k] - x[k - 1]) * 0.5;
        }
        if (k + 1 < d) {
            g -= (gap[k] + gap[k + 1]) * 0.5;
            half_width += (x[k + 1] - x[k]) * 0.5;
        }
        // d gap_k / d x_k = -sign(ecdf_k - cdf_k) * pdf(x_k / sigma) / sigma
        g += half_width * (-sgn[k] * normal_pdf(x[k] / sigma) / sigma);
        out.grad[order[k]] = lambda * g;
    }
    return out;
}

double lambda_schedule(std::size_t epoch, double lambda_max, std::size_t warmup_epochs) {
    require(warmup_epochs >= 1, "warmup_epochs must be at least 1");
    return lambda_max * std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

double learning_rate(std::size_t epoch, double lr0, std::size_t decay_epochs) {
    if (decay_epochs == 0) return 0.0;
    return lr0 * std::max(0.0, 1.0 - static_cast<double>(epoch) / static_cast<double>(decay_epochs));
}

} // namespace selm
