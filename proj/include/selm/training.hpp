#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "selm/projection.hpp"
#include "selm/tinylm.hpp"

namespace selm {

struct NoRegularizer {};

// lambda * | ||theta||_2 - alpha |
struct L2TargetRegularizer {
    double alpha = 0.0;
    double lambda_max = 0.0;
    std::size_t warmup_epochs = 1;
};

// lambda * (trapezoid area between the sorted-value ECDF and the N(0, sigma^2) CDF)
struct WassersteinRegularizer {
    double sigma = 1.0;
    double lambda_max = 0.0;
    std::size_t warmup_epochs = 1;
};

using Regularizer = std::variant<NoRegularizer, L2TargetRegularizer, WassersteinRegularizer>;

// Wire tag: 0 none, 1 l2, 2 wasserstein.
std::uint8_t regularizer_tag(const Regularizer& r);

struct TrainConfig {
    std::size_t d = 1024;
    double lr0 = 3e-5;
    std::size_t lr_decay_epochs = 2000;
    double grad_clip_l2 = 1e5;
    std::size_t max_epochs = 10000;
    std::size_t verify_every = 1;
    Regularizer regularizer = NoRegularizer{};
    std::uint64_t seed = 0;

    void validate() const;
};

struct MemorizationResult {
    std::vector<double> theta_d_star;  // every entry is exactly representable as binary32
    std::size_t epochs_used = 0;
    bool converged = false;
    double final_loss = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    double lambda = 0.0;
    double penalty = 0.0;
    double grad_norm = 0.0;  // before clipping
    bool verified = false;
};

struct PenaltyResult {
    double value = 0.0;
    std::vector<double> grad;
};

PenaltyResult l2_target_penalty(std::span<const double> theta, double alpha, double lambda);

// Standard normal CDF and density.
double normal_cdf(double z);
double normal_pdf(double z);

// Trapezoid area between the empirical CDF (heights i/d at the sorted values)
// and Phi(x / sigma), scaled by lambda; gradient treats the sort order as
// locally constant (ties broken by original index).
PenaltyResult wasserstein_penalty(std::span<const double> theta, double sigma, double lambda);

double lambda_schedule(std::size_t epoch, double lambda_max, std::size_t warmup_epochs);

// lr0 * max(0, 1 - epoch / decay_epochs)
double learning_rate(std::size_t epoch, double lr0, std::size_t decay_epochs);

struct MemorizeHooks {
    std::function<void(const EpochLog&)> on_epoch;
};

// Trains theta_d (starting at zero) so that greedy decoding of
// theta_D0 + P(theta_d) reproduces every example's masked tokens.
MemorizationResult memorize(const TrainConfig& config, const ModelParams& theta_D0, const ProjectionSpec& spec,
                            std::span<const TrainingExample> examples, const MemorizeHooks& hooks = {});

// Memorization objective in double precision at `epoch`: masked loss of
// theta_D0 + P(theta) plus the scheduled regularizer. `grad` (length d)
// receives P^T(dloss/dtheta_D) + the regularizer gradient, unclipped.
double subspace_objective(const ModelParams& theta_D0, const ProjectionSpec& spec,
                          std::span<const TrainingExample> examples, const Regularizer& regularizer,
                          std::size_t epoch, std::span<const double> theta, std::span<double> grad);

// theta_D0 + P(theta_d), rounded to binary32. Shared by training and decryption.
std::vector<float> materialize_params(const ModelParams& theta_D0, const ProjectionSpec& spec,
                                     std::span<const double> theta_d);

} // namespace selm
