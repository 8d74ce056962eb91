#include "selm/training.hpp"

#include <cmath>
#include <string>

#include "selm/error.hpp"
#include "selm/optim.hpp"

namespace selm {

void TrainConfig::validate() const {
    if (d < 1) throw ConfigError("d must be at least 1");
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (verify_every < 1) throw ConfigError("verify_every must be at least 1");
    if (!(grad_clip_l2 > 0.0)) throw ConfigError("grad_clip_l2 must be positive");
    std::visit(
        [](const auto& r) {
            using R = std::decay_t<decltype(r)>;
            if constexpr (!std::is_same_v<R, NoRegularizer>) {
                if (!(r.lambda_max >= 0.0)) throw ConfigError("lambda_max must be >= 0");
                if (r.warmup_epochs < 1) throw ConfigError("warmup_epochs must be at least 1");
            }
            if constexpr (std::is_same_v<R, L2TargetRegularizer>) {
                if (!(r.alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
            }
            if constexpr (std::is_same_v<R, WassersteinRegularizer>) {
                if (!(r.sigma > 0.0)) throw ConfigError("sigma must be positive");
            }
        },
        regularizer);
}

std::vector<float> materialize_params(const ModelParams& theta_D0, const ProjectionSpec& spec,
                                     std::span<const double> theta_d) {
    if (spec.D != theta_D0.flat.size()) throw DimensionError("projection D does not match the model");
    std::vector<double> offset(spec.D);
    project_into(spec, theta_d, offset);
    std::vector<float> out(spec.D);
    for (std::size_t i = 0; i < spec.D; ++i)
        out[i] = static_cast<float>(static_cast<double>(theta_D0.flat[i]) + offset[i]);
    return out;
}

namespace {

struct PenaltyAt {
    double lambda = 0.0;
    double value = 0.0;
};

// Adds the regularizer gradient at `theta` into `grad`.
PenaltyAt add_regularizer(const Regularizer& reg, std::size_t epoch, std::span<const double> theta,
                          std::span<double> grad) {
    return std::visit(
        [&](const auto& r) -> PenaltyAt {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, NoRegularizer>) {
                return {};
            } else {
                const double lambda = lambda_schedule(epoch, r.lambda_max, r.warmup_epochs);
                if (lambda == 0.0) return {};
                PenaltyResult p;
                if constexpr (std::is_same_v<R, L2TargetRegularizer>)
                    p = l2_target_penalty(theta, r.alpha, lambda);
                else
                    p = wasserstein_penalty(theta, r.sigma, lambda);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += p.grad[i];
                return {lambda, p.value};
            }
        },
        reg);
}

} // namespace

MemorizationResult memorize(const TrainConfig& config, const ModelParams& theta_D0, const ProjectionSpec& spec,
                            std::span<const TrainingExample> examples, const MemorizeHooks& hooks) {
    config.validate();
    if (spec.d != config.d)
        throw ConfigError("projection d (" + std::to_string(spec.d) + ") does not match config d (" +
                          std::to_string(config.d) + ")");
    if (spec.D != theta_D0.flat.size() || theta_D0.flat.size() != theta_D0.config.param_count())
        throw ConfigError("projection D does not match the model parameter count");
    if (examples.empty()) throw ConfigError("no training examples");

    std::vector<Sequence> seqs;
    seqs.reserve(examples.size());
    for (const auto& ex : examples) {
        if (ex.tokens.size() > theta_D0.config.context_len)
            throw ConfigError("training example longer than context_len");
        seqs.push_back(Sequence::from_example(ex));
    }

    const std::size_t d = config.d, D = spec.D;
    TinyLM<float> model(theta_D0.config);
    std::vector<double> theta(d, 0.0), theta_f(d), offset(D), grad_D(D), grad_d(d);
    std::vector<float> params(D), grad_f(D);
    AdamW opt(d, AdamWConfig{0.9, 0.999, 1e-8, 0.0});

    MemorizationResult result;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const std::size_t e = epoch - 1;

        // The model always sees theta rounded to binary32, which is exactly
        // what a ciphertext can carry.
        for (std::size_t i = 0; i < d; ++i) theta_f[i] = static_cast<double>(static_cast<float>(theta[i]));
        project_into(spec, theta_f, offset);
        for (std::size_t i = 0; i < D; ++i)
            params[i] = static_cast<float>(static_cast<double>(theta_D0.flat[i]) + offset[i]);

        const LossResult lr = model.loss_and_grad(params, seqs, grad_f);
        result.final_loss = lr.loss;
        result.epochs_used = epoch;
        result.theta_d_star = theta_f;

        bool verified = false;
        if (lr.all_argmax_match && epoch % config.verify_every == 0) {
            verified = true;
            for (std::size_t s = 0; s < examples.size() && verified; ++s) {
                const auto& ex = examples[s];
                const auto n_prompt = static_cast<std::size_t>(
                    std::find(ex.loss_mask.begin(), ex.loss_mask.end(), true) - ex.loss_mask.begin());
                const std::span<const TokenId> prompt(ex.tokens.data(), n_prompt);
                const Tokens out = model.greedy_decode(params, prompt, ex.tokens.size() - n_prompt);
                verified = std::equal(out.begin(), out.end(), ex.tokens.begin() + static_cast<std::ptrdiff_t>(n_prompt));
            }
        }

        for (std::size_t i = 0; i < D; ++i) grad_D[i] = static_cast<double>(grad_f[i]);
        project_adjoint_into(spec, grad_D, grad_d);
        const PenaltyAt pen = add_regularizer(config.regularizer, e, theta_f, grad_d);
        const double gnorm = clip_l2(std::span<double>(grad_d), config.grad_clip_l2);
        const double rate = learning_rate(e, config.lr0, config.lr_decay_epochs);

        if (hooks.on_epoch)
            hooks.on_epoch(EpochLog{epoch, lr.loss, rate, pen.lambda, pen.value, gnorm, verified});
        if (verified) {
            result.converged = true;
            return result;
        }
        opt.step(std::span<double>(theta), std::span<const double>(grad_d), rate);
    }
    return result;
}

double subspace_objective(const ModelParams& theta_D0, const ProjectionSpec& spec,
                          std::span<const TrainingExample> examples, const Regularizer& regularizer,
                          std::size_t epoch, std::span<const double> theta, std::span<double> grad) {
    if (theta.size() != spec.d || grad.size() != spec.d) throw DimensionError("theta and grad must have length d");
    if (spec.D != theta_D0.flat.size()) throw DimensionError("projection D does not match the model");
    std::vector<Sequence> seqs;
    for (const auto& ex : examples) seqs.push_back(Sequence::from_example(ex));
    std::vector<double> params(spec.D), grad_D(spec.D);
    project_into(spec, theta, params);
    for (std::size_t i = 0; i < spec.D; ++i) params[i] += static_cast<double>(theta_D0.flat[i]);
    TinyLM<double> model(theta_D0.config);
    const double loss = model.loss_and_grad(params, seqs, grad_D).loss;
    project_adjoint_into(spec, grad_D, grad);
    return loss + add_regularizer(regularizer, epoch, theta, grad).value;
}

} // namespace selm
