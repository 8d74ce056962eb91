#include <algorithm>
#include <cmath>
#include <iostream>

#include "selm/error.hpp"
#include "selm/optim.hpp"
#include "selm/random.hpp"
#include "selm/tinylm.hpp"

namespace selm {

std::vector<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const ParamLayout L(cfg);
    std::vector<float> p(L.total, 0.0f);
    Rng rng(seed);
    const std::size_t C = cfg.d_model, F = cfg.d_ff;
    auto normal = [&](std::size_t off, std::size_t n, double std) {
        for (std::size_t i = 0; i < n; ++i) p[off + i] = static_cast<float>(std * rng.normal());
    };
    auto ones = [&](std::size_t off, std::size_t n) { std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(off), n, 1.0f); };
    const double resid = 0.02 / std::sqrt(2.0 * cfg.n_layers);

    normal(L.wte, std::size_t{cfg.vocab_size} * C, 0.02);
    normal(L.wpe, std::size_t{cfg.context_len} * C, 0.02);
    for (const auto& l : L.layers) {
        ones(l.ln1_g, C);
        normal(l.w_qkv, C * 3 * C, 0.02);
        normal(l.w_o, C * C, resid);
        ones(l.ln2_g, C);
        normal(l.w_fc, C * F, 0.02);
        normal(l.w_proj, F * C, resid);
    }
    ones(L.lnf_g, C);
    return p;
}

namespace {

Sequence window_at(std::span<const std::uint8_t> corpus, std::size_t start, std::size_t len) {
    Sequence s;
    s.inputs.assign(corpus.begin() + static_cast<std::ptrdiff_t>(start),
                    corpus.begin() + static_cast<std::ptrdiff_t>(start + len));
    s.targets.assign(corpus.begin() + static_cast<std::ptrdiff_t>(start + 1),
                     corpus.begin() + static_cast<std::ptrdiff_t>(start + len + 1));
    s.target_mask.assign(len, true);
    return s;
}

std::vector<Sequence> draw_windows(std::span<const std::uint8_t> corpus, std::size_t count, std::size_t len,
                                   Rng& rng) {
    std::vector<Sequence> out;
    out.reserve(count);
    const std::size_t span = corpus.size() - len;  // start in [0, span)
    for (std::size_t i = 0; i < count; ++i) out.push_back(window_at(corpus, rng.below(span), len));
    return out;
}

std::size_t window_len(const ModelConfig& cfg, std::span<const std::uint8_t> corpus, std::size_t requested) {
    std::size_t len = requested == 0 ? cfg.context_len : std::min<std::size_t>(requested, cfg.context_len);
    if (corpus.size() < 3) throw InputError("corpus must hold at least 3 bytes");
    return std::min(len, corpus.size() - 2);
}

} // namespace

ModelParams pretrain(const ModelConfig& cfg, std::span<const std::uint8_t> corpus, std::size_t steps,
                     std::uint64_t seed, const PretrainOptions& opts) {
    if (corpus.empty()) throw InputError("pretraining corpus is empty");
    ModelParams out{cfg, init_params(cfg, seed)};
    Rng rng(Rng(seed).fork());
    if (steps == 0) return out;

    const std::size_t len = window_len(cfg, corpus, opts.window);
    TinyLM<float> model(cfg);
    std::vector<float> grad(out.flat.size());
    AdamW opt(out.flat.size(), AdamWConfig{0.9, 0.95, 1e-8, opts.weight_decay});
    const std::size_t warmup = std::max<std::size_t>(1, steps / 20);
    for (std::size_t step = 0; step < steps; ++step) {
        const auto batch = draw_windows(corpus, opts.batch_size, len, rng);
        const auto res = model.loss_and_grad(out.flat, batch, grad);
        clip_l2(std::span<float>(grad), opts.grad_clip);
        // Linear warmup, then linear decay to 10% of the peak.
        const double s = static_cast<double>(step);
        double lr = opts.lr * std::min(1.0, (s + 1.0) / static_cast<double>(warmup));
        if (step >= warmup)
            lr = opts.lr * (1.0 - 0.9 * (s - static_cast<double>(warmup)) /
                                      static_cast<double>(std::max<std::size_t>(1, steps - warmup)));
        opt.step(std::span<float>(out.flat), std::span<const float>(grad), lr);
        if (opts.log_every != 0 && (step % opts.log_every == 0 || step + 1 == steps))
            std::cerr << "pretrain step " << step << " loss " << res.loss << " lr " << lr << '\n';
    }
    return out;
}

double corpus_loss(const ModelParams& params, std::span<const std::uint8_t> corpus, std::size_t n_windows,
                   std::size_t window, std::uint64_t seed) {
    const std::size_t len = window_len(params.config, corpus, window);
    Rng rng(seed);
    const auto batch = draw_windows(corpus, n_windows, len, rng);
    TinyLM<float> model(params.config);
    return model.loss_and_grad(params.flat, batch, {}).loss;
}

} // namespace selm
