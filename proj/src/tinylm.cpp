#include "selm/tinylm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "selm/error.hpp"

namespace selm {

using kernels::Exec;

Tokens tokenize(std::span<const std::uint8_t> bytes) { return Tokens(bytes.begin(), bytes.end()); }

Bytes detokenize(std::span<const TokenId> tokens) {
    Bytes out;
    out.reserve(tokens.size());
    for (TokenId t : tokens) {
        if (t >= 256) throw FormatError("token id " + std::to_string(t) + " is not a byte");
        out.push_back(static_cast<std::uint8_t>(t));
    }
    return out;
}

void ModelConfig::validate() const {
    if (vocab_size != 256) throw ConfigError("vocab_size must be 256 (byte-level tokenizer)");
    if (context_len < 2) throw ConfigError("context_len must be at least 2");
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1)
        throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

std::size_t ModelConfig::param_count() const { return ParamLayout(*this).total; }

ParamLayout::ParamLayout(const ModelConfig& cfg) {
    const std::size_t C = cfg.d_model, F = cfg.d_ff;
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
        const std::size_t at = off;
        off += n;
        return at;
    };
    wte = take(std::size_t{cfg.vocab_size} * C);
    wpe = take(std::size_t{cfg.context_len} * C);
    layers.resize(cfg.n_layers);
    for (auto& L : layers) {
        L.ln1_g = take(C);
        L.ln1_b = take(C);
        L.w_qkv = take(C * 3 * C);
        L.b_qkv = take(3 * C);
        L.w_o = take(C * C);
        L.b_o = take(C);
        L.ln2_g = take(C);
        L.ln2_b = take(C);
        L.w_fc = take(C * F);
        L.b_fc = take(F);
        L.w_proj = take(F * C);
        L.b_proj = take(C);
    }
    lnf_g = take(C);
    lnf_b = take(C);
    total = off;
}

TrainingExample TrainingExample::from_prompt_and_chunk(std::span<const TokenId> prompt,
                                                       std::span<const TokenId> chunk) {
    TrainingExample ex;
    ex.tokens.assign(prompt.begin(), prompt.end());
    ex.tokens.insert(ex.tokens.end(), chunk.begin(), chunk.end());
    ex.loss_mask.assign(prompt.size(), false);
    ex.loss_mask.resize(ex.tokens.size(), true);
    return ex;
}

Sequence Sequence::from_example(const TrainingExample& ex) {
    require(ex.tokens.size() == ex.loss_mask.size(), "loss mask length must match tokens");
    require(ex.tokens.size() >= 2, "training example needs at least two tokens");
    require(!ex.loss_mask.front(), "the first token cannot be a prediction target");
    Sequence s;
    s.inputs.assign(ex.tokens.begin(), ex.tokens.end() - 1);
    s.targets.assign(ex.tokens.begin() + 1, ex.tokens.end());
    s.target_mask.assign(ex.loss_mask.begin() + 1, ex.loss_mask.end());
    return s;
}

template <typename T>
std::size_t argmax(std::span<const T> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}
template std::size_t argmax<float>(std::span<const float>);
template std::size_t argmax<double>(std::span<const double>);

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T gelu(T x) {
    const T a = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
    const T c = static_cast<T>(0.044715);
    return static_cast<T>(0.5) * x * (T(1) + std::tanh(a * (x + c * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
    const T a = static_cast<T>(0.7978845608028654);
    const T c = static_cast<T>(0.044715);
    const T th = std::tanh(a * (x + c * x * x * x));
    return static_cast<T>(0.5) * (T(1) + th) +
           static_cast<T>(0.5) * x * (T(1) - th * th) * a * (T(1) + T(3) * c * x * x);
}

// y = xhat * g + b, row by row; keeps xhat and 1/std for the backward pass.
template <typename T>
void layernorm_forward(const T* x, const T* g, const T* b, T* xhat, T* rstd, T* y, std::size_t rows,
                       std::size_t C) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x + r * C;
        T mean = 0;
        for (std::size_t c = 0; c < C; ++c) mean += xr[c];
        mean /= static_cast<T>(C);
        T var = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const T dv = xr[c] - mean;
            var += dv * dv;
        }
        var /= static_cast<T>(C);
        const T rs = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        rstd[r] = rs;
        T* xh = xhat + r * C;
        T* yr = y + r * C;
        for (std::size_t c = 0; c < C; ++c) {
            xh[c] = (xr[c] - mean) * rs;
            yr[c] = xh[c] * g[c] + b[c];
        }
    }
}

// Accumulates dg, db and adds the input gradient into dx.
template <typename T>
void layernorm_backward(const T* dy, const T* xhat, const T* rstd, const T* g, T* dg, T* db, T* dx,
                        std::size_t rows, std::size_t C) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* dyr = dy + r * C;
        const T* xh = xhat + r * C;
        T mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const T dxh = dyr[c] * g[c];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[c];
            dg[c] += dyr[c] * xh[c];
            db[c] += dyr[c];
        }
        mean_dxhat /= static_cast<T>(C);
        mean_dxhat_xhat /= static_cast<T>(C);
        T* dxr = dx + r * C;
        for (std::size_t c = 0; c < C; ++c) {
            const T dxh = dyr[c] * g[c];
            dxr[c] += rstd[r] * (dxh - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
}

template <typename T>
struct LayerCache {
    std::vector<T> x_in, xhat1, rstd1, h1, qkv, probs, att, x_mid, xhat2, rstd2, h2, f, g;
    void resize(std::size_t Tmax, std::size_t C, std::size_t F, std::size_t H) {
        x_in.resize(Tmax * C);
        xhat1.resize(Tmax * C);
        rstd1.resize(Tmax);
        h1.resize(Tmax * C);
        qkv.resize(Tmax * 3 * C);
        probs.resize(H * Tmax * Tmax);
        att.resize(Tmax * C);
        x_mid.resize(Tmax * C);
        xhat2.resize(Tmax * C);
        rstd2.resize(Tmax);
        h2.resize(Tmax * C);
        f.resize(Tmax * F);
        g.resize(Tmax * F);
    }
};

} // namespace

template <typename T>
struct TinyLM<T>::Impl {
    ModelConfig cfg;
    ParamLayout layout;
    Exec exec;
    std::size_t C, F, H, HD, V, Tmax;

    std::vector<LayerCache<T>> caches;
    std::vector<T> x_final, xhatf, rstdf, hf;
    std::vector<T> hf_rows, logit_rows, dlogit_rows, dhf_rows;
    std::vector<std::size_t> row_pos;

    // Transposed weights, rebuilt per call.
    std::vector<T> wteT;
    struct LayerT {
        std::vector<T> w_qkv, w_o, w_fc, w_proj;
    };
    std::vector<LayerT> wt;

    // Backward scratch.
    std::vector<T> dx, dx_mid, dh, dff, dqkv, datt, dwteT;

    Impl(const ModelConfig& c, Exec e) : cfg(c), layout(c), exec(e) {
        cfg.validate();
        C = cfg.d_model;
        F = cfg.d_ff;
        H = cfg.n_heads;
        HD = C / H;
        V = cfg.vocab_size;
        Tmax = cfg.context_len;
        caches.resize(cfg.n_layers);
        for (auto& lc : caches) lc.resize(Tmax, C, F, H);
        x_final.resize(Tmax * C);
        xhatf.resize(Tmax * C);
        rstdf.resize(Tmax);
        hf.resize(Tmax * C);
        hf_rows.resize(Tmax * C);
        logit_rows.resize(Tmax * V);
        dlogit_rows.resize(Tmax * V);
        dhf_rows.resize(Tmax * C);
        row_pos.resize(Tmax);
        wteT.resize(C * V);
        wt.resize(cfg.n_layers);
        for (auto& w : wt) {
            w.w_qkv.resize(C * 3 * C);
            w.w_o.resize(C * C);
            w.w_fc.resize(C * F);
            w.w_proj.resize(F * C);
        }
        dx.resize(Tmax * C);
        dx_mid.resize(Tmax * C);
        dh.resize(Tmax * C);
        dff.resize(Tmax * F);
        dqkv.resize(Tmax * 3 * C);
        datt.resize(Tmax * C);
        dwteT.resize(C * V);
    }

    void check_params(std::span<const T> p) const {
        if (p.size() != layout.total)
            throw DimensionError("parameter vector has length " + std::to_string(p.size()) + ", model needs " +
                                 std::to_string(layout.total));
    }

    void prepare_transposes(const T* p, bool for_backward) {
        kernels::transpose(p + layout.wte, wteT.data(), V, C);
        if (!for_backward) return;
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            const auto& L = layout.layers[l];
            kernels::transpose(p + L.w_qkv, wt[l].w_qkv.data(), C, 3 * C);
            kernels::transpose(p + L.w_o, wt[l].w_o.data(), C, C);
            kernels::transpose(p + L.w_fc, wt[l].w_fc.data(), C, F);
            kernels::transpose(p + L.w_proj, wt[l].w_proj.data(), F, C);
        }
    }

    // Runs the trunk for `n` positions and leaves the final normed states in hf.
    void forward_trunk(const T* p, std::span<const TokenId> inputs) {
        const std::size_t n = inputs.size();
        {
            T* x = caches[0].x_in.data();
            for (std::size_t t = 0; t < n; ++t) {
                if (inputs[t] >= V) throw FormatError("token id out of range");
                const T* e = p + layout.wte + std::size_t{inputs[t]} * C;
                const T* pe = p + layout.wpe + t * C;
                for (std::size_t c = 0; c < C; ++c) x[t * C + c] = e[c] + pe[c];
            }
        }
        const T scale = T(1) / std::sqrt(static_cast<T>(HD));
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            auto& lc = caches[l];
            const auto& L = layout.layers[l];
            layernorm_forward(lc.x_in.data(), p + L.ln1_g, p + L.ln1_b, lc.xhat1.data(), lc.rstd1.data(),
                              lc.h1.data(), n, C);
            kernels::matmul(exec, lc.h1.data(), p + L.w_qkv, p + L.b_qkv, lc.qkv.data(), n, C, 3 * C);

            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t i = 0; i < n; ++i) {
                    const T* q = lc.qkv.data() + i * 3 * C + h * HD;
                    T* pr = lc.probs.data() + (h * Tmax + i) * Tmax;
                    T mx = -std::numeric_limits<T>::infinity();
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T* k = lc.qkv.data() + j * 3 * C + C + h * HD;
                        T s = 0;
                        for (std::size_t e = 0; e < HD; ++e) s += q[e] * k[e];
                        s *= scale;
                        pr[j] = s;
                        mx = std::max(mx, s);
                    }
                    T sum = 0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        pr[j] = std::exp(pr[j] - mx);
                        sum += pr[j];
                    }
                    const T inv = T(1) / sum;
                    for (std::size_t j = 0; j <= i; ++j) pr[j] *= inv;
                    T* o = lc.att.data() + i * C + h * HD;
                    for (std::size_t e = 0; e < HD; ++e) o[e] = 0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T* v = lc.qkv.data() + j * 3 * C + 2 * C + h * HD;
                        const T pj = pr[j];
                        for (std::size_t e = 0; e < HD; ++e) o[e] += pj * v[e];
                    }
                }
            }

            kernels::matmul(exec, lc.att.data(), p + L.w_o, p + L.b_o, lc.x_mid.data(), n, C, C);
            for (std::size_t i = 0; i < n * C; ++i) lc.x_mid[i] += lc.x_in[i];

            layernorm_forward(lc.x_mid.data(), p + L.ln2_g, p + L.ln2_b, lc.xhat2.data(), lc.rstd2.data(),
                              lc.h2.data(), n, C);
            kernels::matmul(exec, lc.h2.data(), p + L.w_fc, p + L.b_fc, lc.f.data(), n, C, F);
            for (std::size_t i = 0; i < n * F; ++i) lc.g[i] = gelu(lc.f[i]);

            T* out = (l + 1 < cfg.n_layers) ? caches[l + 1].x_in.data() : x_final.data();
            kernels::matmul(exec, lc.g.data(), p + L.w_proj, p + L.b_proj, out, n, F, C);
            for (std::size_t i = 0; i < n * C; ++i) out[i] += lc.x_mid[i];
        }
        layernorm_forward(x_final.data(), p + layout.lnf_g, p + layout.lnf_b, xhatf.data(), rstdf.data(),
                          hf.data(), n, C);
    }

    // Logits for the positions listed in row_pos[0..m).
    void row_logits(std::size_t m) {
        for (std::size_t r = 0; r < m; ++r)
            std::copy_n(hf.data() + row_pos[r] * C, C, hf_rows.data() + r * C);
        kernels::matmul(exec, hf_rows.data(), wteT.data(), static_cast<const T*>(nullptr), logit_rows.data(), m,
                        C, V);
    }

    void backward_trunk(const T* p, T* grad, std::span<const TokenId> inputs) {
        const std::size_t n = inputs.size();
        const T scale = T(1) / std::sqrt(static_cast<T>(HD));

        // dhf_dense (set by the caller) -> residual stream gradient
        std::fill_n(dx.begin(), n * C, T(0));
        layernorm_backward(dhf_dense.data(), xhatf.data(), rstdf.data(), p + layout.lnf_g, grad + layout.lnf_g,
                           grad + layout.lnf_b, dx.data(), n, C);

        for (std::size_t li = cfg.n_layers; li-- > 0;) {
            auto& lc = caches[li];
            const auto& L = layout.layers[li];
            auto& W = wt[li];

            // MLP: out = x_mid + gelu(h2 W_fc + b_fc) W_proj + b_proj
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < C; ++c) grad[L.b_proj + c] += dx[i * C + c];
            kernels::matmul_acc_at(exec, lc.g.data(), dx.data(), grad + L.w_proj, n, F, C);
            std::fill_n(dff.begin(), n * F, T(0));
            kernels::matmul_acc_bt(exec, dx.data(), W.w_proj.data(), dff.data(), n, F, C);
            for (std::size_t i = 0; i < n * F; ++i) dff[i] *= gelu_grad(lc.f[i]);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < F; ++j) grad[L.b_fc + j] += dff[i * F + j];
            kernels::matmul_acc_at(exec, lc.h2.data(), dff.data(), grad + L.w_fc, n, C, F);
            std::fill_n(dh.begin(), n * C, T(0));
            kernels::matmul_acc_bt(exec, dff.data(), W.w_fc.data(), dh.data(), n, C, F);
            std::copy_n(dx.begin(), n * C, dx_mid.begin());
            layernorm_backward(dh.data(), lc.xhat2.data(), lc.rstd2.data(), p + L.ln2_g, grad + L.ln2_g,
                               grad + L.ln2_b, dx_mid.data(), n, C);

            // Attention: x_mid = x_in + att W_o + b_o
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < C; ++c) grad[L.b_o + c] += dx_mid[i * C + c];
            kernels::matmul_acc_at(exec, lc.att.data(), dx_mid.data(), grad + L.w_o, n, C, C);
            std::fill_n(datt.begin(), n * C, T(0));
            kernels::matmul_acc_bt(exec, dx_mid.data(), W.w_o.data(), datt.data(), n, C, C);

            std::fill_n(dqkv.begin(), n * 3 * C, T(0));
            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t i = 0; i < n; ++i) {
                    const T* pr = lc.probs.data() + (h * Tmax + i) * Tmax;
                    const T* dout = datt.data() + i * C + h * HD;
                    const T* q = lc.qkv.data() + i * 3 * C + h * HD;
                    T* dq = dqkv.data() + i * 3 * C + h * HD;
                    // dp_j = dout . v_j, reuse dff as scratch for dp.
                    T* dp = dff.data();
                    T dot = 0;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T* v = lc.qkv.data() + j * 3 * C + 2 * C + h * HD;
                        T* dv = dqkv.data() + j * 3 * C + 2 * C + h * HD;
                        T s = 0;
                        for (std::size_t e = 0; e < HD; ++e) {
                            s += dout[e] * v[e];
                            dv[e] += pr[j] * dout[e];
                        }
                        dp[j] = s;
                        dot += pr[j] * s;
                    }
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T ds = pr[j] * (dp[j] - dot) * scale;
                        const T* k = lc.qkv.data() + j * 3 * C + C + h * HD;
                        T* dk = dqkv.data() + j * 3 * C + C + h * HD;
                        for (std::size_t e = 0; e < HD; ++e) {
                            dq[e] += ds * k[e];
                            dk[e] += ds * q[e];
                        }
                    }
                }
            }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < 3 * C; ++j) grad[L.b_qkv + j] += dqkv[i * 3 * C + j];
            kernels::matmul_acc_at(exec, lc.h1.data(), dqkv.data(), grad + L.w_qkv, n, C, 3 * C);
            std::fill_n(dh.begin(), n * C, T(0));
            kernels::matmul_acc_bt(exec, dqkv.data(), W.w_qkv.data(), dh.data(), n, C, 3 * C);
            std::copy_n(dx_mid.begin(), n * C, dx.begin());
            layernorm_backward(dh.data(), lc.xhat1.data(), lc.rstd1.data(), p + L.ln1_g, grad + L.ln1_g,
                               grad + L.ln1_b, dx.data(), n, C);
        }

        for (std::size_t t = 0; t < n; ++t) {
            T* ge = grad + layout.wte + std::size_t{inputs[t]} * C;
            T* gp = grad + layout.wpe + t * C;
            for (std::size_t c = 0; c < C; ++c) {
                ge[c] += dx[t * C + c];
                gp[c] += dx[t * C + c];
            }
        }
    }

    std::vector<T> dhf_dense;
};

template <typename T>
TinyLM<T>::TinyLM(const ModelConfig& cfg, Exec exec) : impl_(std::make_unique<Impl>(cfg, exec)) {
    impl_->dhf_dense.resize(impl_->Tmax * impl_->C);
}
template <typename T>
TinyLM<T>::~TinyLM() = default;
template <typename T>
TinyLM<T>::TinyLM(TinyLM&&) noexcept = default;
template <typename T>
TinyLM<T>& TinyLM<T>::operator=(TinyLM&&) noexcept = default;

template <typename T>
const ModelConfig& TinyLM<T>::config() const {
    return impl_->cfg;
}
template <typename T>
std::size_t TinyLM<T>::param_count() const {
    return impl_->layout.total;
}

template <typename T>
LossResult TinyLM<T>::loss_and_grad(std::span<const T> params, std::span<const Sequence> batch,
                                    std::span<T> grad) {
    auto& m = *impl_;
    m.check_params(params);
    require(!batch.empty(), "batch must be nonempty");
    const bool want_grad = !grad.empty();
    if (want_grad && grad.size() != m.layout.total) throw DimensionError("gradient buffer has wrong length");

    std::size_t total_scored = 0;
    for (const auto& s : batch) {
        require(s.inputs.size() == s.targets.size() && s.inputs.size() == s.target_mask.size(),
                "sequence inputs, targets and mask must have equal length");
        require(!s.inputs.empty(), "sequence must be nonempty");
        if (s.inputs.size() > m.Tmax) throw PreconditionError("sequence exceeds context_len");
        total_scored += static_cast<std::size_t>(std::count(s.target_mask.begin(), s.target_mask.end(), true));
    }
    require(total_scored > 0, "loss mask selects no positions");

    const T* p = params.data();
    m.prepare_transposes(p, want_grad);
    if (want_grad) std::fill(grad.begin(), grad.end(), T(0));
    if (want_grad) std::fill(m.dwteT.begin(), m.dwteT.end(), T(0));

    const T inv_n = T(1) / static_cast<T>(total_scored);
    double loss_sum = 0.0;
    bool all_match = true;
    for (const auto& s : batch) {
        const std::size_t n = s.inputs.size();
        m.forward_trunk(p, s.inputs);
        std::size_t rows = 0;
        for (std::size_t t = 0; t < n; ++t)
            if (s.target_mask[t]) m.row_pos[rows++] = t;
        if (rows == 0) continue;
        m.row_logits(rows);

        for (std::size_t r = 0; r < rows; ++r) {
            const T* lg = m.logit_rows.data() + r * m.V;
            const TokenId tgt = s.targets[m.row_pos[r]];
            if (tgt >= m.V) throw FormatError("target token out of range");
            const std::size_t best = argmax(std::span<const T>(lg, m.V));
            if (best != tgt) all_match = false;
            T mx = lg[best];
            T sum = 0;
            T* dl = m.dlogit_rows.data() + r * m.V;
            for (std::size_t v = 0; v < m.V; ++v) {
                dl[v] = std::exp(lg[v] - mx);
                sum += dl[v];
            }
            const T lse = mx + std::log(sum);
            loss_sum += static_cast<double>(lse - lg[tgt]);
            if (want_grad) {
                const T inv_sum = T(1) / sum;
                for (std::size_t v = 0; v < m.V; ++v) dl[v] = dl[v] * inv_sum * inv_n;
                dl[tgt] -= inv_n;
            }
        }
        if (!want_grad) continue;

        // Head: logits = hf_rows * wteT
        kernels::matmul_acc_at(m.exec, m.hf_rows.data(), m.dlogit_rows.data(), m.dwteT.data(), rows, m.C, m.V);
        std::fill_n(m.dhf_rows.begin(), rows * m.C, T(0));
        kernels::matmul_acc_bt(m.exec, m.dlogit_rows.data(), p + m.layout.wte, m.dhf_rows.data(), rows, m.C,
                               m.V);
        std::fill_n(m.dhf_dense.begin(), n * m.C, T(0));
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(m.dhf_rows.data() + r * m.C, m.C, m.dhf_dense.data() + m.row_pos[r] * m.C);
        m.backward_trunk(p, grad.data(), s.inputs);
    }
    if (want_grad) {
        T* gw = grad.data() + m.layout.wte;
        for (std::size_t v = 0; v < m.V; ++v)
            for (std::size_t c = 0; c < m.C; ++c) gw[v * m.C + c] += m.dwteT[c * m.V + v];
    }
    return LossResult{loss_sum / static_cast<double>(total_scored), total_scored, all_match};
}

template <typename T>
std::vector<T> TinyLM<T>::logits(std::span<const T> params, std::span<const TokenId> inputs) {
    auto& m = *impl_;
    m.check_params(params);
    require(!inputs.empty() && inputs.size() <= m.Tmax, "input length must be in [1, context_len]");
    m.prepare_transposes(params.data(), false);
    m.forward_trunk(params.data(), inputs);
    for (std::size_t t = 0; t < inputs.size(); ++t) m.row_pos[t] = t;
    m.row_logits(inputs.size());
    return std::vector<T>(m.logit_rows.begin(), m.logit_rows.begin() + static_cast<std::ptrdiff_t>(inputs.size() * m.V));
}

template <typename T>
std::vector<T> TinyLM<T>::last_logits(std::span<const T> params, std::span<const TokenId> inputs) {
    auto& m = *impl_;
    m.check_params(params);
    require(!inputs.empty() && inputs.size() <= m.Tmax, "input length must be in [1, context_len]");
    m.prepare_transposes(params.data(), false);
    m.forward_trunk(params.data(), inputs);
    m.row_pos[0] = inputs.size() - 1;
    m.row_logits(1);
    return std::vector<T>(m.logit_rows.begin(), m.logit_rows.begin() + static_cast<std::ptrdiff_t>(m.V));
}

template <typename T>
Tokens TinyLM<T>::greedy_decode(std::span<const T> params, std::span<const TokenId> prompt,
                                std::size_t n_tokens) {
    auto& m = *impl_;
    m.check_params(params);
    if (prompt.size() + n_tokens > m.Tmax)
        throw PreconditionError("prompt plus generated tokens exceed context_len");
    Tokens out;
    if (n_tokens == 0) return out;
    require(!prompt.empty(), "greedy decoding needs a nonempty prompt");
    m.prepare_transposes(params.data(), false);
    Tokens seq(prompt.begin(), prompt.end());
    out.reserve(n_tokens);
    for (std::size_t k = 0; k < n_tokens; ++k) {
        m.forward_trunk(params.data(), seq);
        m.row_pos[0] = seq.size() - 1;
        m.row_logits(1);
        const auto next = static_cast<TokenId>(argmax(std::span<const T>(m.logit_rows.data(), m.V)));
        out.push_back(next);
        seq.push_back(next);
    }
    return out;
}

template class TinyLM<float>;
template class TinyLM<double>;

LossResult forward_loss(const ModelParams& params, std::span<const TrainingExample> batch,
                        std::vector<float>* grad) {
    TinyLM<float> model(params.config);
    std::vector<Sequence> seqs;
    seqs.reserve(batch.size());
    for (const auto& ex : batch) {
        require(ex.tokens.size() <= params.config.context_len, "example exceeds context_len");
        seqs.push_back(Sequence::from_example(ex));
    }
    if (grad != nullptr) {
        grad->assign(params.flat.size(), 0.0f);
        return model.loss_and_grad(params.flat, seqs, *grad);
    }
    return model.loss_and_grad(params.flat, seqs, {});
}

Tokens greedy_decode(const ModelParams& params, std::span<const TokenId> prompt, std::size_t n_tokens) {
    TinyLM<float> model(params.config);
    return model.greedy_decode(params.flat, prompt, n_tokens);
}

} // namespace selm
