#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "selm/bytes.hpp"
#include "selm/crypto.hpp"
#include "selm/kernels.hpp"

namespace selm {

using TokenId = std::uint16_t;
using Tokens = std::vector<TokenId>;

// Byte-level tokenizer: token id == byte value, so it is trivially invertible.
Tokens tokenize(std::span<const std::uint8_t> bytes);
Bytes detokenize(std::span<const TokenId> tokens);

struct ModelConfig {
    std::uint32_t vocab_size = 256;
    std::uint32_t context_len = 128;
    std::uint32_t n_layers = 2;
    std::uint32_t n_heads = 4;
    std::uint32_t d_model = 64;
    std::uint32_t d_ff = 256;

    void validate() const;
    // Length of the flat parameter vector.
    std::size_t param_count() const;
    bool operator==(const ModelConfig&) const = default;
};

// Offsets of each tensor inside the flat parameter vector. The order is fixed:
//   wte[V][C]  wpe[T][C]
//   per layer: ln1_g[C] ln1_b[C] w_qkv[C][3C] b_qkv[3C] w_o[C][C] b_o[C]
//              ln2_g[C] ln2_b[C] w_fc[C][F] b_fc[F] w_proj[F][C] b_proj[C]
//   lnf_g[C] lnf_b[C]
// Matrices are row-major [in][out]. The output head is tied to wte.
struct ParamLayout {
    struct Layer {
        std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
    };
    std::size_t wte = 0, wpe = 0, lnf_g = 0, lnf_b = 0, total = 0;
    std::vector<Layer> layers;

    explicit ParamLayout(const ModelConfig& cfg);
};

struct ModelParams {
    ModelConfig config;
    std::vector<float> flat;
};

// One training sequence: prompt ++ message chunk. loss_mask[p] marks token p as
// a prediction target (it is predicted from the logits at position p - 1).
struct TrainingExample {
    Tokens tokens;
    std::vector<bool> loss_mask;

    static TrainingExample from_prompt_and_chunk(std::span<const TokenId> prompt,
                                                 std::span<const TokenId> chunk);
};

// Lower-level view used by the model: inputs[p] feeds position p, and when
// target_mask[p] is set the logits at p are scored against targets[p].
struct Sequence {
    Tokens inputs;
    Tokens targets;
    std::vector<bool> target_mask;

    static Sequence from_example(const TrainingExample& ex);
};

struct LossResult {
    double loss = 0.0;              // mean cross-entropy over scored positions
    std::size_t scored = 0;         // number of scored positions
    bool all_argmax_match = false;  // greedy argmax equals the target at every scored position
};

// Argmax with the lowest index winning ties.
template <typename T>
std::size_t argmax(std::span<const T> v);

/// Decoder-only pre-LN transformer with reverse-mode gradients, templated on
/// the arithmetic type. Production code runs in float; tests use double for
/// finite-difference checks.
///
/// Instances own scratch buffers and are not safe to share across threads;
/// results depend only on the inputs. Every per-position quantity is computed
/// with the same operation order regardless of sequence length, so logits at
/// position i from a teacher-forced pass equal those of a decode pass over
/// the same prefix.
template <typename T>
class TinyLM {
public:
    explicit TinyLM(const ModelConfig& cfg, kernels::Exec exec = kernels::Exec::parallel);
    ~TinyLM();
    TinyLM(TinyLM&&) noexcept;
    TinyLM& operator=(TinyLM&&) noexcept;

    const ModelConfig& config() const;
    std::size_t param_count() const;

    // Mean masked cross-entropy. When `grad` is non-empty it receives
    // d loss / d params (overwritten, not accumulated).
    LossResult loss_and_grad(std::span<const T> params, std::span<const Sequence> batch,
                             std::span<T> grad);

    // Full logits [n_inputs x vocab] for one input sequence (test helper).
    std::vector<T> logits(std::span<const T> params, std::span<const TokenId> inputs);

    // Logits at the last input position only.
    std::vector<T> last_logits(std::span<const T> params, std::span<const TokenId> inputs);

    Tokens greedy_decode(std::span<const T> params, std::span<const TokenId> prompt,
                         std::size_t n_tokens);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

extern template class TinyLM<float>;
extern template class TinyLM<double>;

// Convenience wrappers over a temporary float model.
LossResult forward_loss(const ModelParams& params, std::span<const TrainingExample> batch,
                        std::vector<float>* grad = nullptr);
Tokens greedy_decode(const ModelParams& params, std::span<const TokenId> prompt, std::size_t n_tokens);

// Seeded GPT-2 style initialization: N(0, 0.02) weights, residual projections
// scaled by 1/sqrt(2 * n_layers), zero biases, unit norm gains.
std::vector<float> init_params(const ModelConfig& cfg, std::uint64_t seed);

struct PretrainOptions {
    std::size_t batch_size = 8;
    std::size_t window = 0;  // 0: use context_len
    double lr = 1e-3;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    std::size_t log_every = 0;  // 0: silent
};

// Standard next-token training on random corpus windows. steps == 0 returns
// the seeded initialization.
ModelParams pretrain(const ModelConfig& cfg, std::span<const std::uint8_t> corpus, std::size_t steps,
                     std::uint64_t seed, const PretrainOptions& opts = {});

// Mean next-token loss over `n_windows` windows drawn with `seed` (for monitoring).
double corpus_loss(const ModelParams& params, std::span<const std::uint8_t> corpus,
                   std::size_t n_windows, std::size_t window, std::uint64_t seed);

// Checkpoint: "SLMW" | version u8 | 6 x u32 config | D x f32, little-endian.
Bytes serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(std::span<const std::uint8_t> data);
Digest model_id(std::span<const std::uint8_t> checkpoint_bytes);

struct Checkpoint {
    ModelParams params;
    Digest id{};
    static Checkpoint load(const std::filesystem::path& path);
    static Checkpoint from_params(ModelParams params);
};

} // namespace selm
