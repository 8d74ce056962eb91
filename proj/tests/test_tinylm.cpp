#include <gtest/gtest.h>

#include <cmath>

#include "selm/random.hpp"
#include "selm/tinylm.hpp"

using namespace selm;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.context_len = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    return c;
}

template <typename T>
std::vector<T> random_params(const ModelConfig& cfg, std::uint64_t seed, double scale) {
    Rng rng(seed);
    std::vector<T> p(cfg.param_count());
    for (auto& x : p) x = static_cast<T>(scale * rng.normal());
    const ParamLayout lay(cfg);
    for (const auto& l : lay.layers)
        for (std::size_t off : {l.ln1_g, l.ln2_g})
            for (std::size_t i = 0; i < cfg.d_model; ++i) p[off + i] += T(1);
    for (std::size_t i = 0; i < cfg.d_model; ++i) p[lay.lnf_g + i] += T(1);
    return p;
}

Tokens random_tokens(Rng& rng, std::size_t n) {
    Tokens t(n);
    for (auto& x : t) x = static_cast<TokenId>(rng.below(256));
    return t;
}

} // namespace

TEST(Tokenizer, AsciiValues) {
    const Bytes hi = to_bytes("Hi");
    EXPECT_EQ(tokenize(hi), (Tokens{72, 105}));
}

TEST(Tokenizer, EmptyCase) {
    EXPECT_TRUE(tokenize(Bytes{}).empty());
    EXPECT_TRUE(detokenize(Tokens{}).empty());
}

TEST(Tokenizer, RoundtripRandomStrings) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        Bytes b(rng.below(300));
        for (auto& x : b) x = static_cast<std::uint8_t>(rng.below(256));
        ASSERT_EQ(detokenize(tokenize(b)), b);
    }
}

TEST(Tokenizer, RejectsOutOfRangeIds) { EXPECT_THROW(detokenize(Tokens{65, 256}), FormatError); }

TEST(ModelConfig, DefaultParameterCount) {
    const ModelConfig c;
    EXPECT_EQ(c.param_count(), 124672u);
    EXPECT_EQ(ParamLayout(c).total, c.param_count());
    EXPECT_LT(tiny_config().param_count(), 5000u);
}

TEST(ModelConfig, Validation) {
    ModelConfig c;
    c.n_heads = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.context_len = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.vocab_size = 300;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Argmax, LowestIndexWinsTies) {
    const std::vector<float> v{1.0f, 3.0f, 3.0f, 2.0f};
    EXPECT_EQ(argmax<float>(v), 1u);
}

TEST(ForwardLoss, UniformLogitsGiveLog256) {
    ModelConfig c = tiny_config();
    const ModelParams zero{c, std::vector<float>(c.param_count(), 0.0f)};
    const auto ex = TrainingExample::from_prompt_and_chunk(Tokens{1, 2, 3, 4}, Tokens{5, 6, 7});
    const auto r = forward_loss(zero, std::span<const TrainingExample>(&ex, 1));
    EXPECT_NEAR(r.loss, std::log(256.0), 1e-6);
    EXPECT_EQ(r.scored, 3u);
}

TEST(ForwardLoss, MaskedOutTargetsDoNotMatter) {
    const ModelConfig c = tiny_config();
    TinyLM<double> m(c);
    const auto p = random_params<double>(c, 2, 0.3);
    auto seq = Sequence::from_example(TrainingExample::from_prompt_and_chunk(Tokens{10, 20, 30, 40}, Tokens{50, 60}));
    std::vector<double> g1(p.size()), g2(p.size());
    const auto a = m.loss_and_grad(p, std::span<const Sequence>(&seq, 1), g1);
    for (std::size_t i = 0; i < seq.targets.size(); ++i)
        if (!seq.target_mask[i]) seq.targets[i] = static_cast<TokenId>(255 - seq.targets[i]);
    const auto b = m.loss_and_grad(p, std::span<const Sequence>(&seq, 1), g2);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(g1, g2);
}

TEST(ForwardLoss, EmptyMaskIsRejected) {
    const ModelConfig c = tiny_config();
    TinyLM<double> m(c);
    const auto p = random_params<double>(c, 3, 0.1);
    Sequence s{Tokens{1, 2, 3}, Tokens{2, 3, 4}, std::vector<bool>(3, false)};
    std::vector<double> g(p.size());
    EXPECT_THROW(m.loss_and_grad(p, std::span<const Sequence>(&s, 1), g), PreconditionError);
}

TEST(ForwardLoss, GradientMatchesFiniteDifferences) {
    const ModelConfig c = tiny_config();
    TinyLM<double> m(c);
    auto p = random_params<double>(c, 4, 0.3);
    Rng rng(5);
    std::vector<Sequence> batch;
    for (int i = 0; i < 2; ++i)
        batch.push_back(Sequence::from_example(
            TrainingExample::from_prompt_and_chunk(random_tokens(rng, 3), random_tokens(rng, 5))));
    std::vector<double> g(p.size()), none;
    m.loss_and_grad(p, batch, g);
    const double h = 1e-5;
    for (int t = 0; t < 50; ++t) {
        const std::size_t i = rng.below(p.size());
        const double orig = p[i];
        p[i] = orig + h;
        const double up = m.loss_and_grad(p, batch, none).loss;
        p[i] = orig - h;
        const double dn = m.loss_and_grad(p, batch, none).loss;
        p[i] = orig;
        const double fd = (up - dn) / (2 * h);
        const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-7});
        EXPECT_LT(rel, 1e-3) << "coordinate " << i << " analytic " << g[i] << " numeric " << fd;
    }
}

TEST(ForwardLoss, ParallelMatchesSerialBitwise) {
    const ModelConfig c;
    const auto p = init_params(c, 6);
    Rng rng(7);
    std::vector<Sequence> batch{Sequence::from_example(
        TrainingExample::from_prompt_and_chunk(random_tokens(rng, 36), random_tokens(rng, 90)))};
    TinyLM<float> ser(c, kernels::Exec::serial), par(c, kernels::Exec::parallel);
    std::vector<float> g1(p.size()), g2(p.size());
    const auto a = ser.loss_and_grad(p, batch, g1);
    const auto b = par.loss_and_grad(p, batch, g2);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(g1, g2);
}

TEST(Model, Causality) {
    const ModelConfig c = tiny_config();
    TinyLM<float> m(c);
    const auto p = random_params<float>(c, 8, 0.3);
    const Tokens a{5, 6, 7, 8, 9, 10};
    Tokens b = a;
    b[4] = 200;
    b[5] = 201;
    const auto la = m.logits(p, a), lb = m.logits(p, b);
    for (std::size_t i = 0; i < 4 * 256; ++i) ASSERT_EQ(la[i], lb[i]);
    bool differs = false;
    for (std::size_t i = 4 * 256; i < la.size(); ++i) differs |= la[i] != lb[i];
    EXPECT_TRUE(differs);
}

TEST(Model, TeacherForcedLogitsEqualPrefixLogits) {
    const ModelConfig c;
    TinyLM<float> m(c);
    const auto p = init_params(c, 9);
    Rng rng(10);
    const Tokens seq = random_tokens(rng, 40);
    const auto full = m.logits(p, seq);
    for (std::size_t n : {1u, 17u, 40u}) {
        const auto last = m.last_logits(p, std::span<const TokenId>(seq.data(), n));
        for (std::size_t v = 0; v < 256; ++v) ASSERT_EQ(last[v], full[(n - 1) * 256 + v]);
    }
}

TEST(GreedyDecode, TiesGoToLowestToken) {
    const ModelConfig c = tiny_config();
    const ModelParams zero{c, std::vector<float>(c.param_count(), 0.0f)};
    EXPECT_EQ(greedy_decode(zero, Tokens{9, 9}, 3), (Tokens{0, 0, 0}));
}

TEST(GreedyDecode, LengthContract) {
    const ModelConfig c = tiny_config();
    const ModelParams p{c, init_params(c, 11)};
    EXPECT_TRUE(greedy_decode(p, Tokens{1, 2}, 0).empty());
    EXPECT_EQ(greedy_decode(p, Tokens{1, 2}, 6).size(), 6u);
    EXPECT_THROW(greedy_decode(p, Tokens{1, 2}, 7), PreconditionError);
    EXPECT_THROW(greedy_decode(p, Tokens{}, 1), PreconditionError);
}

TEST(GreedyDecode, Deterministic) {
    const ModelConfig c;
    const ModelParams p{c, init_params(c, 12)};
    const Tokens prompt{1, 2, 3, 4, 5};
    EXPECT_EQ(greedy_decode(p, prompt, 50), greedy_decode(p, prompt, 50));
}

TEST(Pretrain, ZeroStepsIsInitialization) {
    const ModelConfig c = tiny_config();
    const Bytes corpus = to_bytes("some corpus text that is long enough");
    EXPECT_EQ(pretrain(c, corpus, 0, 13).flat, init_params(c, 13));
}

TEST(Pretrain, DeterministicAndLowersHeldOutLoss) {
    ModelConfig c;
    c.context_len = 32;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    std::string text;
    for (int i = 0; i < 60; ++i) text += "the quick brown fox jumps over the lazy dog while the cat sleeps. ";
    const Bytes corpus = to_bytes(text);
    const std::span<const std::uint8_t> train(corpus.data(), corpus.size() * 8 / 10);
    const std::span<const std::uint8_t> held(corpus.data() + train.size(), corpus.size() - train.size());
    PretrainOptions o;
    o.lr = 3e-3;
    const auto a = pretrain(c, train, 2000, 14, o);
    const auto b = pretrain(c, train, 5, 14, o);
    const auto b2 = pretrain(c, train, 5, 14, o);
    EXPECT_EQ(b.flat, b2.flat);
    const ModelParams init{c, init_params(c, 14)};
    const double before = corpus_loss(init, held, 20, 32, 15);
    const double after = corpus_loss(a, held, 20, 32, 15);
    EXPECT_LT(after, before);
}

TEST(Checkpoint, RoundtripAndValidation) {
    const ModelConfig c = tiny_config();
    const ModelParams p{c, init_params(c, 16)};
    const Bytes bytes = serialize_checkpoint(p);
    EXPECT_EQ(bytes.size(), 4 + 1 + 6 * 4 + 4 * c.param_count());
    const ModelParams q = deserialize_checkpoint(bytes);
    EXPECT_EQ(q.config, c);
    EXPECT_EQ(q.flat, p.flat);
    EXPECT_EQ(model_id(bytes), sha256(bytes));
    Bytes bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    EXPECT_THROW(deserialize_checkpoint(bad), FormatError);
    EXPECT_EQ(Checkpoint::from_params(p).id, model_id(bytes));
}
