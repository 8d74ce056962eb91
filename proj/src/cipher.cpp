#include "selm/cipher.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>

#include "selm/error.hpp"

namespace selm {

namespace {
constexpr std::string_view kMagic = "SELM";
constexpr std::uint8_t kVersion = 1;
constexpr std::uint64_t kProjectionStream = 0;
constexpr std::uint64_t kPromptStream = 1;
} // namespace

SecretKey keygen() {
    SecretKey k;
    os_random_bytes(k.bytes);
    return k;
}

SecretKey keygen_insecure(Rng& rng) {
    SecretKey k;
    for (std::size_t i = 0; i < k.bytes.size(); i += 8) {
        const std::uint64_t v = rng.next_u64();
        for (std::size_t j = 0; j < 8; ++j) k.bytes[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
    }
    return k;
}

Key32 derive_key(const SecretKey& k, std::uint64_t nonce) {
    ByteWriter w;
    w.u64(nonce);
    return hmac_sha256(k.bytes, w.bytes());
}

std::vector<std::string> make_prompts(std::size_t n_chunks, ChaChaStream& rng) {
    require(n_chunks >= 1, "need at least one chunk");
    static constexpr char kHex[] = "0123456789abcdef";
    std::vector<std::string> out;
    std::set<std::string> seen;
    while (out.size() < n_chunks) {
        std::array<std::uint8_t, 16> b{};
        rng.fill(b);
        b[6] = static_cast<std::uint8_t>((b[6] & 0x0F) | 0x40);  // version 4
        b[8] = static_cast<std::uint8_t>((b[8] & 0x3F) | 0x80);  // RFC 4122 variant
        std::string s;
        s.reserve(36);
        for (std::size_t i = 0; i < 16; ++i) {
            if (i == 4 || i == 6 || i == 8 || i == 10) s.push_back('-');
            s.push_back(kHex[b[i] >> 4]);
            s.push_back(kHex[b[i] & 0x0F]);
        }
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

std::vector<Tokens> chunk(std::span<const TokenId> message, std::size_t context_len, std::size_t prompt_len) {
    require(context_len > prompt_len, "context_len must exceed the prompt length");
    const std::size_t cap = context_len - prompt_len;
    std::vector<Tokens> out;
    for (std::size_t at = 0; at < message.size(); at += cap) {
        const std::size_t n = std::min(cap, message.size() - at);
        out.emplace_back(message.begin() + static_cast<std::ptrdiff_t>(at),
                         message.begin() + static_cast<std::ptrdiff_t>(at + n));
    }
    return out;
}

Bytes serialize(const Ciphertext& c) {
    if (c.chunks.empty() || c.chunks.size() > std::numeric_limits<std::uint16_t>::max())
        throw FormatError("ciphertext must have between 1 and 65535 chunks");
    if (c.theta_d_star.empty()) throw FormatError("ciphertext vector is empty");
    ByteWriter w;
    w.raw(kMagic);
    w.u8(kVersion);
    w.u8(c.flags);
    w.raw(c.model_id);
    w.u32(static_cast<std::uint32_t>(c.theta_d_star.size()));
    w.u64(c.nonce_x);
    w.u16(static_cast<std::uint16_t>(c.chunks.size()));
    for (const auto& ch : c.chunks) {
        if (ch.prompt.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("prompt too long");
        if (ch.token_count == 0) throw FormatError("chunk token count must be at least 1");
        w.u16(static_cast<std::uint16_t>(ch.prompt.size()));
        w.raw(ch.prompt);
        w.u32(ch.token_count);
    }
    for (float x : c.theta_d_star) w.f32(x);
    return std::move(w).bytes();
}

Ciphertext deserialize_ciphertext(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    if (to_string(r.raw(4)) != kMagic) throw FormatError("not a ciphertext (bad magic)");
    if (const auto v = r.u8(); v != kVersion) throw FormatError("unsupported ciphertext version " + std::to_string(v));
    Ciphertext c;
    c.flags = r.u8();
    if (c.flags > 2) throw FormatError("unknown regularizer flag");
    const auto id = r.raw(32);
    std::copy(id.begin(), id.end(), c.model_id.begin());
    const std::uint32_t d = r.u32();
    if (d == 0) throw FormatError("ciphertext dimension is zero");
    c.nonce_x = r.u64();
    const std::uint16_t n_chunks = r.u16();
    if (n_chunks == 0) throw FormatError("ciphertext has no chunks");
    c.chunks.resize(n_chunks);
    for (auto& ch : c.chunks) {
        const std::uint16_t plen = r.u16();
        ch.prompt = to_string(r.raw(plen));
        ch.token_count = r.u32();
        if (ch.token_count == 0) throw FormatError("chunk token count must be at least 1");
    }
    if (r.remaining() != std::size_t{4} * d) throw FormatError("ciphertext vector length does not match d");
    c.theta_d_star.resize(d);
    for (auto& x : c.theta_d_star) x = r.f32();
    r.expect_end();
    return c;
}

std::uint64_t NonceSource::next() const {
    if (fixed) return *fixed;
    if (rng != nullptr) return rng->next_u64();
    return os_random_u64();
}

EncryptResult encrypt_detailed(const SecretKey& k, std::span<const std::uint8_t> message, const Checkpoint& model,
                               const TrainConfig& config, const NonceSource& nonce, const MemorizeHooks& hooks) {
    if (message.empty()) throw PreconditionError("message is empty");
    config.validate();
    const auto& mcfg = model.params.config;

    const std::uint64_t x = nonce.next();
    const Key32 kp = derive_key(k, x);
    const ProjectionSpec spec = build_projection(kp, config.d, model.params.flat.size());

    const Tokens tokens = tokenize(message);
    constexpr std::size_t kPromptLen = 36;
    const auto pieces = chunk(tokens, mcfg.context_len, kPromptLen);
    ChaChaStream prompt_rng(kp, kPromptStream);
    const auto prompts = make_prompts(pieces.size(), prompt_rng);

    std::vector<TrainingExample> examples;
    examples.reserve(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i)
        examples.push_back(TrainingExample::from_prompt_and_chunk(tokenize(to_bytes(prompts[i])), pieces[i]));

    MemorizationResult mem = memorize(config, model.params, spec, examples, hooks);
    if (!mem.converged)
        throw EncryptionBudgetExceeded("memorization did not converge within " + std::to_string(config.max_epochs) +
                                       " epochs (final loss " + std::to_string(mem.final_loss) +
                                       "); raise d or max_epochs");

    EncryptResult out;
    auto& c = out.ciphertext;
    c.model_id = model.id;
    c.nonce_x = x;
    c.flags = regularizer_tag(config.regularizer);
    for (std::size_t i = 0; i < pieces.size(); ++i)
        c.chunks.push_back({prompts[i], static_cast<std::uint32_t>(pieces[i].size())});
    c.theta_d_star.reserve(mem.theta_d_star.size());
    for (double v : mem.theta_d_star) c.theta_d_star.push_back(static_cast<float>(v));
    out.stats = std::move(mem);
    return out;
}

Ciphertext encrypt(const SecretKey& k, std::span<const std::uint8_t> message, const Checkpoint& model,
                   const TrainConfig& config, const NonceSource& nonce) {
    return encrypt_detailed(k, message, model, config, nonce).ciphertext;
}

Bytes decrypt(const SecretKey& k, const Ciphertext& c, const Checkpoint& model) {
    if (c.model_id != model.id) throw ModelMismatch("ciphertext was produced with a different model checkpoint");
    const Key32 kp = derive_key(k, c.nonce_x);
    const ProjectionSpec spec = build_projection(kp, c.d(), model.params.flat.size());
    const std::vector<double> theta(c.theta_d_star.begin(), c.theta_d_star.end());
    const std::vector<float> params = materialize_params(model.params, spec, theta);

    TinyLM<float> lm(model.params.config);
    Tokens out;
    for (const auto& ch : c.chunks) {
        const Tokens prompt = tokenize(to_bytes(ch.prompt));
        if (prompt.empty() || prompt.size() + ch.token_count > model.params.config.context_len)
            throw FormatError("chunk does not fit the model context");
        const Tokens piece = lm.greedy_decode(params, prompt, ch.token_count);
        out.insert(out.end(), piece.begin(), piece.end());
    }
    return detokenize(out);
}

SecretKey load_key(const std::filesystem::path& path) {
    const Bytes raw = read_file(path);
    if (raw.size() != 32) throw FormatError("key file must hold exactly 32 bytes");
    SecretKey k;
    std::copy(raw.begin(), raw.end(), k.bytes.begin());
    return k;
}

void save_key(const std::filesystem::path& path, const SecretKey& k) { write_file_atomic(path, k.bytes, true); }

} // namespace selm
