#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selm/bytes.hpp"
#include "selm/crypto.hpp"
#include "selm/random.hpp"
#include "selm/tinylm.hpp"
#include "selm/training.hpp"

namespace selm {

struct SecretKey {
    Key32 bytes{};
    bool operator==(const SecretKey&) const = default;
};

// 32 bytes from the OS CSPRNG.
SecretKey keygen();
// Reproducible key for tests and --insecure-seed runs only.
SecretKey keygen_insecure(Rng& rng);

// k' = HMAC-SHA256(k, le64(nonce)).
Key32 derive_key(const SecretKey& k, std::uint64_t nonce);

// Random version-4 UUIDs in canonical lowercase 36-character form, pairwise distinct.
std::vector<std::string> make_prompts(std::size_t n_chunks, ChaChaStream& rng);

// Greedy left-to-right split into pieces of at most context_len - prompt_len tokens.
std::vector<Tokens> chunk(std::span<const TokenId> message, std::size_t context_len, std::size_t prompt_len);

struct CiphertextChunk {
    std::string prompt;
    std::uint32_t token_count = 0;
    bool operator==(const CiphertextChunk&) const = default;
};

/// Wire format (little-endian):
///   "SELM" | version u8 = 1 | flags u8 | model_id[32] | d u32 | nonce u64 |
///   chunk_count u16 | per chunk: prompt_len u16, prompt bytes, token_count u32 |
///   d x binary32
struct Ciphertext {
    Digest model_id{};
    std::uint64_t nonce_x = 0;
    std::vector<CiphertextChunk> chunks;
    std::vector<float> theta_d_star;
    std::uint8_t flags = 0;

    std::size_t d() const { return theta_d_star.size(); }
    bool operator==(const Ciphertext&) const = default;
};

Bytes serialize(const Ciphertext& c);
Ciphertext deserialize_ciphertext(std::span<const std::uint8_t> data);

// Where the per-message nonce comes from. Default: OS entropy.
struct NonceSource {
    std::optional<std::uint64_t> fixed;
    Rng* rng = nullptr;

    std::uint64_t next() const;
};

struct EncryptResult {
    Ciphertext ciphertext;
    MemorizationResult stats;
};

// Throws EncryptionBudgetExceeded if memorization does not converge.
EncryptResult encrypt_detailed(const SecretKey& k, std::span<const std::uint8_t> message, const Checkpoint& model,
                               const TrainConfig& config, const NonceSource& nonce = {},
                               const MemorizeHooks& hooks = {});
Ciphertext encrypt(const SecretKey& k, std::span<const std::uint8_t> message, const Checkpoint& model,
                   const TrainConfig& config, const NonceSource& nonce = {});

// Throws ModelMismatch when the ciphertext names another checkpoint. A wrong
// key is not detectable: the output is simply not the message.
Bytes decrypt(const SecretKey& k, const Ciphertext& c, const Checkpoint& model);

// Raw 32-byte key files.
SecretKey load_key(const std::filesystem::path& path);
void save_key(const std::filesystem::path& path, const SecretKey& k);

} // namespace selm
