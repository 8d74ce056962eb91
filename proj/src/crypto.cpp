#include "selm/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <array>
#include <cstring>

namespace selm {

Digest sha256(std::span<const std::uint8_t> data) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size())
        throw Error("CryptoError", "SHA-256 failed");
    return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg) {
    Digest out{};
    unsigned int len = 0;
    if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.data(), msg.size(),
             out.data(), &len) == nullptr ||
        len != out.size())
        throw Error("CryptoError", "HMAC-SHA256 failed");
    return out;
}

void os_random_bytes(std::span<std::uint8_t> out) {
    if (out.empty()) return;
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
        throw EntropyError("operating system entropy source failed");
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * data.size());
    for (std::uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 15]);
    }
    return out;
}

std::uint64_t os_random_u64() {
    std::array<std::uint8_t, 8> b{};
    os_random_bytes(b);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

struct ChaChaStream::Impl {
    EVP_CIPHER_CTX* ctx = nullptr;
    std::array<std::uint8_t, 4096> buf{};
    std::size_t pos = 4096;
    ~Impl() { EVP_CIPHER_CTX_free(ctx); }
};

ChaChaStream::ChaChaStream(const Key32& key, std::uint64_t nonce) : impl_(std::make_unique<Impl>()) {
    // OpenSSL's IV is the RFC 8439 state words 12..15: a 32-bit block counter
    // followed by the 96-bit nonce. Counter starts at 0; the nonce is the
    // 64-bit stream id in the low words, little-endian.
    std::array<std::uint8_t, 16> iv{};
    for (int i = 0; i < 8; ++i) iv[4 + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(nonce >> (8 * i));
    impl_->ctx = EVP_CIPHER_CTX_new();
    if (impl_->ctx == nullptr ||
        EVP_EncryptInit_ex(impl_->ctx, EVP_chacha20(), nullptr, key.data(), iv.data()) != 1)
        throw Error("CryptoError", "ChaCha20 init failed");
}

ChaChaStream::~ChaChaStream() = default;
ChaChaStream::ChaChaStream(ChaChaStream&&) noexcept = default;
ChaChaStream& ChaChaStream::operator=(ChaChaStream&&) noexcept = default;

void ChaChaStream::refill() {
    static const std::array<std::uint8_t, 4096> zeros{};
    int outl = 0;
    if (EVP_EncryptUpdate(impl_->ctx, impl_->buf.data(), &outl, zeros.data(),
                          static_cast<int>(zeros.size())) != 1 ||
        outl != static_cast<int>(zeros.size()))
        throw Error("CryptoError", "ChaCha20 keystream failed");
    impl_->pos = 0;
}

void ChaChaStream::fill(std::span<std::uint8_t> out) {
    std::size_t done = 0;
    while (done < out.size()) {
        if (impl_->pos == impl_->buf.size()) refill();
        const std::size_t n = std::min(out.size() - done, impl_->buf.size() - impl_->pos);
        std::memcpy(out.data() + done, impl_->buf.data() + impl_->pos, n);
        impl_->pos += n;
        done += n;
    }
}

std::uint64_t ChaChaStream::next_u64() {
    std::array<std::uint8_t, 8> b{};
    fill(b);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

double ChaChaStream::next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t ChaChaStream::next_below(std::uint64_t n) { return next_u64() % n; }

} // namespace selm
