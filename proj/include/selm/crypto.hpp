#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include "selm/bytes.hpp"

namespace selm {

using Key32 = std::array<std::uint8_t, 32>;
using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> msg);

// Fills `out` from the operating system CSPRNG. Throws EntropyError on failure.
void os_random_bytes(std::span<std::uint8_t> out);
std::uint64_t os_random_u64();

// Lowercase hexadecimal.
std::string to_hex(std::span<const std::uint8_t> data);

// ChaCha20 (RFC 8439 block layout) keystream, used as a deterministic bit
// source. `nonce` selects an independent stream under the same key.
class ChaChaStream {
public:
    explicit ChaChaStream(const Key32& key, std::uint64_t nonce = 0);
    ~ChaChaStream();
    ChaChaStream(ChaChaStream&&) noexcept;
    ChaChaStream& operator=(ChaChaStream&&) noexcept;

    void fill(std::span<std::uint8_t> out);
    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1) from the top 53 bits.
    double next_open01();
    // x mod n of a 64-bit draw; bias <= n / 2^64.
    std::uint64_t next_below(std::uint64_t n);

private:
    void refill();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace selm
