#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "selm/bytes.hpp"
#include "selm/crypto.hpp"
#include "selm/kernels.hpp"

namespace selm {

/// Key-derived Fastfood operator V = H G Pi H B from R^d to R^D, without the
/// scaling matrices and with the unnormalized +-1 Hadamard.
///
/// D is covered by ceil(D / block_size) independent blocks, each with its own
/// B, G and Pi; every block reads the same zero-padded input, and the last
/// block's output is truncated to D. All randomness is drawn from a ChaCha20
/// keystream keyed by `seed_material`, block by block, in the order:
/// sign bits, Gaussians (Box-Muller, both outputs used), Fisher-Yates draws.
///
/// Never written to disk; it is regenerated from the key on both sides.
struct ProjectionSpec {
    std::size_t d = 0;
    std::size_t D = 0;
    std::size_t block_size = 0;
    std::vector<std::int8_t> signs;          // n_blocks * block_size, diagonal of B
    std::vector<double> gaussians;           // n_blocks * block_size, diagonal of G
    std::vector<std::uint32_t> permutation;  // n_blocks * block_size, rows of Pi
    Key32 seed_material{};

    std::size_t n_blocks() const { return block_size == 0 ? 0 : (D + block_size - 1) / block_size; }

    // Canonical byte image of all fields, for determinism checks.
    Bytes serialize() const;
};

ProjectionSpec build_projection(const Key32& key_prime, std::size_t d, std::size_t D);

// P(x): length-D output. Linear in x.
std::vector<double> project(const ProjectionSpec& spec, std::span<const double> theta_d,
                            kernels::Exec exec = kernels::Exec::parallel);
// P^T(y): length-d output, so that <P x, y> = <x, P^T y>.
std::vector<double> project_adjoint(const ProjectionSpec& spec, std::span<const double> grad_D,
                                    kernels::Exec exec = kernels::Exec::parallel);

void project_into(const ProjectionSpec& spec, std::span<const double> theta_d, std::span<double> out,
                  kernels::Exec exec = kernels::Exec::parallel);
void project_adjoint_into(const ProjectionSpec& spec, std::span<const double> grad_D,
                          std::span<double> out, kernels::Exec exec = kernels::Exec::parallel);

} // namespace selm
