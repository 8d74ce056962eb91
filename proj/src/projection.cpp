#include "selm/projection.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "selm/error.hpp"

namespace selm {

using kernels::Exec;

ProjectionSpec build_projection(const Key32& key_prime, std::size_t d, std::size_t D) {
    require(d >= 1 && D >= 1, "projection dimensions must be positive");
    ProjectionSpec spec;
    spec.d = d;
    spec.D = D;
    spec.block_size = kernels::next_power_of_two(d);
    spec.seed_material = key_prime;

    const std::size_t bs = spec.block_size;
    const std::size_t nb = spec.n_blocks();
    spec.signs.resize(nb * bs);
    spec.gaussians.resize(nb * bs);
    spec.permutation.resize(nb * bs);

    ChaChaStream stream(key_prime);
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t off = b * bs;

        // Signs: 64 per word, least significant bit first.
        std::uint64_t word = 0;
        for (std::size_t i = 0; i < bs; ++i) {
            if (i % 64 == 0) word = stream.next_u64();
            spec.signs[off + i] = (word >> (i % 64)) & 1u ? std::int8_t{-1} : std::int8_t{1};
        }

        for (std::size_t i = 0; i < bs; i += 2) {
            const double u1 = stream.next_open01();
            const double u2 = stream.next_open01();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double angle = 2.0 * std::numbers::pi * u2;
            spec.gaussians[off + i] = r * std::cos(angle);
            if (i + 1 < bs) spec.gaussians[off + i + 1] = r * std::sin(angle);
        }

        auto* perm = spec.permutation.data() + off;
        std::iota(perm, perm + bs, std::uint32_t{0});
        for (std::size_t i = bs - 1; i >= 1; --i) {
            const auto j = static_cast<std::size_t>(stream.next_below(i + 1));
            std::swap(perm[i], perm[j]);
        }
    }
    return spec;
}

Bytes ProjectionSpec::serialize() const {
    ByteWriter w;
    w.u64(d);
    w.u64(D);
    w.u64(block_size);
    w.raw(seed_material);
    for (auto s : signs) w.u8(static_cast<std::uint8_t>(s));
    for (double g : gaussians) w.u64(std::bit_cast<std::uint64_t>(g));
    for (auto p : permutation) w.u32(p);
    return std::move(w).bytes();
}

namespace {

// y_b = H G Pi H B x for block b, written into `work` (size block_size).
void forward_block(const ProjectionSpec& spec, std::size_t b, std::span<const double> x,
                   std::span<double> work, std::span<double> tmp) {
    const std::size_t bs = spec.block_size;
    const std::size_t off = b * bs;
    for (std::size_t i = 0; i < bs; ++i)
        tmp[i] = i < spec.d ? static_cast<double>(spec.signs[off + i]) * x[i] : 0.0;
    kernels::fwht(tmp);
    for (std::size_t i = 0; i < bs; ++i) work[i] = spec.gaussians[off + i] * tmp[spec.permutation[off + i]];
    kernels::fwht(work);
}

// z_b = B H Pi^T G H y_b for block b; `y` is the zero-padded block slice.
void adjoint_block(const ProjectionSpec& spec, std::size_t b, std::span<double> y,
                   std::span<double> tmp) {
    const std::size_t bs = spec.block_size;
    const std::size_t off = b * bs;
    kernels::fwht(y);
    for (std::size_t i = 0; i < bs; ++i) tmp[spec.permutation[off + i]] = spec.gaussians[off + i] * y[i];
    kernels::fwht(tmp);
    for (std::size_t i = 0; i < bs; ++i) tmp[i] *= static_cast<double>(spec.signs[off + i]);
}

} // namespace

void project_into(const ProjectionSpec& spec, std::span<const double> theta_d, std::span<double> out,
                  Exec exec) {
    if (theta_d.size() != spec.d)
        throw DimensionError("project: expected input of length " + std::to_string(spec.d) + ", got " +
                             std::to_string(theta_d.size()));
    if (out.size() != spec.D) throw DimensionError("project: output length must equal D");

    const std::size_t bs = spec.block_size;
    const std::size_t nb = spec.n_blocks();
    auto run = [&](std::size_t b, std::vector<double>& work, std::vector<double>& tmp) {
        forward_block(spec, b, theta_d, work, tmp);
        const std::size_t begin = b * bs;
        const std::size_t n = std::min(bs, spec.D - begin);
        std::copy_n(work.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(begin));
    };

    if (exec == Exec::parallel) {
#pragma omp parallel if (nb > 1 && nb * bs >= kernels::kParallelGrain)
        {
            std::vector<double> work(bs), tmp(bs);
#pragma omp for schedule(static)
            for (long b = 0; b < static_cast<long>(nb); ++b) run(static_cast<std::size_t>(b), work, tmp);
        }
    } else {
        std::vector<double> work(bs), tmp(bs);
        for (std::size_t b = 0; b < nb; ++b) run(b, work, tmp);
    }
}

void project_adjoint_into(const ProjectionSpec& spec, std::span<const double> grad_D,
                          std::span<double> out, Exec exec) {
    if (grad_D.size() != spec.D)
        throw DimensionError("project_adjoint: expected input of length " + std::to_string(spec.D) +
                             ", got " + std::to_string(grad_D.size()));
    if (out.size() != spec.d) throw DimensionError("project_adjoint: output length must equal d");

    const std::size_t bs = spec.block_size;
    const std::size_t nb = spec.n_blocks();
    auto block_input = [&](std::size_t b, std::vector<double>& y) {
        const std::size_t begin = b * bs;
        const std::size_t n = std::min(bs, spec.D - begin);
        std::copy_n(grad_D.begin() + static_cast<std::ptrdiff_t>(begin), n, y.begin());
        std::fill(y.begin() + static_cast<std::ptrdiff_t>(n), y.end(), 0.0);
    };

    // Per-block contributions are summed in block order on one thread, so the
    // result does not depend on the thread count.
    std::fill(out.begin(), out.end(), 0.0);
    if (exec == Exec::parallel && nb > 1 && nb * bs >= kernels::kParallelGrain) {
        std::vector<double> contrib(nb * spec.d);
#pragma omp parallel
        {
            std::vector<double> y(bs), tmp(bs);
#pragma omp for schedule(static)
            for (long bl = 0; bl < static_cast<long>(nb); ++bl) {
                const auto b = static_cast<std::size_t>(bl);
                block_input(b, y);
                adjoint_block(spec, b, y, tmp);
                std::copy_n(tmp.begin(), spec.d, contrib.begin() + static_cast<std::ptrdiff_t>(b * spec.d));
            }
        }
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < spec.d; ++i) out[i] += contrib[b * spec.d + i];
    } else {
        std::vector<double> y(bs), tmp(bs);
        for (std::size_t b = 0; b < nb; ++b) {
            block_input(b, y);
            adjoint_block(spec, b, y, tmp);
            for (std::size_t i = 0; i < spec.d; ++i) out[i] += tmp[i];
        }
    }
}

std::vector<double> project(const ProjectionSpec& spec, std::span<const double> theta_d, Exec exec) {
    std::vector<double> out(spec.D);
    project_into(spec, theta_d, out, exec);
    return out;
}

std::vector<double> project_adjoint(const ProjectionSpec& spec, std::span<const double> grad_D,
                                    Exec exec) {
    std::vector<double> out(spec.d);
    project_adjoint_into(spec, grad_D, out, exec);
    return out;
}

} // namespace selm
