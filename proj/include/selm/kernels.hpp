#pragma once

// Dense kernels used by the projection and the transformer.
//
// Every kernel comes in two flavours selected by `Exec`: a plain serial loop
// nest kept as the reference, and an OpenMP variant that splits the work over
// independent output rows. Each output element is produced by exactly one
// thread with the same sequence of floating-point operations as the serial
// loop, so both flavours agree bit for bit (the tests check this). Nothing
// here reassociates a sum.

#include <cstddef>
#include <span>
#include <vector>

namespace selm::kernels {

enum class Exec { serial, parallel };

// Work (in multiply-adds) below which the parallel flavour stays on one thread.
inline constexpr std::size_t kParallelGrain = 1u << 15;

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// In-place unnormalized Walsh-Hadamard transform in natural (Sylvester) order,
// i.e. x <- H x with H[i][j] = (-1)^popcount(i & j). x.size() must be a power of two.
void fwht(std::span<double> x);

// out[M x N] = A[M x K] * W[K x N] (+ bias[N] broadcast over rows when non-null).
template <typename T>
void matmul(Exec exec, const T* A, const T* W, const T* bias, T* out, std::size_t M,
            std::size_t K, std::size_t N) {
    auto row = [&](std::size_t i) {
        T* o = out + i * N;
        if (bias != nullptr) {
            for (std::size_t j = 0; j < N; ++j) o[j] = bias[j];
        } else {
            for (std::size_t j = 0; j < N; ++j) o[j] = T(0);
        }
        const T* a = A + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const T aik = a[k];
            const T* w = W + k * N;
            for (std::size_t j = 0; j < N; ++j) o[j] += aik * w[j];
        }
    };
    if (exec == Exec::parallel) {
        const long m = static_cast<long>(M);
#pragma omp parallel for schedule(static) if (M * K * N >= kParallelGrain)
        for (long i = 0; i < m; ++i) row(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < M; ++i) row(i);
    }
}

// dA[M x K] += dOut[M x N] * W^T, where Wt is W[K x N] already transposed to [N x K].
template <typename T>
void matmul_acc_bt(Exec exec, const T* dOut, const T* Wt, T* dA, std::size_t M, std::size_t K,
                   std::size_t N) {
    auto row = [&](std::size_t i) {
        T* o = dA + i * K;
        const T* g = dOut + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const T gij = g[j];
            const T* w = Wt + j * K;
            for (std::size_t k = 0; k < K; ++k) o[k] += gij * w[k];
        }
    };
    if (exec == Exec::parallel) {
        const long m = static_cast<long>(M);
#pragma omp parallel for schedule(static) if (M * K * N >= kParallelGrain)
        for (long i = 0; i < m; ++i) row(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < M; ++i) row(i);
    }
}

// dW[K x N] += A[M x K]^T * dOut[M x N]; each dW row sums over i in order.
template <typename T>
void matmul_acc_at(Exec exec, const T* A, const T* dOut, T* dW, std::size_t M, std::size_t K,
                   std::size_t N) {
    auto row = [&](std::size_t k) {
        T* o = dW + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const T aik = A[i * K + k];
            const T* g = dOut + i * N;
            for (std::size_t j = 0; j < N; ++j) o[j] += aik * g[j];
        }
    };
    if (exec == Exec::parallel) {
        const long kk = static_cast<long>(K);
#pragma omp parallel for schedule(static) if (M * K * N >= kParallelGrain)
        for (long k = 0; k < kk; ++k) row(static_cast<std::size_t>(k));
    } else {
        for (std::size_t k = 0; k < K; ++k) row(k);
    }
}

// Wt[N x K] = W[K x N]^T.
template <typename T>
void transpose(const T* W, T* Wt, std::size_t K, std::size_t N) {
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < N; ++j) Wt[j * K + k] = W[k * N + j];
}

int max_threads();

} // namespace selm::kernels
