#include "selm/kernels.hpp"

#include <bit>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace selm::kernels {

bool is_power_of_two(std::size_t n) { return std::has_single_bit(n); }

std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

void fwht(std::span<double> x) {
    const std::size_t n = x.size();
    for (std::size_t h = 1; h < n; h <<= 1) {
        for (std::size_t i = 0; i < n; i += 2 * h) {
            double* lo = x.data() + i;
            double* hi = lo + h;
            for (std::size_t j = 0; j < h; ++j) {
                const double a = lo[j];
                const double b = hi[j];
                lo[j] = a + b;
                hi[j] = a - b;
            }
        }
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace selm::kernels
