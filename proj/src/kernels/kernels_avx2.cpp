// Compiled with -mavx2 -mfma (see CMakeLists); only dispatched to when the
// CPU reports AVX2 support.
#include "rhsim/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace rhsim::kernels::avx2 {

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            __m256d acc = _mm256_setzero_pd();
            std::size_t l = 0;
            for (; l + 4 <= k; l += 4) {
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(ai + l),
                                      _mm256_loadu_pd(bj + l), acc);
            }
            __m128d lo = _mm256_castpd256_pd128(acc);
            __m128d hi = _mm256_extractf128_pd(acc, 1);
            lo = _mm_add_pd(lo, hi);
            double sum = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
            for (; l < k; ++l) sum += ai[l] * bj[l];
            c[i * n + j] = sum;
        }
    }
}

static inline void axpy(double av, const double* x, double* y, std::size_t n) {
    __m256d a = _mm256_set1_pd(av);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d yj = _mm256_loadu_pd(y + j);
        yj = _mm256_fmadd_pd(a, _mm256_loadu_pd(x + j), yj);
        _mm256_storeu_pd(y + j, yj);
    }
    for (; j < n; ++j) y[j] += av * x[j];
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) axpy(a[i * k + l], b + l * n, ci, n);
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = a + l * m;
        const double* bl = b + l * n;
        for (std::size_t i = 0; i < m; ++i) axpy(al[i], bl, c + i * n, n);
    }
}

void relu(const double* z, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(z + i), zero));
    for (; i < n; ++i) y[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward(double* dy, const double* z, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(z + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(dy + i, _mm256_and_pd(_mm256_loadu_pd(dy + i), mask));
    }
    for (; i < n; ++i)
        if (z[i] <= 0.0) dy[i] = 0.0;
}

}  // namespace rhsim::kernels::avx2
#endif  // __AVX2__
