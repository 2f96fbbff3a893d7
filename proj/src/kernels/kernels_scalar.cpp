#include "rhsim/kernels.hpp"

namespace rhsim::kernels::scalar {

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
            c[i * n + j] = acc;
        }
    }
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a[i * k + l];
            const double* bl = b + l * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = a + l * m;
        const double* bl = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = al[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

void relu(const double* z, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = z[i] > 0.0 ? z[i] : 0.0;
}

void relu_backward(double* dy, const double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (z[i] <= 0.0) dy[i] = 0.0;
}

}  // namespace rhsim::kernels::scalar
