#pragma once

#include <cstddef>

// Double-precision math kernels behind the network forward/backward passes.
// A scalar reference implementation always exists; an AVX2 variant is
// selected at runtime when the CPU supports it. The two are equivalence-
// tested against each other (FMA reassociation means results agree to
// rounding, not bit-for-bit).
namespace rhsim::kernels {

enum class Backend { Auto, Scalar, Avx2 };

// Selects the implementation set. Auto picks AVX2 when available.
// Requesting Avx2 on a CPU without it throws ConfigError.
void set_backend(Backend backend);
Backend active_backend();
const char* backend_name();

// c[m x n] = a[m x k] * b[n x k]^T  (rows of both operands contiguous in k)
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k);

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k);

// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k);

// y[i] = max(z[i], 0)
void relu(const double* z, double* y, std::size_t n);

// dy[i] = z[i] > 0 ? dy[i] : 0
void relu_backward(double* dy, const double* z, std::size_t n);

}  // namespace rhsim::kernels
