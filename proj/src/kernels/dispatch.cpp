#include "rhsim/kernels.hpp"

#include "rhsim/errors.hpp"

namespace rhsim::kernels {

namespace scalar {
void matmul_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_nn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void relu(const double*, double*, std::size_t);
void relu_backward(double*, const double*, std::size_t);
}  // namespace scalar

#if defined(RHSIM_HAVE_AVX2)
namespace avx2 {
void matmul_nt(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_nn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void matmul_tn(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
void relu(const double*, double*, std::size_t);
void relu_backward(double*, const double*, std::size_t);
}  // namespace avx2
#endif

namespace {

using MatmulFn = void (*)(const double*, const double*, double*,
                          std::size_t, std::size_t, std::size_t);
using ReluFn = void (*)(const double*, double*, std::size_t);
using ReluBwdFn = void (*)(double*, const double*, std::size_t);

struct Table {
    MatmulFn nt, nn, tn;
    ReluFn relu;
    ReluBwdFn relu_bwd;
    Backend which;
};

constexpr Table kScalar{scalar::matmul_nt, scalar::matmul_nn, scalar::matmul_tn,
                        scalar::relu, scalar::relu_backward, Backend::Scalar};

bool cpu_has_avx2() {
#if defined(RHSIM_HAVE_AVX2)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Table pick(Backend backend) {
#if defined(RHSIM_HAVE_AVX2)
    const Table kAvx2{avx2::matmul_nt, avx2::matmul_nn, avx2::matmul_tn,
                      avx2::relu, avx2::relu_backward, Backend::Avx2};
    if (backend == Backend::Avx2) {
        if (!cpu_has_avx2()) throw ConfigError("AVX2 backend requested but CPU lacks AVX2/FMA");
        return kAvx2;
    }
    if (backend == Backend::Auto && cpu_has_avx2()) return kAvx2;
#else
    if (backend == Backend::Avx2)
        throw ConfigError("AVX2 backend requested but this build has no AVX2 kernels");
#endif
    return kScalar;
}

Table g_table = pick(Backend::Auto);

}  // namespace

void set_backend(Backend backend) { g_table = pick(backend); }

Backend active_backend() { return g_table.which; }

const char* backend_name() {
    return g_table.which == Backend::Avx2 ? "avx2" : "scalar";
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    g_table.nt(a, b, c, m, n, k);
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    g_table.nn(a, b, c, m, n, k);
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t n, std::size_t k) {
    g_table.tn(a, b, c, m, n, k);
}

void relu(const double* z, double* y, std::size_t n) { g_table.relu(z, y, n); }

void relu_backward(double* dy, const double* z, std::size_t n) {
    g_table.relu_bwd(dy, z, n);
}

}  // namespace rhsim::kernels
