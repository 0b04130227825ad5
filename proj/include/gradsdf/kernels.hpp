#pragma once

#include <cstdint>

namespace gradsdf::kernels {

// Data-parallel inner loops of the hot paths, batched over sample columns.
// Activation matrices are laid out [row][column] with `batch` columns, so the
// column index is the SIMD axis. Weights are f32 (parameter storage), all
// accumulation is f64.
//
// One scalar reference implementation and one AVX2 implementation exist for
// every entry; `active()` picks at runtime. The two are equivalence-tested
// against each other (bitwise for min_dist_sq, tight tolerance where the
// summation order differs).
struct Ops {
    const char* name;

    // y[r*batch+b] = bias[r] + sum_c W[r*cols+c] * x[c*batch+b]
    void (*layer_forward)(const float* W, const float* bias, const double* x, double* y,
                          int rows, int cols, int batch);

    // dx[c*batch+b] = sum_r W[r*cols+c] * dy[r*batch+b]
    void (*layer_backward_data)(const float* W, const double* dy, double* dx,
                                int rows, int cols, int batch);

    // dW[r*cols+c] += sum_b dy[r*batch+b] * x[c*batch+b];  db[r] += sum_b dy[r*batch+b]
    void (*layer_backward_param)(const double* dy, const double* x, double* dW, double* db,
                                 int rows, int cols, int batch);

    // a[i] = z[i] > 0 ? z[i] : slope * z[i]
    void (*leaky_relu)(const double* z, double* a, int n, double slope);

    // dz[i] = da[i] * (z[i] > 0 ? 1 : slope)
    void (*leaky_relu_grad)(const double* z, const double* da, double* dz, int n, double slope);

    // min over i of (xs[i]-qx)^2 + (ys[i]-qy)^2 + (zs[i]-qz)^2; n may be 0 (returns +inf).
    // Computed without FMA contraction so scalar and SIMD agree bitwise.
    double (*min_dist_sq)(const double* xs, const double* ys, const double* zs, int n,
                          double qx, double qy, double qz);

    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, int n);
};

const Ops& scalar_ops();
bool cpu_has_avx2();

#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif

// Runtime selection: AVX2 when the CPU supports it, scalar otherwise.
// GRADSDF_KERNELS=scalar|avx2 overrides (used by the equivalence tests).
const Ops& active();

}  // namespace gradsdf::kernels
