// AVX2/FMA variants of the batched kernels. Compiled with -mavx2 -mfma for
// this translation unit only; callers go through kernels::active().
//
// Per-column accumulation order matches the scalar reference (columns never
// mix in layer_forward / layer_backward_data), so the only numeric difference
// there is FMA rounding. min_dist_sq, leaky_relu and axpy avoid FMA entirely
// and are bitwise-identical to the scalar reference.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>
#include <limits>

#include "gradsdf/kernels.hpp"

namespace gradsdf::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

inline double hmin(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_min_pd(lo, hi);
    const double a = _mm_cvtsd_f64(lo);
    const double b = _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
    return a < b ? a : b;
}

void layer_forward_avx2(const float* W, const float* bias, const double* x, double* y,
                        int rows, int cols, int batch) {
    const int b16 = batch & ~15;
    const int b4 = batch & ~3;
    for (int r = 0; r < rows; ++r) {
        double* yr = y + size_t(r) * batch;
        const float* wr = W + size_t(r) * cols;
        const double bv = bias ? double(bias[r]) : 0.0;
        int b = 0;
        for (; b < b16; b += 16) {
            __m256d a0 = _mm256_set1_pd(bv);
            __m256d a1 = a0, a2 = a0, a3 = a0;
            for (int c = 0; c < cols; ++c) {
                const __m256d w = _mm256_set1_pd(double(wr[c]));
                const double* xc = x + size_t(c) * batch + b;
                a0 = _mm256_fmadd_pd(w, _mm256_loadu_pd(xc + 0), a0);
                a1 = _mm256_fmadd_pd(w, _mm256_loadu_pd(xc + 4), a1);
                a2 = _mm256_fmadd_pd(w, _mm256_loadu_pd(xc + 8), a2);
                a3 = _mm256_fmadd_pd(w, _mm256_loadu_pd(xc + 12), a3);
            }
            _mm256_storeu_pd(yr + b + 0, a0);
            _mm256_storeu_pd(yr + b + 4, a1);
            _mm256_storeu_pd(yr + b + 8, a2);
            _mm256_storeu_pd(yr + b + 12, a3);
        }
        for (; b < b4; b += 4) {
            __m256d acc = _mm256_set1_pd(bv);
            for (int c = 0; c < cols; ++c) {
                const __m256d w = _mm256_set1_pd(double(wr[c]));
                acc = _mm256_fmadd_pd(w, _mm256_loadu_pd(x + size_t(c) * batch + b), acc);
            }
            _mm256_storeu_pd(yr + b, acc);
        }
        for (; b < batch; ++b) {
            double acc = bv;
            for (int c = 0; c < cols; ++c) acc = std::fma(double(wr[c]), x[size_t(c) * batch + b], acc);
            yr[b] = acc;
        }
    }
}

void layer_backward_data_avx2(const float* W, const double* dy, double* dx,
                              int rows, int cols, int batch) {
    const int b16 = batch & ~15;
    const int b4 = batch & ~3;
    for (int c = 0; c < cols; ++c) {
        double* dxc = dx + size_t(c) * batch;
        int b = 0;
        for (; b < b16; b += 16) {
            __m256d a0 = _mm256_setzero_pd();
            __m256d a1 = a0, a2 = a0, a3 = a0;
            for (int r = 0; r < rows; ++r) {
                const __m256d w = _mm256_set1_pd(double(W[size_t(r) * cols + c]));
                const double* dyr = dy + size_t(r) * batch + b;
                a0 = _mm256_fmadd_pd(w, _mm256_loadu_pd(dyr + 0), a0);
                a1 = _mm256_fmadd_pd(w, _mm256_loadu_pd(dyr + 4), a1);
                a2 = _mm256_fmadd_pd(w, _mm256_loadu_pd(dyr + 8), a2);
                a3 = _mm256_fmadd_pd(w, _mm256_loadu_pd(dyr + 12), a3);
            }
            _mm256_storeu_pd(dxc + b + 0, a0);
            _mm256_storeu_pd(dxc + b + 4, a1);
            _mm256_storeu_pd(dxc + b + 8, a2);
            _mm256_storeu_pd(dxc + b + 12, a3);
        }
        for (; b < b4; b += 4) {
            __m256d acc = _mm256_setzero_pd();
            for (int r = 0; r < rows; ++r) {
                const __m256d w = _mm256_set1_pd(double(W[size_t(r) * cols + c]));
                acc = _mm256_fmadd_pd(w, _mm256_loadu_pd(dy + size_t(r) * batch + b), acc);
            }
            _mm256_storeu_pd(dxc + b, acc);
        }
        for (; b < batch; ++b) {
            double acc = 0.0;
            for (int r = 0; r < rows; ++r)
                acc = std::fma(double(W[size_t(r) * cols + c]), dy[size_t(r) * batch + b], acc);
            dxc[b] = acc;
        }
    }
}

void layer_backward_param_avx2(const double* dy, const double* x, double* dW, double* db,
                               int rows, int cols, int batch) {
    const int b8 = batch & ~7;
    for (int r = 0; r < rows; ++r) {
        const double* dyr = dy + size_t(r) * batch;
        __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
        int b = 0;
        for (; b < b8; b += 8) {
            s0 = _mm256_add_pd(s0, _mm256_loadu_pd(dyr + b));
            s1 = _mm256_add_pd(s1, _mm256_loadu_pd(dyr + b + 4));
        }
        double sum = hsum(_mm256_add_pd(s0, s1));
        for (; b < batch; ++b) sum += dyr[b];
        db[r] += sum;

        double* dwr = dW + size_t(r) * cols;
        for (int c = 0; c < cols; ++c) {
            const double* xc = x + size_t(c) * batch;
            __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
            int k = 0;
            for (; k < b8; k += 8) {
                a0 = _mm256_fmadd_pd(_mm256_loadu_pd(dyr + k), _mm256_loadu_pd(xc + k), a0);
                a1 = _mm256_fmadd_pd(_mm256_loadu_pd(dyr + k + 4), _mm256_loadu_pd(xc + k + 4), a1);
            }
            double acc = hsum(_mm256_add_pd(a0, a1));
            for (; k < batch; ++k) acc += dyr[k] * xc[k];
            dwr[c] += acc;
        }
    }
}

void leaky_relu_avx2(const double* z, double* a, int n, double slope) {
    const __m256d s = _mm256_set1_pd(slope);
    const __m256d zero = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(z + i);
        const __m256d neg = _mm256_mul_pd(v, s);
        const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(a + i, _mm256_blendv_pd(neg, v, mask));
    }
    for (; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : slope * z[i];
}

void leaky_relu_grad_avx2(const double* z, const double* da, double* dz, int n, double slope) {
    const __m256d s = _mm256_set1_pd(slope);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d zero = _mm256_setzero_pd();
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(z + i);
        const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
        const __m256d f = _mm256_blendv_pd(s, one, mask);
        _mm256_storeu_pd(dz + i, _mm256_mul_pd(_mm256_loadu_pd(da + i), f));
    }
    for (; i < n; ++i) dz[i] = da[i] * (z[i] > 0.0 ? 1.0 : slope);
}

double min_dist_sq_avx2(const double* xs, const double* ys, const double* zs, int n,
                        double qx, double qy, double qz) {
    const __m256d vqx = _mm256_set1_pd(qx);
    const __m256d vqy = _mm256_set1_pd(qy);
    const __m256d vqz = _mm256_set1_pd(qz);
    __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vqx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vqy);
        const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vqz);
        const __m256d d2 = _mm256_add_pd(
            _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)), _mm256_mul_pd(dz, dz));
        best = _mm256_min_pd(best, d2);
    }
    double out = hmin(best);
    for (; i < n; ++i) {
        const double dx = xs[i] - qx;
        const double dy = ys[i] - qy;
        const double dz = zs[i] - qz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < out) out = d2;
    }
    return out;
}

void axpy_avx2(double a, const double* x, double* y, int n) {
    const __m256d va = _mm256_set1_pd(a);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops ops = {
        "avx2",
        layer_forward_avx2,
        layer_backward_data_avx2,
        layer_backward_param_avx2,
        leaky_relu_avx2,
        leaky_relu_grad_avx2,
        min_dist_sq_avx2,
        axpy_avx2,
    };
    return ops;
}

}  // namespace gradsdf::kernels

#endif  // x86_64
