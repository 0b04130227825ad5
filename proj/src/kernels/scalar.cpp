#include <cstddef>
#include <limits>

#include "gradsdf/kernels.hpp"

namespace gradsdf::kernels {
namespace {

void layer_forward_scalar(const float* W, const float* bias, const double* x, double* y,
                          int rows, int cols, int batch) {
    for (int r = 0; r < rows; ++r) {
        double* yr = y + size_t(r) * batch;
        const double bv = bias ? double(bias[r]) : 0.0;
        for (int b = 0; b < batch; ++b) yr[b] = bv;
        const float* wr = W + size_t(r) * cols;
        for (int c = 0; c < cols; ++c) {
            const double w = double(wr[c]);
            const double* xc = x + size_t(c) * batch;
            for (int b = 0; b < batch; ++b) yr[b] += w * xc[b];
        }
    }
}

void layer_backward_data_scalar(const float* W, const double* dy, double* dx,
                                int rows, int cols, int batch) {
    for (int c = 0; c < cols; ++c) {
        double* dxc = dx + size_t(c) * batch;
        for (int b = 0; b < batch; ++b) dxc[b] = 0.0;
        for (int r = 0; r < rows; ++r) {
            const double w = double(W[size_t(r) * cols + c]);
            const double* dyr = dy + size_t(r) * batch;
            for (int b = 0; b < batch; ++b) dxc[b] += w * dyr[b];
        }
    }
}

void layer_backward_param_scalar(const double* dy, const double* x, double* dW, double* db,
                                 int rows, int cols, int batch) {
    for (int r = 0; r < rows; ++r) {
        const double* dyr = dy + size_t(r) * batch;
        double sum = 0.0;
        for (int b = 0; b < batch; ++b) sum += dyr[b];
        db[r] += sum;
        double* dwr = dW + size_t(r) * cols;
        for (int c = 0; c < cols; ++c) {
            const double* xc = x + size_t(c) * batch;
            double acc = 0.0;
            for (int b = 0; b < batch; ++b) acc += dyr[b] * xc[b];
            dwr[c] += acc;
        }
    }
}

void leaky_relu_scalar(const double* z, double* a, int n, double slope) {
    for (int i = 0; i < n; ++i) a[i] = z[i] > 0.0 ? z[i] : slope * z[i];
}

void leaky_relu_grad_scalar(const double* z, const double* da, double* dz, int n, double slope) {
    for (int i = 0; i < n; ++i) dz[i] = da[i] * (z[i] > 0.0 ? 1.0 : slope);
}

double min_dist_sq_scalar(const double* xs, const double* ys, const double* zs, int n,
                          double qx, double qy, double qz) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double dx = xs[i] - qx;
        const double dy = ys[i] - qy;
        const double dz = zs[i] - qz;
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best) best = d2;
    }
    return best;
}

void axpy_scalar(double a, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",
        layer_forward_scalar,
        layer_backward_data_scalar,
        layer_backward_param_scalar,
        leaky_relu_scalar,
        leaky_relu_grad_scalar,
        min_dist_sq_scalar,
        axpy_scalar,
    };
    return ops;
}

}  // namespace gradsdf::kernels
