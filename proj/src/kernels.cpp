#include "iscp/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace iscp::kernels {

namespace {

// Multi-lane dot product; the independent accumulators let the compiler
// vectorize the reduction without reassociating a single FP chain.
inline double dot_lanes(const double* __restrict a, const double* __restrict b, int n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) +
           tail;
}

inline void axpy(double* __restrict y, const double* __restrict x, double a, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

} // namespace

void conv2d_forward(const double* x, int ci, int h, int w,
                    const double* wt, int co, int k,
                    const double* bias, double* y) {
    const int p = k / 2;
    const int plane = h * w;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
        double* yplane = y + static_cast<long>(oc) * plane;
        std::fill(yplane, yplane + plane, bias[oc]);
        for (int ic = 0; ic < ci; ++ic) {
            const double* xplane = x + static_cast<long>(ic) * plane;
            const double* wk = wt + ((static_cast<long>(oc) * ci + ic) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, p - ky);
                const int y1 = std::min(h, h + p - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int x0 = std::max(0, p - kx);
                    const int x1 = std::min(w, w + p - kx);
                    const int dx = kx - p;
                    for (int yy = y0; yy < y1; ++yy)
                        axpy(yplane + yy * w + x0, xplane + (yy + ky - p) * w + dx + x0, wv,
                             x1 - x0);
                }
            }
        }
    }
}

void conv2d_backward_input(const double* wt, int co, int ci, int k,
                           const double* gy, int h, int w, double* gx) {
    const int p = k / 2;
    const int plane = h * w;
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < ci; ++ic) {
        double* gxplane = gx + static_cast<long>(ic) * plane;
        for (int oc = 0; oc < co; ++oc) {
            const double* gyplane = gy + static_cast<long>(oc) * plane;
            const double* wk = wt + ((static_cast<long>(oc) * ci + ic) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, p - ky);
                const int y1 = std::min(h, h + p - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int x0 = std::max(0, p - kx);
                    const int x1 = std::min(w, w + p - kx);
                    const int dx = kx - p;
                    for (int yy = y0; yy < y1; ++yy)
                        axpy(gxplane + (yy + ky - p) * w + dx + x0, gyplane + yy * w + x0, wv,
                             x1 - x0);
                }
            }
        }
    }
}

void conv2d_backward_params(const double* x, int ci, int h, int w,
                            const double* gy, int co, int k,
                            double* gw, double* gb) {
    const int p = k / 2;
    const int plane = h * w;
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < co; ++oc) {
        const double* gyplane = gy + static_cast<long>(oc) * plane;
        double bsum = 0.0;
        for (int i = 0; i < plane; ++i) bsum += gyplane[i];
        gb[oc] += bsum;
        for (int ic = 0; ic < ci; ++ic) {
            const double* xplane = x + static_cast<long>(ic) * plane;
            double* gwk = gw + ((static_cast<long>(oc) * ci + ic) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, p - ky);
                const int y1 = std::min(h, h + p - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const int x0 = std::max(0, p - kx);
                    const int x1 = std::min(w, w + p - kx);
                    const int dx = kx - p;
                    double acc = 0.0;
                    for (int yy = y0; yy < y1; ++yy)
                        acc += dot_lanes(gyplane + yy * w + x0,
                                         xplane + (yy + ky - p) * w + dx + x0, x1 - x0);
                    gwk[ky * k + kx] += acc;
                }
            }
        }
    }
}

void dense_forward(const double* x, int n, const double* wt, int m,
                   const double* b, double* y) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < m; ++o)
        y[o] = b[o] + dot_lanes(wt + static_cast<long>(o) * n, x, n);
}

void dense_backward(const double* x, int n, const double* wt, int m,
                    const double* gy, double* gx, double* gw, double* gb) {
    if (gw || gb) {
#pragma omp parallel for schedule(static)
        for (int o = 0; o < m; ++o) {
            const double g = gy[o];
            if (gb) gb[o] += g;
            if (gw) axpy(gw + static_cast<long>(o) * n, x, g, n);
        }
    }
    if (gx) {
        for (int o = 0; o < m; ++o) axpy(gx, wt + static_cast<long>(o) * n, gy[o], n);
    }
}

void relu_forward(const double* x, int n, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* gy, int n, double* gx) {
    for (int i = 0; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
}

void maxpool2_forward(const double* x, int c, int h, int w,
                      double* y, int* argmax) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* xplane = x + static_cast<long>(ch) * h * w;
        double* yplane = y + static_cast<long>(ch) * oh * ow;
        int* aplane = argmax + static_cast<long>(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int base = (2 * oy) * w + 2 * ox;
                int best = base;
                double bv = xplane[base];
                const int cand[3] = {base + 1, base + w, base + w + 1};
                for (int idx : cand) {
                    if (xplane[idx] > bv) {
                        bv = xplane[idx];
                        best = idx;
                    }
                }
                yplane[oy * ow + ox] = bv;
                aplane[oy * ow + ox] = ch * h * w + best;
            }
        }
    }
}

void maxpool2_backward(const double* gy, int c, int h, int w,
                       const int* argmax, double* gx) {
    const int n = c * (h / 2) * (w / 2);
    for (int i = 0; i < n; ++i) gx[argmax[i]] += gy[i];
}

double softmax_xent_forward(const double* logits, int k, int label,
                            double* probs) {
    double mx = logits[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < k; ++i) probs[i] /= sum;
    return -(logits[label] - mx - std::log(sum));
}

void softmax_xent_backward(const double* probs, int k, int label, double g,
                           double* gl) {
    for (int i = 0; i < k; ++i) gl[i] += g * (probs[i] - (i == label ? 1.0 : 0.0));
}

} // namespace iscp::kernels
