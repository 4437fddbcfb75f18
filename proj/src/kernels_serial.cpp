#include "iscp/kernels_serial.hpp"

#include <algorithm>
#include <cmath>

namespace iscp::serial {

void conv2d_forward(const double* x, int ci, int h, int w,
                    const double* wt, int co, int k,
                    const double* bias, double* y) {
    const int p = k / 2;
    for (int oc = 0; oc < co; ++oc)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double acc = bias[oc];
                for (int ic = 0; ic < ci; ++ic)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = yy + ky - p;
                            const int ix = xx + kx - p;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += wt[((oc * ci + ic) * k + ky) * k + kx] *
                                   x[(ic * h + iy) * w + ix];
                        }
                y[(oc * h + yy) * w + xx] = acc;
            }
}

void conv2d_backward_input(const double* wt, int co, int ci, int k,
                           const double* gy, int h, int w, double* gx) {
    const int p = k / 2;
    for (int ic = 0; ic < ci; ++ic)
        for (int oc = 0; oc < co; ++oc)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wt[((oc * ci + ic) * k + ky) * k + kx];
                    for (int yy = 0; yy < h; ++yy)
                        for (int xx = 0; xx < w; ++xx) {
                            const int iy = yy + ky - p;
                            const int ix = xx + kx - p;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            gx[(ic * h + iy) * w + ix] += wv * gy[(oc * h + yy) * w + xx];
                        }
                }
}

void conv2d_backward_params(const double* x, int ci, int h, int w,
                            const double* gy, int co, int k,
                            double* gw, double* gb) {
    const int p = k / 2;
    for (int oc = 0; oc < co; ++oc) {
        double bsum = 0.0;
        for (int i = 0; i < h * w; ++i) bsum += gy[oc * h * w + i];
        gb[oc] += bsum;
        for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int yy = 0; yy < h; ++yy)
                        for (int xx = 0; xx < w; ++xx) {
                            const int iy = yy + ky - p;
                            const int ix = xx + kx - p;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += gy[(oc * h + yy) * w + xx] * x[(ic * h + iy) * w + ix];
                        }
                    gw[((oc * ci + ic) * k + ky) * k + kx] += acc;
                }
    }
}

void dense_forward(const double* x, int n, const double* wt, int m,
                   const double* b, double* y) {
    for (int o = 0; o < m; ++o) {
        double acc = b[o];
        for (int i = 0; i < n; ++i) acc += wt[o * n + i] * x[i];
        y[o] = acc;
    }
}

void dense_backward(const double* x, int n, const double* wt, int m,
                    const double* gy, double* gx, double* gw, double* gb) {
    for (int o = 0; o < m; ++o) {
        if (gb) gb[o] += gy[o];
        if (gw)
            for (int i = 0; i < n; ++i) gw[o * n + i] += gy[o] * x[i];
    }
    if (gx)
        for (int o = 0; o < m; ++o)
            for (int i = 0; i < n; ++i) gx[i] += gy[o] * wt[o * n + i];
}

void relu_forward(const double* x, int n, double* y) {
    for (int i = 0; i < n; ++i) y[i] = std::max(0.0, x[i]);
}

void relu_backward(const double* x, const double* gy, int n, double* gx) {
    for (int i = 0; i < n; ++i) gx[i] += x[i] > 0.0 ? gy[i] : 0.0;
}

void maxpool2_forward(const double* x, int c, int h, int w,
                      double* y, int* argmax) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int best = -1;
                double bv = 0.0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if (best < 0 || x[idx] > bv) {
                            bv = x[idx];
                            best = idx;
                        }
                    }
                y[(ch * oh + oy) * ow + ox] = bv;
                argmax[(ch * oh + oy) * ow + ox] = best;
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
    for (int i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);
    for (int i = 0; i < k; ++i) probs[i] = std::exp(logits[i] - mx) / sum;
    return std::log(sum) - (logits[label] - mx);
}

void softmax_xent_backward(const double* probs, int k, int label, double g,
                           double* gl) {
    for (int i = 0; i < k; ++i) gl[i] += g * probs[i];
    gl[label] -= g;
}

} // namespace iscp::serial
