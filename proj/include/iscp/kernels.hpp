#pragma once

// Dense layer kernels used by the autodiff graph. All convolutions are
// stride 1 with zero "same" padding and an odd kernel size. Backward
// kernels accumulate (+=) into their gradient outputs so a graph node with
// several consumers sums naturally.
//
// iscp::kernels     — OpenMP-parallel versions (the production path).
// iscp::serial      — straight-line reference versions, kept for tests and
//                     the kernel benchmark (see kernels_serial.hpp).
//
// Parallel loops are over independent output elements with static
// scheduling, so results are bit-identical across runs and thread counts.
// Agreement with the serial reference is to rounding (the compiler may
// contract multiply-adds differently in the two loop structures).

namespace iscp::kernels {

void conv2d_forward(const double* x, int ci, int h, int w,
                    const double* wt, int co, int k,
                    const double* bias, double* y);
void conv2d_backward_input(const double* wt, int co, int ci, int k,
                           const double* gy, int h, int w, double* gx);
void conv2d_backward_params(const double* x, int ci, int h, int w,
                            const double* gy, int co, int k,
                            double* gw, double* gb);

void dense_forward(const double* x, int n, const double* wt, int m,
                   const double* b, double* y);
void dense_backward(const double* x, int n, const double* wt, int m,
                    const double* gy, double* gx, double* gw, double* gb);

void relu_forward(const double* x, int n, double* y);
void relu_backward(const double* x, const double* gy, int n, double* gx);

// 2x2 max pooling, stride 2; h and w must be even. argmax records the flat
// input index of the winning element (first in scan order on ties).
void maxpool2_forward(const double* x, int c, int h, int w,
                      double* y, int* argmax);
void maxpool2_backward(const double* gy, int c, int h, int w,
                       const int* argmax, double* gx);

// Returns -log softmax(logits)[label]; fills probs[k].
double softmax_xent_forward(const double* logits, int k, int label,
                            double* probs);
void softmax_xent_backward(const double* probs, int k, int label, double g,
                           double* gl);

} // namespace iscp::kernels
