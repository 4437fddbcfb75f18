#pragma once

// Serial reference implementations of the kernels in kernels.hpp. Plain
// quadruple loops straight from the definitions, no blocking or pragmas.
// The unit tests check the parallel kernels against these, and
// bench_kernels compares their throughput.

namespace iscp::serial {

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

void maxpool2_forward(const double* x, int c, int h, int w,
                      double* y, int* argmax);
void maxpool2_backward(const double* gy, int c, int h, int w,
                       const int* argmax, double* gx);

double softmax_xent_forward(const double* logits, int k, int label,
                            double* probs);
void softmax_xent_backward(const double* probs, int k, int label, double g,
                           double* gl);

} // namespace iscp::serial
