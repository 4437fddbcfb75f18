// Throughput comparison of the OpenMP kernels against the serial reference
// over the layer shapes this project actually runs (28×28 and 32×32 conv
// stacks). Usage: bench_kernels [repeats]

#include "iscp/kernels.hpp"
#include "iscp/kernels_serial.hpp"
#include "iscp/rng.hpp"
#include "iscp/tensor.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

namespace {

using iscp::Rng;
using iscp::Tensor;

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

double time_ms(const std::function<void()>& fn, int repeats) {
    fn(); // warm-up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

struct ConvCase {
    const char* name;
    int ci, h, w, co, k;
};

} // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 50;
    std::printf("threads: %d, repeats: %d\n\n", omp_get_max_threads(), repeats);
    std::printf("%-28s %12s %12s %9s %9s\n", "kernel", "serial(ms)", "openmp(ms)", "speedup",
                "GFLOP/s");

    Rng rng(42);
    const ConvCase cases[] = {
        {"conv 1->32  28x28 k3", 1, 28, 28, 32, 3},
        {"conv 32->32 28x28 k3", 32, 28, 28, 32, 3},
        {"conv 32->64 14x14 k3", 32, 14, 14, 64, 3},
        {"conv 3->32  32x32 k3", 3, 32, 32, 32, 3},
        {"conv 32->32 32x32 k3", 32, 32, 32, 32, 3},
        {"conv 64->64 16x16 k3", 64, 16, 16, 64, 3},
    };
    for (const ConvCase& c : cases) {
        const Tensor x = random_tensor({c.ci, c.h, c.w}, rng);
        const Tensor wt = random_tensor({c.co, c.ci, c.k, c.k}, rng);
        const Tensor b = random_tensor({c.co}, rng);
        Tensor y = Tensor::zeros({c.co, c.h, c.w});
        const double ms_serial = time_ms(
            [&] {
                iscp::serial::conv2d_forward(x.ptr(), c.ci, c.h, c.w, wt.ptr(), c.co, c.k,
                                             b.ptr(), y.ptr());
            },
            repeats);
        const double ms_par = time_ms(
            [&] {
                iscp::kernels::conv2d_forward(x.ptr(), c.ci, c.h, c.w, wt.ptr(), c.co, c.k,
                                              b.ptr(), y.ptr());
            },
            repeats);
        const double flops = 2.0 * c.co * c.ci * c.h * c.w * c.k * c.k;
        std::printf("%-28s %12.3f %12.3f %8.2fx %9.2f\n", c.name, ms_serial, ms_par,
                    ms_serial / ms_par, flops / (ms_par * 1e6));

        // backward passes at the same shapes
        Tensor gy = random_tensor({c.co, c.h, c.w}, rng);
        Tensor gx = Tensor::zeros({c.ci, c.h, c.w});
        Tensor gw = Tensor::zeros(wt.shape);
        Tensor gb = Tensor::zeros(b.shape);
        const double bw_serial = time_ms(
            [&] {
                iscp::serial::conv2d_backward_input(wt.ptr(), c.co, c.ci, c.k, gy.ptr(), c.h,
                                                    c.w, gx.ptr());
                iscp::serial::conv2d_backward_params(x.ptr(), c.ci, c.h, c.w, gy.ptr(), c.co,
                                                     c.k, gw.ptr(), gb.ptr());
            },
            repeats);
        const double bw_par = time_ms(
            [&] {
                iscp::kernels::conv2d_backward_input(wt.ptr(), c.co, c.ci, c.k, gy.ptr(), c.h,
                                                     c.w, gx.ptr());
                iscp::kernels::conv2d_backward_params(x.ptr(), c.ci, c.h, c.w, gy.ptr(), c.co,
                                                      c.k, gw.ptr(), gb.ptr());
            },
            repeats);
        std::printf("%-28s %12.3f %12.3f %8.2fx %9.2f\n", "  backward", bw_serial, bw_par,
                    bw_serial / bw_par, 2.0 * flops / (bw_par * 1e6));
    }

    {
        const int n = 3136, mdim = 256;
        const Tensor x = random_tensor({n}, rng);
        const Tensor wt = random_tensor({mdim, n}, rng);
        const Tensor b = random_tensor({mdim}, rng);
        Tensor y = Tensor::zeros({mdim});
        const double ms_serial = time_ms(
            [&] { iscp::serial::dense_forward(x.ptr(), n, wt.ptr(), mdim, b.ptr(), y.ptr()); },
            repeats);
        const double ms_par = time_ms(
            [&] { iscp::kernels::dense_forward(x.ptr(), n, wt.ptr(), mdim, b.ptr(), y.ptr()); },
            repeats);
        std::printf("%-28s %12.3f %12.3f %8.2fx %9.2f\n", "dense 3136->256", ms_serial, ms_par,
                    ms_serial / ms_par, 2.0 * n * mdim / (ms_par * 1e6));
    }
    return 0;
}
