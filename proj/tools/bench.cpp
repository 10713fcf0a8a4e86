// Compares the OpenMP kernels against the serial reference implementations
// on representative shapes and reports throughput.

#include <chrono>
#include <cmath>
#include <cstdio>

#include <omp.h>

#include "hebbseed/hebbian.hpp"
#include "hebbseed/layers.hpp"
#include "hebbseed/oracle.hpp"
#include "hebbseed/tensor.hpp"

using namespace hebbseed;
using Clock = std::chrono::steady_clock;

namespace {

double g_bench_sink = 0.0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        f();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

void bench_matmul(std::size_t m, std::size_t k, std::size_t n) {
    Rng rng(1);
    Tensor a = uniform_tensor(rng, {m, k}, -1.0, 1.0);
    Tensor b = uniform_tensor(rng, {k, n}, -1.0, 1.0);
    oracle::Mat am(m, k), bm(k, n);
    for (std::size_t i = 0; i < a.size(); ++i) am.v[i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) bm.v[i] = b[i];

    double sink = 0.0;
    double t_par = time_best_of(3, [&] {
        Tensor c = matmul(a, b);
        sink += c[0]; g_bench_sink += sink;
    });
    double t_ser = time_best_of(3, [&] {
        oracle::Mat c = oracle::naive_matmul(am, bm);
        sink += c.v[0]; g_bench_sink += sink;
    });
    Tensor c = matmul(a, b);
    oracle::Mat cr = oracle::naive_matmul(am, bm);
    double max_err = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
        max_err = std::max(max_err, std::abs(c[i] - cr.v[i]));
    const double gflop = 2.0 * m * k * n / 1e9;
    std::printf("matmul %4zux%-4zux%-4zu  omp %7.4fs (%5.2f GF/s)  serial %7.4fs (%5.2f GF/s)  "
                "speedup %4.2fx  max|diff| %.2e\n",
                m, k, n, t_par, gflop / t_par, t_ser, gflop / t_ser, t_ser / t_par, max_err);
}

void bench_hebbian(std::size_t batch, std::size_t neurons, std::size_t dim) {
    Rng rng(2);
    Rng wrng = rng.derive("w");
    HebbianLayerState state(neurons, dim, wrng, 1e-3);
    Tensor x = uniform_tensor(rng, {batch, dim}, -1.0, 1.0);

    double sink = 0.0;
    double t_par = time_best_of(3, [&] {
        Tensor d = hpca_update(state, x, RuleKind::NonlinearHPCA);
        sink += d[0]; g_bench_sink += sink;
    });
    oracle::Mat w(neurons, dim);
    for (std::size_t i = 0; i < w.v.size(); ++i) w.v[i] = state.weights[i];
    double t_ser = time_best_of(3, [&] {
        std::vector<double> acc(neurons * dim, 0.0);
        std::vector<double> row(dim);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < dim; ++k) row[k] = x[b * dim + k];
            oracle::Mat d = oracle::sanger_reference_delta(w, row, 1e-3, true);
            for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += d.v[e];
        }
        sink += acc[0]; g_bench_sink += sink;
    });
    std::printf("hpca   B=%-4zu N=%-4zu D=%-5zu omp %7.4fs  serial %7.4fs  speedup %4.2fx\n",
                batch, neurons, dim, t_par, t_ser, t_ser / t_par);
}

void bench_conv(std::size_t B, std::size_t C, std::size_t H, std::size_t W, std::size_t O,
                int k) {
    Rng rng(3);
    Tensor input = uniform_tensor(rng, {B, C, H, W}, -1.0, 1.0);
    Tensor weight = uniform_tensor(rng, {O, C * k * k}, -0.5, 0.5);
    Tensor bias = uniform_tensor(rng, {O}, -0.1, 0.1);

    std::vector<double> in_flat(input.data(), input.data() + input.size());
    std::vector<double> w_flat(weight.data(), weight.data() + weight.size());
    std::vector<double> b_flat(bias.data(), bias.data() + bias.size());

    double sink = 0.0;
    ConvGeom g{k, k, 1, 1, k / 2, k / 2};
    Tensor no_mean;
    double t_par = time_best_of(3, [&] {
        Tensor out = conv_forward(input, weight, bias, no_mean, g);
        sink += out[0]; g_bench_sink += sink;
    });
    std::size_t oh, ow;
    double t_ser = time_best_of(3, [&] {
        auto out = oracle::naive_conv2d(in_flat, B, C, H, W, w_flat, b_flat, O, k, k, 1, 1, k / 2,
                                        k / 2, oh, ow);
        sink += out[0]; g_bench_sink += sink;
    });
    Tensor out = conv_forward(input, weight, bias, no_mean, g);
    auto ref = oracle::naive_conv2d(in_flat, B, C, H, W, w_flat, b_flat, O, k, k, 1, 1, k / 2,
                                    k / 2, oh, ow);
    double max_err = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        max_err = std::max(max_err, std::abs(out[i] - ref[i]));
    std::printf("conv   B=%zu %zux%zux%zu O=%-3zu k=%d  omp %7.4fs  serial %7.4fs  speedup %4.2fx"
                "  max|diff| %.2e\n",
                B, C, H, W, O, k, t_par, t_ser, t_ser / t_par, max_err);
}

} // namespace

int main() {
    std::printf("threads: %d\n\n", omp_get_max_threads());
    bench_matmul(256, 256, 256);
    bench_matmul(1024, 512, 256);
    bench_conv(8, 3, 32, 32, 48, 5);
    bench_conv(8, 48, 16, 16, 64, 3);
    bench_hebbian(256, 64, 432);
    bench_hebbian(1024, 48, 75);
    std::printf("\n(checksum %g)\n", g_bench_sink);
    return 0;
}
