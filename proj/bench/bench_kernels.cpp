// Serial reference versus OpenMP kernels: kernel solve, Volterra solves and dataset generation.
// Usage: bench_kernels [n] [repeats] [dataset_samples]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "bkst/data_store.hpp"
#include "bkst/kernel_solver.hpp"

namespace {

template <class Fn>
double median_seconds(std::size_t repeats, Fn&& fn) {
    std::vector<double> t;
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

void report(const char* what, double serial, double parallel) {
    std::printf("%-22s serial %10.4f s   openmp %10.4f s   speedup %5.2fx\n", what, serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 400;
    const std::size_t repeats = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 5;
    const std::size_t samples = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 64;
    if (n < 3 || repeats < 1 || samples < 1) {
        std::fprintf(stderr, "usage: bench_kernels [n>=3] [repeats>=1] [samples>=1]\n");
        return 2;
    }
    std::printf("threads %d, n %zu, repeats %zu\n", omp_get_max_threads(), n, repeats);

    const bkst::CoefficientSet c = bkst::gamma_family(3.0);
    const bkst::TriangularGrid g(n);
    bkst::KernelSet ks;
    const double s_solve = median_seconds(repeats, [&] { ks = bkst::solve_kernels_serial(c, g); });
    const double p_solve = median_seconds(repeats, [&] { ks = bkst::solve_kernels(c, g); });
    report("solve_kernels", s_solve, p_solve);

    // The Volterra solves switch to OpenMP internally for large n; time them once each way via thread count.
    auto volterra = [&] { return bkst::solve_inverse_kernels(bkst::solve_kappa_c(c, ks)); };
    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const double s_volt = median_seconds(repeats, volterra);
    omp_set_num_threads(threads);
    const double p_volt = median_seconds(repeats, volterra);
    report("kappa/c + inverse", s_volt, p_volt);

    const auto fam = bkst::CoefficientFamily::gamma(0.5, 5.0);
    bkst::Dataset a, b;
    const double s_data = median_seconds(1, [&] { a = bkst::generate(fam, samples, 101, 50, 7, false); });
    const double p_data = median_seconds(1, [&] { b = bkst::generate(fam, samples, 101, 50, 7, true); });
    report("dataset generation", s_data, p_data);
    if (!(a == b)) {
        std::fprintf(stderr, "parallel dataset differs from serial dataset\n");
        return 1;
    }
    return 0;
}
