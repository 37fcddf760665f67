#include "bkst/kernel_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bkst {

namespace {

// Rows shorter than this are not worth a parallel region.
constexpr std::size_t kParallelMinRow = 256;

// Linear interpolation of samples with spacing h starting at 0; tail clamps to the last cell.
inline double lerp_samples(const double* v, std::size_t count, double h, double s) {
    if (count == 1) return v[0];
    double r = s / h;
    if (r <= 0.0) return v[0];
    auto c = static_cast<std::size_t>(r);
    if (c >= count - 1) c = count - 2;
    const double t = std::min(1.0, r - static_cast<double>(c));
    return (1.0 - t) * v[c] + t * v[c + 1];
}

// Coefficients resampled onto the kernel grid nodes.
struct NodeCoefficients {
    std::vector<double> lambda, mu, dlambda, dmu, sigma, omega, theta;
    double q;
    double h;
    std::size_t n;

    NodeCoefficients(const CoefficientSet& c, std::size_t cells)
        : lambda(resample(c.lambda, cells)),
          mu(resample(c.mu, cells)),
          dlambda(resample(c.dlambda, cells)),
          dmu(resample(c.dmu, cells)),
          sigma(resample(c.sigma, cells)),
          omega(resample(c.omega, cells)),
          theta(resample(c.theta, cells)),
          q(c.q),
          h(1.0 / static_cast<double>(cells)),
          n(cells) {}

    double at(const std::vector<double>& a, double s) const { return lerp_samples(a.data(), n + 1, h, s); }

    double diagonal_bc(double s) const { return -at(theta, s) / (at(lambda, s) + at(mu, s)); }
};

// One marching level. `prev` rows hold level i-1 and `cur` rows level i.
struct Level {
    const NodeCoefficients& co;
    std::size_t i;
    double xi_prev, xi_cur;
    const double* k1p;
    const double* k2p;
    double* k1c;
    double* k2c;

    double node(std::size_t j) const { return j == co.n ? 1.0 : static_cast<double>(j) * co.h; }

    // k2 along d xi/dx = mu(xi)/mu(x), for j >= 1. Returns false if the foot left through xi = 0.
    bool k2_interior(std::size_t j) const {
        const double b = co.mu[j] / co.mu[i];
        const double foot = node(j) - co.h * b;
        if (foot < 0.0) return false;
        const double k2f = lerp_samples(k2p, i, co.h, foot);
        const double k1f = lerp_samples(k1p, i, co.h, foot);
        const double src = -co.at(co.dmu, foot) * k2f + co.at(co.omega, foot) * k1f;
        k2c[j] = k2f + co.h * src / co.mu[i - 1];
        return true;
    }

    // k2 node whose characteristic crossed the bottom edge inside (x_{i-1}, x_i).
    void k2_bottom_crossing(std::size_t j) const {
        const double b = co.mu[j] / co.mu[i];
        const double dx = node(j) / b;
        const double xc = xi_cur - dx;
        const double w = std::clamp((xc - xi_prev) / co.h, 0.0, 1.0);
        const double k2b = (1.0 - w) * k2p[0] + w * k2c[0];
        const double k1b = (1.0 - w) * k1p[0] + w * k1c[0];
        const double src = -co.dmu[0] * k2b + co.omega[0] * k1b;
        k2c[j] = k2b + dx * src / co.at(co.mu, xc);
    }

    // k1 along d xi/dx = -lambda(xi)/mu(x), for j < i; needs k2c[i] when the foot crosses the diagonal.
    void k1_node(std::size_t j) const {
        const double a = co.lambda[j] / co.mu[i];
        const double xj = node(j);
        const double foot = xj + co.h * a;
        if (foot <= xi_prev) {
            const double k1f = lerp_samples(k1p, i, co.h, foot);
            const double k2f = lerp_samples(k2p, i, co.h, foot);
            const double src = (co.at(co.dlambda, foot) + co.at(co.sigma, foot)) * k1f + co.at(co.theta, foot) * k2f;
            k1c[j] = k1f + co.h * src / co.mu[i - 1];
            return;
        }
        const double xc = std::clamp((xj + xi_cur * a) / (1.0 + a), xi_prev, xi_cur);
        const double dx = xi_cur - xc;
        const double w = (xc - xi_prev) / co.h;
        const double k1d = co.diagonal_bc(xc);
        const double k2d = (1.0 - w) * k2p[i - 1] + w * k2c[i];
        const double src = (co.at(co.dlambda, xc) + co.at(co.sigma, xc)) * k1d + co.at(co.theta, xc) * k2d;
        k1c[j] = k1d + dx * src / co.at(co.mu, xc);
    }
};

void check_speeds(const NodeCoefficients& co) {
    for (std::size_t j = 0; j <= co.n; ++j)
        if (co.lambda[j] + co.mu[j] == 0.0)
            throw NumericalError("solve_kernels: lambda + mu vanishes at node " + std::to_string(j));
}

void check_row(const KernelField& f, std::size_t i, const char* name) {
    for (double v : f.row(i))
        if (!std::isfinite(v))
            throw NumericalError(std::string("solve_kernels: non-finite ") + name + " at level " + std::to_string(i));
}

KernelSet march(const CoefficientSet& coeffs, const TriangularGrid& grid, bool parallel) {
    coeffs.validate();
    const std::size_t n = grid.n();
    const NodeCoefficients co(coeffs, n);
    check_speeds(co);

    KernelSet ks{KernelField(grid), KernelField(grid), {}, {}, {}, {}};
    ks.k1(0, 0) = co.diagonal_bc(0.0);
    ks.k2(0, 0) = co.q * co.lambda[0] * ks.k1(0, 0) / co.mu[0];

    for (std::size_t i = 1; i <= n; ++i) {
        const Level lv{co,
                       i,
                       grid.x(i - 1),
                       grid.x(i),
                       ks.k1.row(i - 1).data(),
                       ks.k2.row(i - 1).data(),
                       ks.k1.row(i).data(),
                       ks.k2.row(i).data()};
        const auto count = static_cast<std::ptrdiff_t>(i);
        const bool par = parallel && i >= kParallelMinRow;
        std::vector<char> crossed(i + 1, 0);

        // k2 away from the bottom edge: depends on level i-1 only.
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t j = 1; j <= count; ++j)
            crossed[j] = lv.k2_interior(static_cast<std::size_t>(j)) ? 0 : 1;

        lv.k1c[i] = co.diagonal_bc(grid.x(i));
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t j = 0; j < count; ++j) lv.k1_node(static_cast<std::size_t>(j));

        lv.k2c[0] = co.q * co.lambda[0] * lv.k1c[0] / co.mu[0];
#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t j = 1; j <= count; ++j)
            if (crossed[j]) lv.k2_bottom_crossing(static_cast<std::size_t>(j));

        check_row(ks.k1, i, "k1");
        check_row(ks.k2, i, "k2");
    }
    return ks;
}

}  // namespace

GainVector::GainVector(const IntervalGrid& g, std::vector<double> a, std::vector<double> b)
    : grid(g), g1(std::move(a)), g2(std::move(b)) {
    if (g1.size() != grid.size() || g2.size() != grid.size())
        throw InvalidArgument("GainVector: arrays must match the grid size");
}

GainVector GainVector::resampled(const IntervalGrid& target) const {
    if (target == grid) return *this;
    return GainVector(target, resample(g1, target.cells()), resample(g2, target.cells()));
}

GainVector GainVector::zeros(const IntervalGrid& g) {
    return GainVector(g, std::vector<double>(g.size(), 0.0), std::vector<double>(g.size(), 0.0));
}

KernelSet solve_kernels(const CoefficientSet& coeffs, const TriangularGrid& grid) { return march(coeffs, grid, true); }

KernelSet solve_kernels_serial(const CoefficientSet& coeffs, const TriangularGrid& grid) {
    return march(coeffs, grid, false);
}

KernelSet solve_kappa_c(const CoefficientSet& coeffs, KernelSet ks, CForm form) {
    const TriangularGrid& grid = ks.grid();
    if (!(ks.k2.grid == grid)) throw InvalidArgument("solve_kappa_c: k1 and k2 live on different grids");
    const std::size_t n = grid.n();
    const double h = grid.h();
    const std::vector<double> omega = resample(coeffs.omega, n);
    KernelField kappa(grid), c(grid);
    const KernelField& k1 = ks.k1;
    const KernelField& k2 = ks.k2;
    bool singular = false;

#pragma omp parallel for schedule(dynamic, 8) if (n >= kParallelMinRow)
    for (std::ptrdiff_t ii = 0; ii <= static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        // kappa(x_i, .) by back-substitution from the diagonal.
        kappa(i, i) = omega[i] * k2(i, i);
        for (std::size_t j = i; j-- > 0;) {
            const double pivot = 1.0 - 0.5 * h * k2(j, j);
            if (std::abs(pivot) < kPivotTolerance) {
                singular = true;
                break;
            }
            double rhs = omega[i] * k2(i, j) + 0.5 * h * kappa(i, i) * k2(i, j);
            for (std::size_t s = j + 1; s < i; ++s) rhs += h * kappa(i, s) * k2(s, j);
            kappa(i, j) = rhs / pivot;
        }
        if (form == CForm::KappaIntegrand) {
            for (std::size_t j = 0; j <= i; ++j) {
                double integral = 0.0;
                if (j < i) {
                    integral = 0.5 * h * (kappa(i, j) * k1(j, j) + kappa(i, i) * k1(i, j));
                    for (std::size_t s = j + 1; s < i; ++s) integral += h * kappa(i, s) * k1(s, j);
                }
                c(i, j) = omega[i] * k1(i, j) + integral;
            }
        } else {
            c(i, i) = omega[i] * k1(i, i);
            for (std::size_t j = i; j-- > 0;) {
                const double pivot = 1.0 - 0.5 * h * k1(j, j);
                if (std::abs(pivot) < kPivotTolerance) {
                    singular = true;
                    break;
                }
                double rhs = omega[i] * k1(i, j) + 0.5 * h * c(i, i) * k1(i, j);
                for (std::size_t s = j + 1; s < i; ++s) rhs += h * c(i, s) * k1(s, j);
                c(i, j) = rhs / pivot;
            }
        }
    }
    if (singular) throw NumericalError("solve_kappa_c: pivot below 1e-12 in triangular solve");
    if (!kappa.all_finite() || !c.all_finite()) throw NumericalError("solve_kappa_c: non-finite result");
    ks.kappa = std::move(kappa);
    ks.c = std::move(c);
    return ks;
}

KernelSet solve_inverse_kernels(KernelSet ks) {
    const TriangularGrid& grid = ks.grid();
    const std::size_t n = grid.n();
    const double h = grid.h();
    const KernelField& k1 = ks.k1;
    const KernelField& k2 = ks.k2;

    for (std::size_t i = 1; i <= n; ++i)
        if (std::abs(1.0 - 0.5 * h * k2(i, i)) < kPivotTolerance)
            throw NumericalError("solve_inverse_kernels: pivot below 1e-12 at x index " + std::to_string(i));

    KernelField l1(grid), l2(grid);
#pragma omp parallel for schedule(dynamic, 8) if (n >= kParallelMinRow)
    for (std::ptrdiff_t jj = 0; jj <= static_cast<std::ptrdiff_t>(n); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        l1(j, j) = k1(j, j);
        l2(j, j) = k2(j, j);
        for (std::size_t i = j + 1; i <= n; ++i) {
            const double pivot = 1.0 - 0.5 * h * k2(i, i);
            double r1 = k1(i, j) + 0.5 * h * k2(i, j) * l1(j, j);
            double r2 = k2(i, j) + 0.5 * h * k2(i, j) * l2(j, j);
            for (std::size_t s = j + 1; s < i; ++s) {
                r1 += h * k2(i, s) * l1(s, j);
                r2 += h * k2(i, s) * l2(s, j);
            }
            l1(i, j) = r1 / pivot;
            l2(i, j) = r2 / pivot;
        }
    }
    if (!l1.all_finite() || !l2.all_finite()) throw NumericalError("solve_inverse_kernels: non-finite result");
    ks.l1 = std::move(l1);
    ks.l2 = std::move(l2);
    return ks;
}

GainVector gain_slice(const KernelSet& ks) {
    const std::size_t n = ks.grid().n();
    auto r1 = ks.k1.row(n);
    auto r2 = ks.k2.row(n);
    return GainVector(IntervalGrid(n), {r1.begin(), r1.end()}, {r2.begin(), r2.end()});
}

}  // namespace bkst
