#include "bkst/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace bkst {

namespace {

constexpr double kDomainTol = 1e-12;

// Splits r = x * cells into a cell index and a local coordinate in [0, 1].
// Values within 1e-9 of an integer snap onto that node so node queries are exact.
inline void locate(double r, std::size_t cells, std::size_t& cell, double& s) {
    const double nearest = std::round(r);
    if (std::abs(r - nearest) < 1e-9) r = nearest;
    if (r <= 0.0) {
        cell = 0;
        s = 0.0;
        return;
    }
    auto c = static_cast<std::size_t>(r);
    if (c >= cells) {
        cell = cells - 1;
        s = std::min(1.0, r - static_cast<double>(cell));
        return;
    }
    cell = c;
    s = r - static_cast<double>(c);
}

}  // namespace

IntervalGrid::IntervalGrid(std::size_t n) : n_(n), h_(0.0) {
    if (n < 2) throw InvalidArgument("IntervalGrid: need at least 2 cells, got " + std::to_string(n));
    h_ = 1.0 / static_cast<double>(n);
}

double IntervalGrid::x(std::size_t i) const {
    return i == n_ ? 1.0 : static_cast<double>(i) * h_;
}

std::vector<double> IntervalGrid::points() const {
    std::vector<double> p(size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = x(i);
    return p;
}

TriangularGrid::TriangularGrid(std::size_t n) : n_(n), h_(0.0) {
    if (n < 2) throw InvalidArgument("TriangularGrid: need n >= 2, got " + std::to_string(n));
    h_ = 1.0 / static_cast<double>(n);
}

KernelField::KernelField(const TriangularGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size())
        throw InvalidArgument("KernelField: expected " + std::to_string(grid.size()) + " values, got " +
                              std::to_string(values.size()));
}

double KernelField::sup_norm() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

bool KernelField::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double trapezoid_integral(std::span<const double> values, double h) {
    if (values.empty()) throw InvalidArgument("trapezoid_integral: empty segment");
    const std::size_t n = values.size();
    if (n == 1) return 0.0;
    double s = 0.5 * (values[0] + values[n - 1]);
    for (std::size_t k = 1; k + 1 < n; ++k) s += values[k];
    return s * h;
}

double trapezoid_dot(std::span<const double> a, std::span<const double> b, double h) {
    if (a.empty()) throw InvalidArgument("trapezoid_dot: empty segment");
    if (a.size() != b.size()) throw InvalidArgument("trapezoid_dot: length mismatch");
    const std::size_t n = a.size();
    if (n == 1) return 0.0;
    double s = 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]);
    for (std::size_t k = 1; k + 1 < n; ++k) s += a[k] * b[k];
    return s * h;
}

double interp_linear(std::span<const double> grid_values, double x) {
    if (grid_values.size() < 2) throw InvalidArgument("interp_linear: need at least 2 samples");
    if (!(x >= -kDomainTol && x <= 1.0 + kDomainTol))
        throw InvalidArgument("interp_linear: query " + std::to_string(x) + " outside [0, 1]");
    const std::size_t cells = grid_values.size() - 1;
    std::size_t c;
    double s;
    locate(std::clamp(x, 0.0, 1.0) * static_cast<double>(cells), cells, c, s);
    return (1.0 - s) * grid_values[c] + s * grid_values[c + 1];
}

std::vector<double> resample(std::span<const double> grid_values, std::size_t n_out) {
    if (grid_values.size() == n_out + 1) return {grid_values.begin(), grid_values.end()};
    IntervalGrid g(n_out);
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = interp_linear(grid_values, g.x(i));
    return out;
}

double tri_interp(const KernelField& field, double x, double xi) {
    const bool inside = x >= -kDomainTol && x <= 1.0 + kDomainTol && xi >= -kDomainTol && xi <= x + kDomainTol;
    if (!inside)
        throw InvalidArgument("tri_interp: point (" + std::to_string(x) + ", " + std::to_string(xi) +
                              ") outside the triangle");
    x = std::clamp(x, 0.0, 1.0);
    xi = std::clamp(xi, 0.0, x);

    const std::size_t n = field.grid.n();
    const double nd = static_cast<double>(n);
    std::size_t i, j;
    double s, t;
    locate(x * nd, n, i, s);
    locate(xi * nd, n, j, t);
    if (j > i) {  // rounding put xi one cell above x: it lies on the diagonal
        j = i;
        t = s;
    }

    if (j < i) {
        const double f00 = field(i, j), f10 = field(i + 1, j);
        const double f01 = field(i, j + 1), f11 = field(i + 1, j + 1);
        return (1.0 - s) * (1.0 - t) * f00 + s * (1.0 - t) * f10 + (1.0 - s) * t * f01 + s * t * f11;
    }
    // Diagonal cell, lower half: vertices (i,i), (i+1,i), (i+1,i+1).
    t = std::min(t, s);
    return (1.0 - s) * field(i, i) + (s - t) * field(i + 1, i) + t * field(i + 1, i + 1);
}

std::vector<double> triangle_weights(const TriangularGrid& grid) {
    const std::size_t n = grid.n();
    const double h = grid.h();
    std::vector<double> w(grid.size(), 0.0);
    for (std::size_t i = 1; i <= n; ++i) {
        const double wx = (i == n) ? 0.5 * h : h;
        for (std::size_t j = 0; j <= i; ++j) {
            const double wxi = (j == 0 || j == i) ? 0.5 * h : h;
            w[TriangularGrid::index(i, j)] = wx * wxi;
        }
    }
    return w;
}

}  // namespace bkst
