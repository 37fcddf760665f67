#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bkst {

/// Raised when a precondition on user-supplied data is violated.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a finite answer.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * Uniform grid on [0, 1] with n cells and n + 1 nodes x_i = i h.
 */
class IntervalGrid {
public:
    explicit IntervalGrid(std::size_t n);

    std::size_t cells() const { return n_; }
    std::size_t size() const { return n_ + 1; }
    double h() const { return h_; }
    double x(std::size_t i) const;
    std::vector<double> points() const;

    bool operator==(const IntervalGrid& o) const { return n_ == o.n_; }

private:
    std::size_t n_;
    double h_;
};

/**
 * Nodes (x_i, xi_j), 0 <= j <= i <= n, of the triangle {0 <= xi <= x <= 1}.
 *
 * Flattening is row-major in x: index(i, j) = i (i + 1) / 2 + j.
 */
class TriangularGrid {
public:
    explicit TriangularGrid(std::size_t n);

    std::size_t n() const { return n_; }
    double h() const { return h_; }
    std::size_t size() const { return (n_ + 1) * (n_ + 2) / 2; }
    double x(std::size_t i) const { return i == n_ ? 1.0 : static_cast<double>(i) * h_; }

    static constexpr std::size_t index(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }
    static constexpr std::size_t row_start(std::size_t i) { return i * (i + 1) / 2; }

    IntervalGrid line() const { return IntervalGrid(n_); }

    bool operator==(const TriangularGrid& o) const { return n_ == o.n_; }

private:
    std::size_t n_;
    double h_;
};

/// Scalar field sampled on a TriangularGrid in canonical order.
struct KernelField {
    TriangularGrid grid{2};
    std::vector<double> values;

    KernelField() : values(grid.size(), 0.0) {}
    explicit KernelField(const TriangularGrid& g) : grid(g), values(g.size(), 0.0) {}
    KernelField(const TriangularGrid& g, std::vector<double> v);

    double& operator()(std::size_t i, std::size_t j) { return values[TriangularGrid::index(i, j)]; }
    double operator()(std::size_t i, std::size_t j) const { return values[TriangularGrid::index(i, j)]; }

    std::span<double> row(std::size_t i) { return {values.data() + TriangularGrid::row_start(i), i + 1}; }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + TriangularGrid::row_start(i), i + 1};
    }

    double sup_norm() const;
    bool all_finite() const;
};

/// Composite trapezoid rule over equally spaced samples; a single sample integrates to 0.
double trapezoid_integral(std::span<const double> values, double h);

/// Trapezoid of the pointwise product a[k] * b[k].
double trapezoid_dot(std::span<const double> a, std::span<const double> b, double h);

/// Piecewise-linear interpolation of samples on the uniform grid over [0, 1].
double interp_linear(std::span<const double> grid_values, double x);

/// Resamples values given on one uniform [0,1] grid onto another with n_out cells.
std::vector<double> resample(std::span<const double> grid_values, std::size_t n_out);

/**
 * Evaluates a triangular field at (x, xi).
 *
 * Interior cells are bilinear; cells cut by the diagonal interpolate
 * barycentrically on their lower triangle. Points with xi above x by at most
 * 1e-12 are moved onto the diagonal.
 */
double tri_interp(const KernelField& field, double x, double xi);

/// Iterated trapezoid weights on T: outer rule in x, inner rule over xi in [0, x_i].
std::vector<double> triangle_weights(const TriangularGrid& grid);

}  // namespace bkst
