#include "bkst/controller.hpp"

#include <cmath>

namespace bkst {

PlantState::PlantState(const IntervalGrid& g, std::vector<double> u_, std::vector<double> v_, double time)
    : grid(g), u(std::move(u_)), v(std::move(v_)), t(time) {
    if (u.size() != grid.size() || v.size() != grid.size())
        throw InvalidArgument("PlantState: arrays must match the grid size");
}

PlantState PlantState::zeros(const IntervalGrid& g) {
    return PlantState(g, std::vector<double>(g.size(), 0.0), std::vector<double>(g.size(), 0.0));
}

PlantState PlantState::reference_initial(const IntervalGrid& g) {
    std::vector<double> u(g.size(), 1.0), v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(g.x(i));
    return PlantState(g, std::move(u), std::move(v));
}

double control_value(const GainVector& gains, const PlantState& state) {
    const GainVector g = gains.resampled(state.grid);
    if (g.g1.size() != state.u.size()) throw InvalidArgument("control_value: grid mismatch after resampling");
    const double h = state.grid.h();
    return trapezoid_dot(g.g1, state.u, h) + trapezoid_dot(g.g2, state.v, h);
}

double boundary_control(const GainVector& gains, const PlantState& state) {
    const GainVector g = gains.resampled(state.grid);
    const std::size_t n = state.grid.cells();
    const double h = state.grid.h();
    const double pivot = 1.0 - 0.5 * h * g.g2[n];
    if (std::abs(pivot) < kPivotTolerance) throw NumericalError("boundary_control: singular boundary gain");
    std::span<const double> v_inner(state.v.data(), n);
    std::span<const double> g2_inner(g.g2.data(), n);
    // Trapezoid over [0, 1] of g2 v with the last sample removed: interior weights h, v(0) weight h/2.
    double rest = trapezoid_dot(g.g1, state.u, h);
    rest += 0.5 * h * g2_inner[0] * v_inner[0];
    for (std::size_t k = 1; k < n; ++k) rest += h * g2_inner[k] * v_inner[k];
    return rest / pivot;
}

std::vector<double> forward_transform(const PlantState& state, const KernelSet& kernels) {
    const std::size_t n = state.grid.cells();
    if (kernels.grid().n() != n) throw InvalidArgument("forward_transform: kernel grid does not match state grid");
    const double h = state.grid.h();
    std::vector<double> beta(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        std::span<const double> u(state.u.data(), i + 1), v(state.v.data(), i + 1);
        beta[i] = state.v[i] - trapezoid_dot(kernels.k1.row(i), u, h) - trapezoid_dot(kernels.k2.row(i), v, h);
    }
    return beta;
}

std::vector<double> inverse_transform(std::span<const double> u, std::span<const double> beta,
                                      const KernelSet& kernels) {
    if (!kernels.l1 || !kernels.l2)
        throw InvalidArgument("inverse_transform: kernels lack l1/l2; run solve_inverse_kernels first");
    const std::size_t n = kernels.grid().n();
    if (u.size() != n + 1 || beta.size() != n + 1)
        throw InvalidArgument("inverse_transform: state length does not match kernel grid");
    const double h = kernels.grid().h();
    std::vector<double> v(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        v[i] = beta[i] + trapezoid_dot(kernels.l1->row(i), u.first(i + 1), h) +
               trapezoid_dot(kernels.l2->row(i), beta.first(i + 1), h);
    return v;
}

}  // namespace bkst
