#pragma once

#include <span>
#include <vector>

#include "bkst/gain_vector.hpp"
#include "bkst/kernel_solver.hpp"

namespace bkst {

/// Spatial snapshot (u, v) of the plant at time t.
struct PlantState {
    IntervalGrid grid{2};
    std::vector<double> u, v;
    double t = 0.0;

    PlantState() = default;
    PlantState(const IntervalGrid& g, std::vector<double> u_, std::vector<double> v_, double time = 0.0);

    static PlantState zeros(const IntervalGrid& g);
    /// u0 = 1, v0 = sin(x).
    static PlantState reference_initial(const IntervalGrid& g);
};

/// U = int_0^1 g1 u + int_0^1 g2 v (trapezoid); gains are resampled to the state grid.
double control_value(const GainVector& gains, const PlantState& state);

/**
 * Boundary value U that satisfies U = control_value(gains, state with v(1) = U).
 *
 * The v(1) sample enters the trapezoid with weight h/2, so this is the scalar
 * solve U (1 - h/2 g2(1)) = rest. Used by the closed loop so that the
 * transformed state vanishes at x = 1 exactly.
 */
double boundary_control(const GainVector& gains, const PlantState& state);

/// beta(x) = v(x) - int_0^x k1(x,xi) u(xi) dxi - int_0^x k2(x,xi) v(xi) dxi, per node.
std::vector<double> forward_transform(const PlantState& state, const KernelSet& kernels);

/// v(x) = beta(x) + int_0^x l1(x,xi) u(xi) dxi + int_0^x l2(x,xi) beta(xi) dxi, per node.
std::vector<double> inverse_transform(std::span<const double> u, std::span<const double> beta,
                                      const KernelSet& kernels);

}  // namespace bkst
