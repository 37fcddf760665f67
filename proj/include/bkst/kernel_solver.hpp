#pragma once

#include <optional>

#include "bkst/coefficients.hpp"
#include "bkst/gain_vector.hpp"
#include "bkst/numerics.hpp"

namespace bkst {

/**
 * Backstepping kernels on one triangular grid.
 *
 * k1, k2 are the transformation kernels; kappa and c are the integral
 * coefficients of the target system; l1, l2 the inverse-transformation kernels.
 */
struct KernelSet {
    KernelField k1, k2;
    std::optional<KernelField> kappa, c, l1, l2;

    const TriangularGrid& grid() const { return k1.grid; }
};

/// How the c-coefficient integral is closed. The consistent form integrates kappa(x,s) k1(s,xi);
/// the alternative uses c itself in the integrand.
enum class CForm { KappaIntegrand, SelfIntegrand };

/**
 * Solves the coupled Goursat problem for (k1, k2).
 *
 * Semi-Lagrangian marching in x: each node traces its characteristic one
 * step back to level i-1 (or to the boundary it crossed) and applies the
 * source term explicitly at the foot. Boundary data are imposed exactly:
 * k1(x,x) = -theta/(lambda+mu) and mu(0) k2(x,0) = q lambda(0) k1(x,0).
 * Nodes of a level are computed in parallel with OpenMP for large n; the
 * result is bit-identical to solve_kernels_serial.
 */
KernelSet solve_kernels(const CoefficientSet& coeffs, const TriangularGrid& grid);

/// Single-threaded reference for solve_kernels (same arithmetic, same order per node).
KernelSet solve_kernels_serial(const CoefficientSet& coeffs, const TriangularGrid& grid);

/// Fills kappa and c by row-wise back-substitution of their Volterra equations.
KernelSet solve_kappa_c(const CoefficientSet& coeffs, KernelSet ks, CForm form = CForm::KappaIntegrand);

/// Fills l1 and l2 by column-wise marching of the inverse-kernel Volterra equations.
KernelSet solve_inverse_kernels(KernelSet ks);

/// Top row (x = 1) of k1 and k2.
GainVector gain_slice(const KernelSet& ks);

/// Pivot threshold shared by the triangular Volterra solves.
inline constexpr double kPivotTolerance = 1e-12;

}  // namespace bkst
