#pragma once

#include <string>
#include <vector>

#include "bkst/coefficients.hpp"
#include "bkst/controller.hpp"
#include "bkst/kernel_solver.hpp"
#include "bkst/plant_sim.hpp"

#include "json.hpp"

namespace bkst {

/**
 * Boundary residuals K1(x), K2(x) and interior residuals K3, K4 of a kernel
 * pair, together with the pointwise approximation bound.
 *
 *   K1 = (lambda + mu) k1(x,x) + theta
 *   K2 = -lambda(0) q k1(x,0) + mu(0) k2(x,0)
 *   K3 = -mu(x) d_x k1 + lambda(xi) d_xi k1 + lambda'(xi) k1 + sigma(xi) k1 + theta(xi) k2
 *   K4 = -mu(x) d_x k2 - mu(xi) d_xi k2 - mu'(xi) k2 + omega(xi) k1
 *
 * For a difference field (exact - approximate) the operators are applied
 * without the inhomogeneous theta term, which turns them into the
 * perturbations delta1..delta4 of the approximate target system.
 */
struct ResidualReport {
    std::vector<double> K1, K2;  // over x_i
    KernelField K3, K4;
    double K1_sup = 0, K2_sup = 0, K3_sup = 0, K4_sup = 0;
    // Kernel error sup norms; zero unless produced by approximation_error.
    double k1_err_sup = 0, k2_err_sup = 0, c_err_sup = 0, kappa_err_sup = 0;
    /// Max over nodes of the summed bound. For residual_operators only the residual terms contribute.
    double epsilon_estimate = 0;
};

/// Residuals of (k1, k2) as candidate solutions; needs n >= 3.
ResidualReport residual_operators(const CoefficientSet& coeffs, const KernelField& k1, const KernelField& k2);

/**
 * Pointwise accuracy of approximate kernels against exact ones:
 * max over nodes of |k1~| + |k2~| + |c~| + |kappa~| + |delta1| + |delta2| + |delta3| + |delta4|.
 * Both sets must carry kappa and c.
 */
ResidualReport approximation_error(const CoefficientSet& coeffs, const KernelSet& exact, const KernelSet& approx);

/// Phi = ||u||^2 + ||v||^2 (trapezoid).
double phi(const PlantState& state);

/// Psi1 = ||u||^2 + ||beta||^2 with beta the forward transform of the state.
double psi1(const PlantState& state, const KernelSet& kernels);

/// V1 = int p1 e^{-p2 x} / lambda u^2 + int e^{p2 x} / mu beta^2 (trapezoid).
double lyapunov_v1(std::span<const double> u, std::span<const double> beta, const CoefficientSet& coeffs, double p1,
                   double p2);

/// min(1, 1/q^2) / 2.
double default_p1(double q);

/// max{ p1 (omega_max + |kappa|) / lambda_min, (2 sigma_max + omega_max + 2 |c| + |kappa|) / lambda_min }.
double p2_lower_bound(const CoefficientSet& coeffs, const KernelSet& kernels, double p1);

struct StabilityReport {
    double c1_hat = 0;        // fitted decay rate of Phi
    double fit_quality = 0;   // R^2 of the log-linear fit
    double c2_hat = 0;        // max_t Phi(t) e^{c1_hat t} / Phi(0)
    std::size_t samples = 0;  // points used by the fit
    bool lyapunov_checked = false;
    bool lyapunov_monotone = false;
    double s1_margin = 0;  // min over probes of S1_emp phi - psi1
    double s2_margin = 0;  // min over probes of S2_emp psi1 - phi
};

/// Least-squares line through (t, ln Phi) for t >= t_start and Phi > 0.
StabilityReport fit_decay(const SimTrace& trace, double t_start);

/// 4 + 3 |k1|^2 + 3 |k2|^2.
double s1_empirical(const KernelSet& kernels);
/// 4 + 3 |l1|^2 + 3 |l2|^2; needs l1, l2.
double s2_empirical(const KernelSet& kernels);

/**
 * Stability constants with kernel sup norms standing in for the a-priori
 * bounds N_i e^{M_i}. Informational: the a-priori bounds are not computable.
 */
struct TheoremConstants {
    double p1 = 0, p2 = 0, epsilon = 0;
    double c_hat_bound = 0, kappa_hat_bound = 0, l1_bound = 0, l2_bound = 0;
    double epsilon_star = 0, c1 = 0, c2 = 0, S1 = 0, S2 = 0;
};

TheoremConstants theorem_constants(const CoefficientSet& coeffs, const KernelSet& kernels, double p1, double p2,
                                   double epsilon);

nlohmann::json to_json(const ResidualReport& r);
nlohmann::json to_json(const StabilityReport& r);
nlohmann::json to_json(const TheoremConstants& r);

/// Header and row for plotting tools.
std::string stability_csv_header();
std::string stability_csv_row(const std::string& label, const StabilityReport& r);

}  // namespace bkst
