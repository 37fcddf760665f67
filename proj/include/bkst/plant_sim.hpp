#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bkst/coefficients.hpp"
#include "bkst/controller.hpp"
#include "bkst/kernel_solver.hpp"

namespace bkst {

struct SimTrace {
    std::vector<double> times;
    std::vector<double> phi;
    std::vector<double> u_boundary;  // u(0, t)
    std::vector<double> v_boundary;  // v(0, t)
    std::vector<double> control;     // U(t)
    std::vector<PlantState> snapshots;
    bool blew_up = false;

    std::size_t size() const { return times.size(); }
    /// CSV with header t,phi,u0,v0,U and 17 significant digits.
    void write_csv(std::ostream& os) const;
    void write_csv(const std::string& path) const;
};

struct ControllerSpec {
    enum class Kind { OpenLoop, GainFeedback };
    Kind kind = Kind::OpenLoop;
    std::optional<GainVector> gains;

    static ControllerSpec open_loop() { return {}; }
    static ControllerSpec feedback(GainVector g) { return {Kind::GainFeedback, std::move(g)}; }
};

/// Largest stable explicit step: 0.9 h / max(lambda_max, mu_max).
double cfl_dt(const CoefficientSet& coeffs, const IntervalGrid& grid);

/**
 * One first-order upwind step of
 *   u_t = -lambda u_x + sigma u + omega v,   v_t = mu v_x + theta u,
 * followed by u(0) = q v(0) and v(1) = U. `coeffs` must already live on the
 * state grid (see CoefficientSet::resampled).
 */
PlantState step(const PlantState& state, const CoefficientSet& coeffs, double U, double dt);

inline constexpr double kBlowUpThreshold = 1e12;

/**
 * Runs the plant to time T. The step is T / ceil(T / cfl_dt). Under gain
 * feedback, U at each step is the boundary value consistent with the
 * control law evaluated on the freshly updated state. Stops early (and sets
 * blew_up) once Phi exceeds 1e12 or turns non-finite.
 */
SimTrace simulate(const CoefficientSet& coeffs, const PlantState& init, const ControllerSpec& controller, double T,
                  std::size_t snapshot_stride = 0);

/**
 * Runs the nominal target system
 *   u_t = -lambda u_x + sigma u + omega beta + int c u + int kappa beta,   beta_t = mu beta_x,
 * with u(0) = q beta(0), beta(1) = 0. `init.v` holds beta at t = 0, and the
 * trace's v slots hold beta. Kernels must include kappa and c.
 */
SimTrace simulate_target(const CoefficientSet& coeffs, const KernelSet& kernels, const PlantState& init, double T,
                         std::size_t snapshot_stride = 0);

}  // namespace bkst
