#include "bkst/plant_sim.hpp"

#include "bkst/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace bkst {

namespace {

void require_on_grid(const CoefficientSet& coeffs, const IntervalGrid& grid) {
    if (coeffs.nodes() != grid.size()) throw InvalidArgument("step: coefficients are not sampled on the state grid");
}

void record(SimTrace& tr, const PlantState& s, double U, std::size_t stride, std::size_t k) {
    tr.times.push_back(s.t);
    tr.phi.push_back(phi(s));
    tr.u_boundary.push_back(s.u.front());
    tr.v_boundary.push_back(s.v.front());
    tr.control.push_back(U);
    if (stride > 0 && k % stride == 0) tr.snapshots.push_back(s);
}

bool diverged(double p) { return !std::isfinite(p) || p > kBlowUpThreshold; }

// Upwind interior update shared by the plant and the target system.
// With couple_v false the v equation is pure transport (the target system's beta).
void transport_interior(const PlantState& s, const CoefficientSet& c, double dt, std::vector<double>& u,
                        std::vector<double>& v, bool couple_v = true) {
    const std::size_t n = s.grid.cells();
    const double r = dt / s.grid.h();
    for (std::size_t i = 1; i <= n; ++i)
        u[i] = s.u[i] - r * c.lambda[i] * (s.u[i] - s.u[i - 1]) + dt * (c.sigma[i] * s.u[i] + c.omega[i] * s.v[i]);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = s.v[i] + r * c.mu[i] * (s.v[i + 1] - s.v[i]);
        if (couple_v) v[i] += dt * c.theta[i] * s.u[i];
    }
}

}  // namespace

void SimTrace::write_csv(std::ostream& os) const {
    os << "t,phi,u0,v0,U\n";
    char buf[160];
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", times[k], phi[k], u_boundary[k],
                      v_boundary[k], control[k]);
        os << buf;
    }
}

void SimTrace::write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_csv(f);
}

double cfl_dt(const CoefficientSet& coeffs, const IntervalGrid& grid) {
    const SupBounds b = sup_bounds(coeffs);
    return 0.9 * grid.h() / std::max(b.lambda_max, b.mu_max);
}

PlantState step(const PlantState& state, const CoefficientSet& coeffs, double U, double dt) {
    require_on_grid(coeffs, state.grid);
    if (!(dt > 0.0) || dt > cfl_dt(coeffs, state.grid) * (1.0 + 1e-12))
        throw InvalidArgument("step: time step violates the CFL bound");
    PlantState next = state;
    transport_interior(state, coeffs, dt, next.u, next.v);
    next.u[0] = coeffs.q * next.v[0];
    next.v.back() = U;
    next.t = state.t + dt;
    return next;
}

SimTrace simulate(const CoefficientSet& coeffs, const PlantState& init, const ControllerSpec& controller, double T,
                  std::size_t snapshot_stride) {
    if (!(T > 0.0)) throw InvalidArgument("simulate: horizon must be positive");
    const CoefficientSet c = coeffs.resampled(init.grid.cells());
    const auto steps = static_cast<std::size_t>(std::ceil(T / cfl_dt(c, init.grid)));
    const double dt = T / static_cast<double>(steps);

    std::optional<GainVector> gains;
    if (controller.kind == ControllerSpec::Kind::GainFeedback) {
        if (!controller.gains) throw InvalidArgument("simulate: gain feedback requires gains");
        gains = controller.gains->resampled(init.grid);
    }

    SimTrace tr;
    tr.times.reserve(steps + 1);
    PlantState s = init;
    record(tr, s, gains ? control_value(*gains, s) : 0.0, snapshot_stride, 0);
    for (std::size_t k = 1; k <= steps; ++k) {
        PlantState next = step(s, c, 0.0, dt);
        if (gains) next.v.back() = boundary_control(*gains, next);
        next.t = static_cast<double>(k) * dt;
        s = std::move(next);
        record(tr, s, s.v.back(), snapshot_stride, k);
        if (diverged(tr.phi.back())) {
            tr.blew_up = true;
            break;
        }
    }
    return tr;
}

SimTrace simulate_target(const CoefficientSet& coeffs, const KernelSet& kernels, const PlantState& init, double T,
                         std::size_t snapshot_stride) {
    if (!(T > 0.0)) throw InvalidArgument("simulate_target: horizon must be positive");
    if (!kernels.kappa || !kernels.c) throw InvalidArgument("simulate_target: kernels lack kappa/c");
    const std::size_t n = init.grid.cells();
    if (kernels.grid().n() != n) throw InvalidArgument("simulate_target: kernel grid does not match state grid");
    const CoefficientSet c = coeffs.resampled(n);
    const auto steps = static_cast<std::size_t>(std::ceil(T / cfl_dt(c, init.grid)));
    const double dt = T / static_cast<double>(steps);
    const double h = init.grid.h();
    const KernelField& cf = *kernels.c;
    const KernelField& kf = *kernels.kappa;

    SimTrace tr;
    PlantState s = init;
    record(tr, s, 0.0, snapshot_stride, 0);
    for (std::size_t k = 1; k <= steps; ++k) {
        PlantState next = s;
        transport_interior(s, c, dt, next.u, next.v, false);
        for (std::size_t i = 1; i <= n; ++i) {
            std::span<const double> u(s.u.data(), i + 1), b(s.v.data(), i + 1);
            next.u[i] += dt * (trapezoid_dot(cf.row(i), u, h) + trapezoid_dot(kf.row(i), b, h));
        }
        next.v[n] = 0.0;
        next.u[0] = c.q * next.v[0];
        next.t = static_cast<double>(k) * dt;
        s = std::move(next);
        record(tr, s, 0.0, snapshot_stride, k);
        if (diverged(tr.phi.back())) {
            tr.blew_up = true;
            break;
        }
    }
    return tr;
}

}  // namespace bkst
