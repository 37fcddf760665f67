#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "bkst/analysis.hpp"
#include "bkst/controller.hpp"
#include "bkst/plant_sim.hpp"

using namespace bkst;

namespace {

CoefficientSet pure_transport(std::size_t m = 101) {
    auto c = gamma_family(1.0, m);
    for (std::size_t i = 0; i < m; ++i) {
        c.lambda[i] = c.mu[i] = 1.0;
        c.dlambda[i] = c.dmu[i] = 0.0;
        c.sigma[i] = c.omega[i] = c.theta[i] = 0.0;
    }
    c.q = 0.0;
    return c;
}

double l2(const std::vector<double>& a, double h) { return std::sqrt(trapezoid_dot(a, a, h)); }

PlantState random_smooth_state(const IntervalGrid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    double a[6];
    for (double& v : a) v = u(rng);
    std::vector<double> uu(g.size()), vv(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.x(i);
        uu[i] = a[0] + a[1] * std::sin(M_PI * x) + a[2] * std::cos(3 * x);
        vv[i] = a[3] + a[4] * x * x + a[5] * std::sin(2 * M_PI * x);
    }
    return PlantState(g, uu, vv);
}

}  // namespace

TEST_CASE("cfl step size") {
    const auto c = pure_transport();
    CHECK(cfl_dt(c, IntervalGrid(100)) == doctest::Approx(0.009));
    CHECK(cfl_dt(c, IntervalGrid(200)) == doctest::Approx(0.0045));
    CHECK(cfl_dt(gamma_family(5.0), IntervalGrid(100)) == doctest::Approx(0.009 / (std::exp(5.0) + 1.0)).epsilon(1e-12));
}

TEST_CASE("step basics") {
    const IntervalGrid g(50);
    const auto c = gamma_family(2.0).resampled(50);
    const auto z = step(PlantState::zeros(g), c, 0.0, cfl_dt(c, g));
    for (double v : z.u) CHECK(v == 0.0);
    for (double v : z.v) CHECK(v == 0.0);
    CHECK_THROWS_AS(step(PlantState::zeros(g), c, 0.0, 2 * cfl_dt(c, g)), InvalidArgument);
    CHECK_THROWS_AS(step(PlantState::zeros(g), gamma_family(2.0), 0.0, 1e-6), InvalidArgument);

    SUBCASE("boundary assignments hold exactly after each step") {
        PlantState s = PlantState::reference_initial(g);
        for (int k = 0; k < 20; ++k) {
            s = step(s, c, 0.3 * k, cfl_dt(c, g));
            CHECK(s.u[0] == c.q * s.v[0]);
            CHECK(s.v.back() == 0.3 * k);
        }
    }
}

TEST_CASE("pure transport empties the domain") {
    const IntervalGrid g(100);
    const auto tr = simulate(pure_transport(), PlantState::reference_initial(g), ControllerSpec::open_loop(), 1.2, 1);
    const PlantState& last = tr.snapshots.back();
    CHECK(l2(last.u, g.h()) <= 2 * g.h());
    CHECK(l2(last.v, g.h()) <= 2 * g.h());
}

TEST_CASE("transport matches the exact solution at first order") {
    // u_t = -u_x with u(0,t) = 0: u(x,t) = f(x - t) for x > t.
    auto err_at = [](std::size_t n) {
        const IntervalGrid g(n);
        std::vector<double> u(g.size()), v(g.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) u[i] = std::sin(M_PI * g.x(i)) * std::sin(M_PI * g.x(i));
        const auto tr = simulate(pure_transport(), PlantState(g, u, v), ControllerSpec::open_loop(), 0.5, 1);
        const PlantState& s = tr.snapshots.back();
        std::vector<double> e(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = g.x(i) - s.t;
            const double exact = y > 0 ? std::sin(M_PI * y) * std::sin(M_PI * y) : 0.0;
            e[i] = s.u[i] - exact;
        }
        return l2(e, g.h());
    };
    const double e100 = err_at(100), e200 = err_at(200);
    CHECK(e100 <= 2.0 / 100);
    CHECK(e100 / e200 >= 1.6);
}

TEST_CASE("open loop and zero feedback") {
    const IntervalGrid g(60);
    const auto c = gamma_family(1.0);
    const auto z = simulate(c, PlantState::zeros(g), ControllerSpec::open_loop(), 1.0);
    for (double p : z.phi) CHECK(p == 0.0);
    const auto a = simulate(c, PlantState::reference_initial(g), ControllerSpec::open_loop(), 0.5);
    const auto b = simulate(c, PlantState::reference_initial(g), ControllerSpec::feedback(GainVector::zeros(g)), 0.5);
    CHECK(a.phi == b.phi);
    CHECK(a.control == b.control);
    const auto a2 = simulate(c, PlantState::reference_initial(g), ControllerSpec::open_loop(), 0.5);
    CHECK(a.phi == a2.phi);  // deterministic
    CHECK(a.times.size() == a.u_boundary.size());
    CHECK(a.times.size() == a.control.size());
}

TEST_CASE("trace csv") {
    const IntervalGrid g(20);
    const auto tr = simulate(gamma_family(1.0), PlantState::reference_initial(g), ControllerSpec::open_loop(), 0.05);
    std::ostringstream os;
    tr.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,phi,u0,v0,U");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == tr.size());
}

TEST_CASE("control value") {
    const IntervalGrid g(40);
    const PlantState ones(g, std::vector<double>(41, 1.0), std::vector<double>(41, 1.0));
    CHECK(control_value(GainVector::zeros(g), PlantState::reference_initial(g)) == 0.0);
    CHECK(control_value(GainVector(g, std::vector<double>(41, 1.0), std::vector<double>(41, 1.0)), ones) ==
          doctest::Approx(2.0).epsilon(1e-14));

    const auto c = gamma_family(1.0);
    const auto gains = gain_slice(solve_kernels(c, TriangularGrid(100)));
    const double coarse = control_value(gains, PlantState::reference_initial(IntervalGrid(100)));
    const double fine = control_value(gains, PlantState::reference_initial(IntervalGrid(1000)));
    CHECK(std::abs(coarse - fine) <= 1e-3);

    SUBCASE("linear in the state") {
        std::mt19937_64 rng(5);
        const IntervalGrid g100(100);
        const auto s1 = random_smooth_state(g100, rng), s2 = random_smooth_state(g100, rng);
        PlantState mix = s1;
        for (std::size_t i = 0; i < mix.u.size(); ++i) {
            mix.u[i] = 2 * s1.u[i] - 3 * s2.u[i];
            mix.v[i] = 2 * s1.v[i] - 3 * s2.v[i];
        }
        CHECK(control_value(gains, mix) ==
              doctest::Approx(2 * control_value(gains, s1) - 3 * control_value(gains, s2)).epsilon(1e-12));
    }
}

TEST_CASE("boundary control solves the implicit control law") {
    const IntervalGrid g(100);
    const auto gains = gain_slice(solve_kernels(gamma_family(1.0), TriangularGrid(100)));
    PlantState s = PlantState::reference_initial(g);
    s.v.back() = boundary_control(gains, s);
    CHECK(std::abs(s.v.back() - control_value(gains, s)) <= 1e-14);
}

TEST_CASE("transforms") {
    const IntervalGrid g(100);
    const TriangularGrid tg(100);
    std::mt19937_64 rng(9);
    const auto s = random_smooth_state(g, rng);
    KernelSet zero{KernelField(tg), KernelField(tg), {}, {}, {}, {}};
    CHECK(forward_transform(s, zero) == s.v);
    zero = solve_inverse_kernels(zero);
    CHECK(inverse_transform(s.u, s.v, zero) == s.v);
    const auto ks = solve_inverse_kernels(solve_kernels(gamma_family(1.0), tg));
    for (double b : forward_transform(PlantState::zeros(g), ks)) CHECK(b == 0.0);
    const std::vector<double> zeros(101, 0.0);
    for (double v : inverse_transform(zeros, zeros, ks)) CHECK(v == 0.0);

    KernelSet no_inverse = solve_kernels(gamma_family(1.0), tg);
    CHECK_THROWS_WITH_AS(inverse_transform(s.u, s.v, no_inverse), doctest::Contains("solve_inverse_kernels"), InvalidArgument);
    CHECK_THROWS_AS(forward_transform(PlantState::zeros(IntervalGrid(50)), ks), InvalidArgument);
}

TEST_CASE("transform composition error is O(h)") {
    auto comp_err = [](std::size_t n) {
        const IntervalGrid g(n);
        const auto ks = solve_inverse_kernels(solve_kernels(gamma_family(1.0), TriangularGrid(n)));
        std::mt19937_64 rng(21);
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const auto s = random_smooth_state(g, rng);
            const auto v = inverse_transform(s.u, forward_transform(s, ks), ks);
            std::vector<double> e(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) e[i] = v[i] - s.v[i];
            worst = std::max(worst, l2(e, g.h()));
        }
        return worst;
    };
    const double e100 = comp_err(100), e200 = comp_err(200);
    CHECK(e100 <= 10.0 / 100);
    CHECK(e200 <= 10.0 / 200);
    // Both quadratures are trapezoid, so the error falls at least as fast as h.
    CHECK(e200 <= 0.7 * e100);
    MESSAGE("composition error n=100: " << e100 << ", n=200: " << e200 << ", ratio " << e100 / e200);
}

TEST_CASE("target system") {
    const IntervalGrid g(100);
    const auto c = gamma_family(1.0);
    const auto ks = solve_kappa_c(c, solve_kernels(c, TriangularGrid(100)));
    const auto z = simulate_target(c, ks, PlantState::zeros(g), 0.5);
    for (double p : z.phi) CHECK(p == 0.0);

    SUBCASE("beta vanishes after one transit") {
        std::vector<double> u(101, 1.0), b(101);
        for (std::size_t i = 0; i <= 100; ++i) b[i] = (1 - g.x(i)) * (1 - g.x(i));
        std::vector<double> inv_mu(101);
        for (std::size_t i = 0; i <= 100; ++i) inv_mu[i] = 1.0 / (std::exp(g.x(i)) + 1.0);
        const double transit = trapezoid_integral(inv_mu, g.h());
        const auto tr = simulate_target(c, ks, PlantState(g, u, b), transit + 0.05, 1);
        for (const auto& s : tr.snapshots)
            if (s.t >= transit + 0.02) CHECK(l2(s.v, g.h()) <= 5 * g.h());
    }
    SUBCASE("beta from the closed loop matches the target simulation") {
        const auto cl = simulate(c, PlantState::reference_initial(g), ControllerSpec::feedback(gain_slice(ks)), 0.6, 20);
        const PlantState& s0 = cl.snapshots.front();
        const PlantState init(g, s0.u, forward_transform(s0, ks));
        const auto tt = simulate_target(c, ks, init, 0.6, 20);
        const double dt = cl.times[1] - cl.times[0];
        REQUIRE(tt.snapshots.size() == cl.snapshots.size());
        for (std::size_t k = 0; k < cl.snapshots.size(); ++k) {
            const auto beta_hat = forward_transform(cl.snapshots[k], ks);
            std::vector<double> e(beta_hat.size());
            for (std::size_t i = 0; i < e.size(); ++i) e[i] = beta_hat[i] - tt.snapshots[k].v[i];
            CHECK(l2(e, g.h()) <= 10 * (g.h() + dt));
        }
    }
}

TEST_CASE("exact feedback keeps beta(1) at zero") {
    const IntervalGrid g(100);
    const auto c = gamma_family(1.0);
    const auto ks = solve_kernels(c, TriangularGrid(100));
    const auto tr = simulate(c, PlantState::reference_initial(g), ControllerSpec::feedback(gain_slice(ks)), 1.0, 1);
    double worst = 0.0;
    // The initial state is arbitrary; every later state carries the feedback value.
    for (std::size_t k = 1; k < tr.snapshots.size(); ++k)
        worst = std::max(worst, std::abs(forward_transform(tr.snapshots[k], ks).back()));
    CHECK(worst <= 1e-13);
}
