#include "bkst/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bkst {

namespace {

struct NodeValues {
    std::vector<double> lambda, mu, dlambda, dmu, sigma, omega, theta;
    double q;

    NodeValues(const CoefficientSet& c, std::size_t n)
        : lambda(resample(c.lambda, n)),
          mu(resample(c.mu, n)),
          dlambda(resample(c.dlambda, n)),
          dmu(resample(c.dmu, n)),
          sigma(resample(c.sigma, n)),
          omega(resample(c.omega, n)),
          theta(resample(c.theta, n)),
          q(c.q) {}
};

// d/dx along the line xi = xi_j. Centered inside, one-sided at the ends of the line.
double d_x(const KernelField& f, std::size_t i, std::size_t j) {
    const std::size_t n = f.grid.n();
    const double h = f.grid.h();
    const bool has_prev = i > j;
    const bool has_next = i < n;
    if (has_prev && has_next) return (f(i + 1, j) - f(i - 1, j)) / (2.0 * h);
    if (has_next) return (f(i + 1, j) - f(i, j)) / h;
    if (has_prev) return (f(i, j) - f(i - 1, j)) / h;
    // Corner (n, n): the line xi = 1 holds a single node; use the neighbouring line.
    return (f(n, n - 1) - f(n - 1, n - 1)) / h;
}

// d/dxi along the line x = x_i.
double d_xi(const KernelField& f, std::size_t i, std::size_t j) {
    const double h = f.grid.h();
    if (i == 0) return (f(1, 1) - f(1, 0)) / h;
    if (j > 0 && j < i) return (f(i, j + 1) - f(i, j - 1)) / (2.0 * h);
    if (j == 0) return (f(i, 1) - f(i, 0)) / h;
    return (f(i, i) - f(i, i - 1)) / h;
}

ResidualReport residuals(const CoefficientSet& coeffs, const KernelField& k1, const KernelField& k2,
                         bool homogeneous) {
    if (!(k1.grid == k2.grid)) throw InvalidArgument("residual_operators: fields live on different grids");
    const std::size_t n = k1.grid.n();
    if (n < 3) throw InvalidArgument("residual_operators: need n >= 3 for centered stencils");
    const NodeValues c(coeffs, n);

    ResidualReport r;
    r.K1.resize(n + 1);
    r.K2.resize(n + 1);
    r.K3 = KernelField(k1.grid);
    r.K4 = KernelField(k1.grid);
    for (std::size_t i = 0; i <= n; ++i) {
        r.K1[i] = (c.lambda[i] + c.mu[i]) * k1(i, i) + (homogeneous ? 0.0 : c.theta[i]);
        r.K2[i] = -c.lambda[0] * c.q * k1(i, 0) + c.mu[0] * k2(i, 0);
        for (std::size_t j = 0; j <= i; ++j) {
            r.K3(i, j) = -c.mu[i] * d_x(k1, i, j) + c.lambda[j] * d_xi(k1, i, j) +
                         (c.dlambda[j] + c.sigma[j]) * k1(i, j) + c.theta[j] * k2(i, j);
            r.K4(i, j) = -c.mu[i] * d_x(k2, i, j) - c.mu[j] * d_xi(k2, i, j) - c.dmu[j] * k2(i, j) +
                         c.omega[j] * k1(i, j);
        }
    }
    auto sup = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    };
    r.K1_sup = sup(r.K1);
    r.K2_sup = sup(r.K2);
    r.K3_sup = r.K3.sup_norm();
    r.K4_sup = r.K4.sup_norm();
    return r;
}

}  // namespace

ResidualReport residual_operators(const CoefficientSet& coeffs, const KernelField& k1, const KernelField& k2) {
    ResidualReport r = residuals(coeffs, k1, k2, false);
    const std::size_t n = k1.grid.n();
    double eps = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            eps = std::max(eps, std::abs(r.K1[i]) + std::abs(r.K2[i]) + std::abs(r.K3(i, j)) + std::abs(r.K4(i, j)));
    r.epsilon_estimate = eps;
    return r;
}

ResidualReport approximation_error(const CoefficientSet& coeffs, const KernelSet& exact, const KernelSet& approx) {
    if (!(exact.grid() == approx.grid())) throw InvalidArgument("approximation_error: kernel sets on different grids");
    if (!exact.kappa || !exact.c || !approx.kappa || !approx.c)
        throw InvalidArgument("approximation_error: both kernel sets need kappa and c");
    const TriangularGrid& g = exact.grid();
    KernelField d1(g), d2(g), dc(g), dk(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
        d1.values[p] = exact.k1.values[p] - approx.k1.values[p];
        d2.values[p] = exact.k2.values[p] - approx.k2.values[p];
        dc.values[p] = exact.c->values[p] - approx.c->values[p];
        dk.values[p] = exact.kappa->values[p] - approx.kappa->values[p];
    }
    ResidualReport r = residuals(coeffs, d1, d2, true);
    r.k1_err_sup = d1.sup_norm();
    r.k2_err_sup = d2.sup_norm();
    r.c_err_sup = dc.sup_norm();
    r.kappa_err_sup = dk.sup_norm();
    double eps = 0.0;
    for (std::size_t i = 0; i <= g.n(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double s = std::abs(d1(i, j)) + std::abs(d2(i, j)) + std::abs(dc(i, j)) + std::abs(dk(i, j)) +
                             std::abs(r.K1[i]) + std::abs(r.K2[i]) + std::abs(r.K3(i, j)) + std::abs(r.K4(i, j));
            eps = std::max(eps, s);
        }
    r.epsilon_estimate = eps;
    return r;
}

double phi(const PlantState& state) {
    const double h = state.grid.h();
    return trapezoid_dot(state.u, state.u, h) + trapezoid_dot(state.v, state.v, h);
}

double psi1(const PlantState& state, const KernelSet& kernels) {
    const std::vector<double> beta = forward_transform(state, kernels);
    const double h = state.grid.h();
    return trapezoid_dot(state.u, state.u, h) + trapezoid_dot(beta, beta, h);
}

double lyapunov_v1(std::span<const double> u, std::span<const double> beta, const CoefficientSet& coeffs, double p1,
                   double p2) {
    if (!(p1 > 0.0)) throw InvalidArgument("lyapunov_v1: p1 must be positive");
    if (u.size() != beta.size() || u.size() < 3) throw InvalidArgument("lyapunov_v1: state arrays mismatch");
    const IntervalGrid g(u.size() - 1);
    const std::vector<double> lambda = resample(coeffs.lambda, g.cells());
    const std::vector<double> mu = resample(coeffs.mu, g.cells());
    std::vector<double> a(u.size()), b(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double x = g.x(i);
        a[i] = p1 * std::exp(-p2 * x) / lambda[i] * u[i] * u[i];
        b[i] = std::exp(p2 * x) / mu[i] * beta[i] * beta[i];
    }
    return trapezoid_integral(a, g.h()) + trapezoid_integral(b, g.h());
}

double default_p1(double q) { return q == 0.0 ? 0.5 : 0.5 * std::min(1.0, 1.0 / (q * q)); }

double p2_lower_bound(const CoefficientSet& coeffs, const KernelSet& kernels, double p1) {
    if (!kernels.kappa || !kernels.c) throw InvalidArgument("p2_lower_bound: kernels need kappa and c");
    const SupBounds b = sup_bounds(coeffs);
    const double kap = kernels.kappa->sup_norm();
    const double cc = kernels.c->sup_norm();
    return std::max(p1 * (b.omega_max + kap) / b.lambda_min,
                    (2.0 * b.sigma_max + b.omega_max + 2.0 * cc + kap) / b.lambda_min);
}

StabilityReport fit_decay(const SimTrace& trace, double t_start) {
    std::vector<double> t, y;
    for (std::size_t k = 0; k < trace.size(); ++k)
        if (trace.times[k] >= t_start && trace.phi[k] > 0.0) {
            t.push_back(trace.times[k]);
            y.push_back(std::log(trace.phi[k]));
        }
    if (t.empty()) throw InvalidArgument("fit_decay: no positive Phi after t_start");
    if (t.size() < 10) throw InvalidArgument("fit_decay: need at least 10 samples after t_start");

    const double m = static_cast<double>(t.size());
    double tm = 0, ym = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        tm += t[k];
        ym += y[k];
    }
    tm /= m;
    ym /= m;
    double stt = 0, sty = 0, syy = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        stt += (t[k] - tm) * (t[k] - tm);
        sty += (t[k] - tm) * (y[k] - ym);
        syy += (y[k] - ym) * (y[k] - ym);
    }
    const double slope = sty / stt;
    const double intercept = ym - slope * tm;
    double sse = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double e = y[k] - (intercept + slope * t[k]);
        sse += e * e;
    }

    StabilityReport r;
    r.c1_hat = -slope;
    r.samples = t.size();
    // Exactly log-linear data (including constant Phi) has zero residual.
    r.fit_quality = syy > 0.0 ? 1.0 - sse / syy : (sse == 0.0 ? 1.0 : 0.0);
    const double phi0 = trace.phi.front();
    double c2 = 0.0;
    if (phi0 > 0.0)
        for (std::size_t k = 0; k < trace.size(); ++k)
            c2 = std::max(c2, trace.phi[k] * std::exp(r.c1_hat * trace.times[k]) / phi0);
    r.c2_hat = c2;
    return r;
}

double s1_empirical(const KernelSet& kernels) {
    const double a = kernels.k1.sup_norm(), b = kernels.k2.sup_norm();
    return 4.0 + 3.0 * a * a + 3.0 * b * b;
}

double s2_empirical(const KernelSet& kernels) {
    if (!kernels.l1 || !kernels.l2) throw InvalidArgument("s2_empirical: kernels need l1 and l2");
    const double a = kernels.l1->sup_norm(), b = kernels.l2->sup_norm();
    return 4.0 + 3.0 * a * a + 3.0 * b * b;
}

TheoremConstants theorem_constants(const CoefficientSet& coeffs, const KernelSet& kernels, double p1, double p2,
                                   double epsilon) {
    const SupBounds b = sup_bounds(coeffs);
    const double n1 = kernels.k1.sup_norm();
    const double n2 = kernels.k2.sup_norm();
    const double khat1 = n1 + epsilon, khat2 = n2 + epsilon;

    TheoremConstants t;
    t.p1 = p1;
    t.p2 = p2;
    t.epsilon = epsilon;
    t.c_hat_bound = b.omega_max * khat1 * std::exp(khat1);
    t.kappa_hat_bound = b.omega_max * khat2 * std::exp(khat2);
    t.l1_bound = khat1 * std::exp(khat2);
    t.l2_bound = khat2 * std::exp(khat2);

    const double lam = b.lambda_min, mu = b.mu_min;
    const double a_u = 2.0 * b.sigma_max + b.omega_max + 2.0 * t.c_hat_bound + t.kappa_hat_bound;
    const double a_b = p1 * (b.omega_max + t.kappa_hat_bound);
    const double ep = std::exp(p2), em = std::exp(-p2);
    const double q2 = coeffs.q * coeffs.q;
    t.epsilon_star = std::min({mu * p1 * em * (lam * p2 - a_u) / (lam * ep * (3.0 * t.l1_bound + 2.0)),
                               mu * (lam * p2 - a_b) / (lam * ep * (7.0 + 3.0 * t.l2_bound * t.l2_bound)),
                               mu * (1.0 - p1 * q2) / ep});
    t.c1 = std::min((lam / p1) * (p1 * em * (p2 - a_u / lam) - epsilon * ep * (3.0 * t.l1_bound + 2.0) / mu),
                    (mu / ep) * (p2 - a_b / lam - epsilon * ep * (7.0 + 3.0 * t.l2_bound * t.l2_bound) / mu));
    t.c2 = std::max(p1 / lam, ep / mu) / std::min(p1 * em / b.lambda_max, 1.0 / b.mu_max);
    t.S1 = 4.0 + 6.0 * n1 * n1 + 6.0 * n2 * n2 + 12.0 * epsilon * epsilon;
    t.S2 = 4.0 + 6.0 * (n1 + n2 + 2.0 * epsilon * epsilon) * std::exp(2.0 * (n2 + epsilon));
    return t;
}

nlohmann::json to_json(const ResidualReport& r) {
    return {{"K1_sup", r.K1_sup},         {"K2_sup", r.K2_sup},         {"K3_sup", r.K3_sup},
            {"K4_sup", r.K4_sup},         {"k1_err_sup", r.k1_err_sup}, {"k2_err_sup", r.k2_err_sup},
            {"c_err_sup", r.c_err_sup},   {"kappa_err_sup", r.kappa_err_sup},
            {"epsilon_estimate", r.epsilon_estimate}};
}

nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json j = {{"c1_hat", r.c1_hat},   {"fit_quality", r.fit_quality}, {"c2_hat", r.c2_hat},
                        {"samples", r.samples}, {"s1_margin", r.s1_margin},     {"s2_margin", r.s2_margin}};
    if (r.lyapunov_checked) j["lyapunov_monotone"] = r.lyapunov_monotone;
    return j;
}

nlohmann::json to_json(const TheoremConstants& t) {
    return {{"p1", t.p1},
            {"p2", t.p2},
            {"epsilon", t.epsilon},
            {"c_hat_bound", t.c_hat_bound},
            {"kappa_hat_bound", t.kappa_hat_bound},
            {"l1_bound", t.l1_bound},
            {"l2_bound", t.l2_bound},
            {"epsilon_star", t.epsilon_star},
            {"c1", t.c1},
            {"c2", t.c2},
            {"S1", t.S1},
            {"S2", t.S2}};
}

std::string stability_csv_header() { return "label,c1_hat,fit_quality,c2_hat,samples"; }

std::string stability_csv_row(const std::string& label, const StabilityReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << label << ',' << r.c1_hat << ',' << r.fit_quality << ',' << r.c2_hat << ',' << r.samples;
    return os.str();
}

}  // namespace bkst
