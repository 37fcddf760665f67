#include "bkst/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace bkst {

namespace {

std::vector<double> centered_difference(const std::vector<double>& f) {
    const std::size_t m = f.size();
    const double h = 1.0 / static_cast<double>(m - 1);
    std::vector<double> d(m);
    for (std::size_t i = 1; i + 1 < m; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    d[0] = (f[1] - f[0]) / h;
    d[m - 1] = (f[m - 1] - f[m - 2]) / h;
    return d;
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }
double sup_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

// Smooth multiplier 1 + a s(x) with |s| <= 1 and its derivative.
struct Perturbation {
    double r1, r2, a;
    double value(double x) const { return 1.0 + a * (r1 * std::cos(std::numbers::pi * x) + r2 * (2.0 * x - 1.0)); }
    double slope(double x) const {
        return a * (-r1 * std::numbers::pi * std::sin(std::numbers::pi * x) + 2.0 * r2);
    }
};

}  // namespace

void CoefficientSet::validate() const {
    const std::size_t m = lambda.size();
    if (m < 2) throw InvalidArgument("CoefficientSet: need at least 2 nodes");
    for (const auto* a : {&mu, &dlambda, &dmu, &sigma, &omega, &theta})
        if (a->size() != m) throw InvalidArgument("CoefficientSet: arrays do not share one grid");
    for (const auto* a : {&lambda, &mu, &dlambda, &dmu, &sigma, &omega, &theta})
        for (double v : *a)
            if (!std::isfinite(v)) throw InvalidArgument("CoefficientSet: non-finite coefficient value");
    if (!std::isfinite(q)) throw InvalidArgument("CoefficientSet: non-finite q");
    for (std::size_t i = 0; i < m; ++i)
        if (!(lambda[i] > 0.0) || !(mu[i] > 0.0))
            throw InvalidArgument("CoefficientSet: transport speeds must be positive (node " + std::to_string(i) + ")");
}

CoefficientSet CoefficientSet::resampled(std::size_t n_out) const {
    CoefficientSet r;
    r.lambda = resample(lambda, n_out);
    r.mu = resample(mu, n_out);
    r.dlambda = resample(dlambda, n_out);
    r.dmu = resample(dmu, n_out);
    r.sigma = resample(sigma, n_out);
    r.omega = resample(omega, n_out);
    r.theta = resample(theta, n_out);
    r.q = q;
    return r;
}

CoefficientSet CoefficientSet::from_samples(std::vector<double> lambda, std::vector<double> mu,
                                            std::vector<double> sigma, std::vector<double> omega,
                                            std::vector<double> theta, double q) {
    CoefficientSet c;
    if (lambda.size() < 2 || mu.size() != lambda.size())
        throw InvalidArgument("CoefficientSet::from_samples: speed arrays must share a length >= 2");
    c.dlambda = centered_difference(lambda);
    c.dmu = centered_difference(mu);
    c.lambda = std::move(lambda);
    c.mu = std::move(mu);
    c.sigma = std::move(sigma);
    c.omega = std::move(omega);
    c.theta = std::move(theta);
    c.q = q;
    c.validate();
    return c;
}

SupBounds sup_bounds(const CoefficientSet& c) {
    return SupBounds{max_of(c.lambda), min_of(c.lambda), max_of(c.mu),      min_of(c.mu),     max_of(c.sigma),
                     max_of(c.omega),  max_of(c.theta),  sup_of(c.dlambda), sup_of(c.dmu)};
}

CoefficientSet gamma_family(double gamma, std::size_t m) {
    if (!(gamma > 0.0)) throw InvalidArgument("gamma_family: gamma must be positive");
    if (m < 2) throw InvalidArgument("gamma_family: need m >= 2");
    IntervalGrid g(m - 1);
    CoefficientSet c;
    for (auto* a : {&c.lambda, &c.mu, &c.dlambda, &c.dmu, &c.sigma, &c.omega, &c.theta}) a->resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double x = g.x(i);
        const double e = std::exp(gamma * x);
        c.lambda[i] = gamma * x + 1.0;
        c.dlambda[i] = gamma;
        c.mu[i] = e + 1.0;
        c.dmu[i] = gamma * e;
        c.sigma[i] = gamma * (x + 1.0);
        c.theta[i] = gamma * (x + 1.0);
        c.omega[i] = 5.0 * (std::cosh(x) + 1.0);
    }
    c.q = gamma / 2.0;
    return c;
}

void CoefficientFamily::validate() const {
    if (!(gamma_min > 0.0) || !(gamma_max >= gamma_min))
        throw InvalidArgument("CoefficientFamily: gamma range must satisfy 0 < min <= max");
    if (!(amplitude >= 0.0 && amplitude <= 0.5))
        throw InvalidArgument("CoefficientFamily: amplitude must lie in [0, 0.5]");
    if (m < 2) throw InvalidArgument("CoefficientFamily: need m >= 2");
}

std::string CoefficientFamily::describe() const {
    std::ostringstream os;
    if (kind == Kind::GammaFamily)
        os << "gamma[" << gamma_min << "," << gamma_max << "]";
    else
        os << "random_smooth[" << gamma_min << "," << gamma_max << "]a=" << amplitude;
    os << ",m=" << m;
    return os.str();
}

CoefficientFamily CoefficientFamily::gamma(double lo, double hi, std::size_t m) {
    CoefficientFamily f;
    f.kind = Kind::GammaFamily;
    f.gamma_min = lo;
    f.gamma_max = hi;
    f.m = m;
    f.validate();
    return f;
}

CoefficientFamily CoefficientFamily::random_smooth(double lo, double hi, double amplitude, std::size_t m) {
    CoefficientFamily f;
    f.kind = Kind::RandomSmooth;
    f.gamma_min = lo;
    f.gamma_max = hi;
    f.amplitude = amplitude;
    f.m = m;
    f.validate();
    return f;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

CoefficientSet sample_random(const CoefficientFamily& family, std::uint64_t seed) {
    family.validate();
    std::mt19937_64 rng(splitmix64(seed));
    // Explicit mapping of raw 64-bit draws keeps the stream identical across standard libraries.
    auto uniform = [&rng](double lo, double hi) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    };
    const double gamma = uniform(family.gamma_min, family.gamma_max);
    if (family.kind == CoefficientFamily::Kind::GammaFamily) return gamma_family(gamma, family.m);

    const double a = family.amplitude;
    auto draw = [&]() { return Perturbation{uniform(-0.5, 0.5), uniform(-0.5, 0.5), a}; };
    const Perturbation pl = draw(), pm = draw(), ps = draw(), po = draw(), pt = draw();
    const double q_scale = 1.0 + a * uniform(-1.0, 1.0);

    IntervalGrid g(family.m - 1);
    CoefficientSet c;
    for (auto* arr : {&c.lambda, &c.mu, &c.dlambda, &c.dmu, &c.sigma, &c.omega, &c.theta}) arr->resize(family.m);
    for (std::size_t i = 0; i < family.m; ++i) {
        const double x = g.x(i);
        // Speeds are 0.1 + (positive base) * (multiplier >= 0.5), hence >= 0.1.
        const double lb = gamma * x + 0.9;
        const double e = std::exp(gamma * x);
        const double mb = e + 0.9;
        c.lambda[i] = 0.1 + lb * pl.value(x);
        c.dlambda[i] = gamma * pl.value(x) + lb * pl.slope(x);
        c.mu[i] = 0.1 + mb * pm.value(x);
        c.dmu[i] = gamma * e * pm.value(x) + mb * pm.slope(x);
        c.sigma[i] = gamma * (x + 1.0) * ps.value(x);
        c.theta[i] = gamma * (x + 1.0) * pt.value(x);
        c.omega[i] = 5.0 * (std::cosh(x) + 1.0) * po.value(x);
    }
    c.q = 0.5 * gamma * q_scale;
    return c;
}

}  // namespace bkst
