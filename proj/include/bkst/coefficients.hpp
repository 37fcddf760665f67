#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bkst/numerics.hpp"

namespace bkst {

/**
 * Plant data: transport speeds lambda, mu (with derivatives), couplings
 * sigma, omega, theta, all sampled on one uniform grid, plus the scalar
 * boundary reflection q.
 */
struct CoefficientSet {
    std::vector<double> lambda, mu;
    std::vector<double> dlambda, dmu;
    std::vector<double> sigma, omega, theta;
    double q = 0.0;

    std::size_t nodes() const { return lambda.size(); }
    IntervalGrid grid() const { return IntervalGrid(nodes() - 1); }

    /// Throws InvalidArgument unless all arrays share one length >= 2, are finite and lambda, mu > 0.
    void validate() const;

    /// Same data on a grid with n_out cells (linear resampling, derivatives resampled likewise).
    CoefficientSet resampled(std::size_t n_out) const;

    /// Builds a set from value arrays; derivatives by centered (one-sided at ends) differences.
    static CoefficientSet from_samples(std::vector<double> lambda, std::vector<double> mu, std::vector<double> sigma,
                                       std::vector<double> omega, std::vector<double> theta, double q);
};

struct SupBounds {
    double lambda_max, lambda_min;
    double mu_max, mu_min;
    double sigma_max, omega_max, theta_max;
    double dlambda_sup, dmu_sup;
};

SupBounds sup_bounds(const CoefficientSet& c);

/// lambda = G x + 1, mu = e^{G x} + 1, sigma = theta = G (x + 1), omega = 5 (cosh x + 1), q = G / 2.
CoefficientSet gamma_family(double gamma, std::size_t m = 101);

struct CoefficientFamily {
    enum class Kind { GammaFamily, RandomSmooth };

    Kind kind = Kind::GammaFamily;
    double gamma_min = 0.5;
    double gamma_max = 5.0;
    /// Relative perturbation size for RandomSmooth, in [0, 0.5].
    double amplitude = 0.3;
    std::size_t m = 101;

    void validate() const;
    std::string describe() const;

    static CoefficientFamily gamma(double lo, double hi, std::size_t m = 101);
    static CoefficientFamily random_smooth(double lo, double hi, double amplitude, std::size_t m = 101);
};

CoefficientSet sample_random(const CoefficientFamily& family, std::uint64_t seed);

/// SplitMix64 finalizer, used to derive per-sample seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace bkst
