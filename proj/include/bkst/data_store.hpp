#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bkst/coefficients.hpp"
#include "bkst/kernel_solver.hpp"

namespace bkst {

struct DatasetSample {
    double q = 0.0;
    std::vector<double> lambda, mu, sigma, omega, theta;  // m_coeff each
    std::vector<double> k1, k2;                           // canonical triangular flattening

    bool operator==(const DatasetSample&) const = default;
};

struct Dataset {
    std::size_t m_coeff = 0;
    std::size_t n_grid = 0;
    std::vector<DatasetSample> samples;

    std::size_t size() const { return samples.size(); }
    TriangularGrid grid() const { return TriangularGrid(n_grid); }
    /// Coefficients of sample i (derivatives rebuilt by finite differences).
    CoefficientSet coefficients(std::size_t i) const;
    KernelField k1_field(std::size_t i) const;
    KernelField k2_field(std::size_t i) const;
    /// Shapes, finiteness and the two boundary identities to 1e-12.
    void validate() const;
    /// Subset in the given index order.
    Dataset subset(const std::vector<std::size_t>& indices) const;

    bool operator==(const Dataset&) const = default;
};

inline constexpr std::size_t kDefaultDatasetGrid = 50;

/**
 * Sample i draws its coefficients with seed ^ i (sample_random applies the
 * splitmix64 mix) and solves its kernels on the n_grid triangle. Samples are
 * generated in parallel when `parallel` is set; the result does not depend on it.
 */
Dataset generate(const CoefficientFamily& family, std::size_t n_samples, std::size_t m_coeff, std::size_t n_grid,
                 std::uint64_t seed, bool parallel = true);

/// Bytes written by write_dataset for the given shape.
std::uint64_t dataset_file_size(std::size_t n_samples, std::size_t m_coeff, std::size_t n_grid);

void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Human-readable sidecar: sample count, shape, family and seed.
void write_manifest(const Dataset& d, const CoefficientFamily& family, std::uint64_t seed, const std::string& path);

}  // namespace bkst
