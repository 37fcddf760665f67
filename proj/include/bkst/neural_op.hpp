#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bkst/coefficients.hpp"
#include "bkst/data_store.hpp"
#include "bkst/gain_vector.hpp"
#include "bkst/kernel_solver.hpp"

namespace bkst {

/// Affine map followed by tanh on hidden layers; the last layer is linear.
struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

struct Mlp {
    std::vector<DenseLayer> layers;

    /// Layer widths, input first.
    std::vector<std::size_t> dims() const;
    std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weight.rows()); }
    std::size_t parameter_count() const;
    /// Throws unless consecutive layers chain and every entry is finite.
    void validate(const char* name) const;
};

struct Architecture {
    std::size_t m_enc = 21;
    std::size_t p = 64;
    std::vector<std::size_t> branch_hidden{128, 128};
    std::vector<std::size_t> trunk_hidden{128, 128};

    std::size_t feature_dim() const { return 5 * m_enc + 1; }
    void validate() const;
};

/**
 * Branch-trunk operator network. The branch maps normalized coefficient
 * features to 2p coefficients, the trunk maps (x, xi) to p basis values and
 *   k_hat_i(x, xi) = sum_r branch[(i-1) p + r] trunk[r] + b_i.
 */
struct DeepONetModel {
    std::size_t m_enc = 0;
    std::size_t p = 0;
    Mlp branch, trunk;
    Eigen::VectorXd input_mean, input_scale;
    double b1 = 0.0, b2 = 0.0;

    /// Glorot-uniform weights, zero biases, identity normalization.
    static DeepONetModel initialize(const Architecture& arch, std::uint64_t seed);
    /// All weights and biases zero.
    static DeepONetModel zeros(const Architecture& arch);

    Architecture architecture() const;
    std::size_t parameter_count() const;
    void validate() const;
};

/// [lambda, mu, sigma, omega, theta] at m_enc uniform nodes, then q.
std::vector<double> encode_input(const CoefficientSet& coeffs, std::size_t m_enc);

using QueryPoint = std::array<double, 2>;  // (x, xi)

struct KernelPrediction {
    std::vector<double> k1, k2;
};

/// Prediction at arbitrary points of the triangle. Deterministic and independent of batching.
KernelPrediction forward(const DeepONetModel& model, std::span<const double> features,
                         std::span<const QueryPoint> points);

/// Dense prediction on every node of the grid, packaged as kernel fields.
KernelSet predict_kernels(const DeepONetModel& model, const CoefficientSet& coeffs, const TriangularGrid& grid);

/// Gains k_hat_i(1, xi_j) on the given xi grid.
GainVector infer_gains(const DeepONetModel& model, const CoefficientSet& coeffs, const IntervalGrid& xi_grid);

/**
 * Trunk outputs at the gain points (1, xi_j), computed once per model and
 * grid. Gains for a new plant then cost one branch pass and p-term dot
 * products. Results equal infer_gains bit for bit.
 */
class GainBasis {
public:
    GainBasis(const DeepONetModel& model, const IntervalGrid& xi_grid);
    GainVector infer(const CoefficientSet& coeffs) const;
    const IntervalGrid& grid() const { return grid_; }

private:
    const DeepONetModel* model_;
    IntervalGrid grid_;
    std::vector<double> basis_;  // p values per point, point-major
};

struct TrainConfig {
    std::size_t epochs = 800;
    std::size_t batch_size = 32;
    double learning_rate = 2e-3;
    /// Learning rate at the final epoch relative to the first; geometric in between.
    double lr_final_fraction = 0.01;
    std::uint64_t seed = 0;
    double train_fraction = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Architecture arch;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;   // mean over the epoch's batches
    std::vector<double> test_rel_k1;  // empty when the test split is empty
    std::vector<double> test_rel_k2;
};

struct TrainResult {
    DeepONetModel model;
    TrainHistory history;
    std::vector<std::size_t> train_indices, test_indices;
};

/// Seeded shuffle of 0..n-1 split into (train, test); the train part keeps round(fraction n) >= 1 indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                             std::uint64_t seed);

using TrainProgress = std::function<void(std::size_t epoch, double loss, double rel_k1, double rel_k2)>;

/**
 * Seeded shuffle split, then Adam on the plain node-wise MSE of both kernels.
 * Throws NumericalError if the loss turns non-finite. With train_fraction such
 * that the test split would be empty, all samples train and no test curve is kept.
 */
TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainProgress& progress = {});

struct EvalResult {
    double rel_k1 = 0.0, rel_k2 = 0.0;  // mean over counted samples
    std::size_t samples = 0;
    std::size_t skipped_k1 = 0, skipped_k2 = 0;  // samples whose true kernel has zero norm
};

/// Trapezoid-weighted relative L2 error per kernel, averaged over samples.
EvalResult evaluate(const DeepONetModel& model, const Dataset& dataset);

/// Parameters in file order: branch weights, trunk weights (row-major), branch biases, trunk biases, b1, b2.
std::vector<double> flatten_parameters(const DeepONetModel& model);
void assign_parameters(DeepONetModel& model, std::span<const double> params);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // same order as flatten_parameters
};

/// Training loss over the selected samples and its exact gradient by backpropagation.
LossGradient loss_and_gradient(const DeepONetModel& model, const Dataset& dataset,
                               std::span<const std::size_t> indices);

/// Freezes per-feature mean and scale from the selected samples; constant features get scale 1.
void fit_normalization(DeepONetModel& model, const Dataset& dataset, std::span<const std::size_t> indices);

void write_model(const DeepONetModel& model, const std::string& path);
DeepONetModel read_model(const std::string& path);

}  // namespace bkst
