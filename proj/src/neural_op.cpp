#include "bkst/neural_op.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <tuple>

#include "binary_io.hpp"

namespace bkst {

namespace {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

constexpr char kMagic[4] = {'N', 'O', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Mlp make_mlp(const std::vector<std::size_t>& dims, std::mt19937_64* rng) {
    Mlp m;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(dims[l]);
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        DenseLayer layer{Matrix::Zero(out, in), Vector::Zero(out)};
        if (rng) {
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            for (Eigen::Index r = 0; r < out; ++r)
                for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = limit * (2.0 * unit_uniform(*rng) - 1.0);
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<std::size_t> branch_dims(const Architecture& a) {
    std::vector<std::size_t> d{a.feature_dim()};
    d.insert(d.end(), a.branch_hidden.begin(), a.branch_hidden.end());
    d.push_back(2 * a.p);
    return d;
}

std::vector<std::size_t> trunk_dims(const Architecture& a) {
    std::vector<std::size_t> d{2};
    d.insert(d.end(), a.trunk_hidden.begin(), a.trunk_hidden.end());
    d.push_back(a.p);
    return d;
}

// Single-input evaluation. Every inference path goes through here, so predictions
// do not depend on how points or samples are batched.
std::vector<double> eval_single(const Mlp& mlp, const std::vector<double>& input) {
    Vector x = Eigen::Map<const Vector>(input.data(), static_cast<Eigen::Index>(input.size()));
    Vector y;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const DenseLayer& L = mlp.layers[l];
        y = L.bias;
        y.noalias() += L.weight * x;
        if (l + 1 < mlp.layers.size()) y = y.array().tanh().matrix();
        x.swap(y);
    }
    return std::vector<double>(x.data(), x.data() + x.size());
}

std::vector<double> normalized(const DeepONetModel& m, std::span<const double> features) {
    if (features.size() != static_cast<std::size_t>(m.input_mean.size()))
        throw InvalidArgument("DeepONet: feature length " + std::to_string(features.size()) + " does not match model input " +
                              std::to_string(m.input_mean.size()));
    std::vector<double> z(features.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        const auto e = static_cast<Eigen::Index>(k);
        z[k] = (features[k] - m.input_mean[e]) / m.input_scale[e];
    }
    return z;
}

std::vector<double> branch_output(const DeepONetModel& m, std::span<const double> features) {
    return eval_single(m.branch, normalized(m, features));
}

// Trunk outputs for a point list, p values per point.
std::vector<double> trunk_table(const DeepONetModel& m, std::span<const QueryPoint> points) {
    std::vector<double> t(points.size() * m.p);
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto [x, xi] = points[k];
        if (!(xi >= -1e-12 && xi <= x + 1e-12 && x <= 1.0 + 1e-12))
            throw InvalidArgument("DeepONet: query point outside the triangle 0 <= xi <= x <= 1");
        const std::vector<double> out = eval_single(m.trunk, {x, xi});
        std::copy(out.begin(), out.end(), t.begin() + static_cast<std::ptrdiff_t>(k * m.p));
    }
    return t;
}

// k_hat_i at point k from a branch vector and a trunk table.
double combine(const std::vector<double>& branch, const std::vector<double>& table, std::size_t p, std::size_t k,
               std::size_t which, double bias) {
    double s = 0.0;
    const double* t = table.data() + k * p;
    const double* b = branch.data() + which * p;
    for (std::size_t r = 0; r < p; ++r) s += b[r] * t[r];
    return s + bias;
}

std::vector<QueryPoint> grid_points(const TriangularGrid& g) {
    std::vector<QueryPoint> pts;
    pts.reserve(g.size());
    for (std::size_t i = 0; i <= g.n(); ++i)
        for (std::size_t j = 0; j <= i; ++j) pts.push_back({g.x(i), g.x(j)});
    return pts;
}

std::vector<QueryPoint> gain_points(const IntervalGrid& g) {
    std::vector<QueryPoint> pts;
    for (std::size_t j = 0; j < g.size(); ++j) pts.push_back({1.0, g.x(j)});
    return pts;
}

// ---- batched training path ----

struct MlpGrad {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
};

MlpGrad zero_grad(const Mlp& m) {
    MlpGrad g;
    for (const DenseLayer& L : m.layers) {
        g.dW.push_back(Matrix::Zero(L.weight.rows(), L.weight.cols()));
        g.db.push_back(Vector::Zero(L.bias.size()));
    }
    return g;
}

// acts[0] is the input, acts[l + 1] the output of layer l. Columns are samples.
void forward_batch(const Mlp& m, const Matrix& in, std::vector<Matrix>& acts) {
    acts.resize(m.layers.size() + 1);
    acts[0] = in;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const DenseLayer& L = m.layers[l];
        acts[l + 1].noalias() = L.weight * acts[l];
        acts[l + 1].colwise() += L.bias;
        if (l + 1 < m.layers.size()) acts[l + 1] = acts[l + 1].array().tanh().matrix();
    }
}

void backward_batch(const Mlp& m, const std::vector<Matrix>& acts, Matrix d_out, MlpGrad& g) {
    for (std::size_t l = m.layers.size(); l-- > 0;) {
        if (l + 1 < m.layers.size()) d_out = (d_out.array() * (1.0 - acts[l + 1].array().square())).matrix();
        g.dW[l].noalias() = d_out * acts[l].transpose();
        g.db[l] = d_out.rowwise().sum();
        if (l > 0) d_out = m.layers[l].weight.transpose() * d_out;
    }
}

struct ModelGrad {
    MlpGrad branch, trunk;
    double b1 = 0.0, b2 = 0.0;
};

// Features (normalized, one column per sample) and targets (one row per sample).
struct TrainingData {
    Matrix features;
    RowMatrix k1, k2;
    Matrix points;  // 2 x nodes
};

TrainingData prepare(const DeepONetModel& model, const Dataset& d, std::span<const std::size_t> indices) {
    const TriangularGrid g = d.grid();
    TrainingData td;
    const auto F = static_cast<Eigen::Index>(model.input_mean.size());
    const auto S = static_cast<Eigen::Index>(indices.size());
    const auto N = static_cast<Eigen::Index>(g.size());
    td.features.resize(F, S);
    td.k1.resize(S, N);
    td.k2.resize(S, N);
    for (Eigen::Index s = 0; s < S; ++s) {
        const std::size_t idx = indices[static_cast<std::size_t>(s)];
        const std::vector<double> z = normalized(model, encode_input(d.coefficients(idx), model.m_enc));
        for (Eigen::Index f = 0; f < F; ++f) td.features(f, s) = z[static_cast<std::size_t>(f)];
        for (Eigen::Index k = 0; k < N; ++k) {
            td.k1(s, k) = d.samples[idx].k1[static_cast<std::size_t>(k)];
            td.k2(s, k) = d.samples[idx].k2[static_cast<std::size_t>(k)];
        }
    }
    td.points.resize(2, N);
    const auto pts = grid_points(g);
    for (Eigen::Index k = 0; k < N; ++k) {
        td.points(0, k) = pts[static_cast<std::size_t>(k)][0];
        td.points(1, k) = pts[static_cast<std::size_t>(k)][1];
    }
    return td;
}

// Loss = sum of squared errors of both kernels / (2 * samples * nodes), i.e. the MSE over all outputs.
double batch_loss_grad(const DeepONetModel& model, const TrainingData& td, const std::vector<Eigen::Index>& cols,
                       ModelGrad* grad) {
    const auto B = static_cast<Eigen::Index>(cols.size());
    const auto N = td.points.cols();
    const auto p = static_cast<Eigen::Index>(model.p);
    Matrix X(td.features.rows(), B);
    RowMatrix Y1(B, N), Y2(B, N);
    for (Eigen::Index b = 0; b < B; ++b) {
        X.col(b) = td.features.col(cols[static_cast<std::size_t>(b)]);
        Y1.row(b) = td.k1.row(cols[static_cast<std::size_t>(b)]);
        Y2.row(b) = td.k2.row(cols[static_cast<std::size_t>(b)]);
    }
    std::vector<Matrix> ba, ta;
    forward_batch(model.branch, X, ba);
    forward_batch(model.trunk, td.points, ta);
    const Matrix& Bo = ba.back();  // 2p x B
    const Matrix& To = ta.back();  // p x N

    Matrix E1 = Bo.topRows(p).transpose() * To;
    Matrix E2 = Bo.bottomRows(p).transpose() * To;
    E1.array() += model.b1 - Y1.array();
    E2.array() += model.b2 - Y2.array();
    const double denom = 2.0 * static_cast<double>(B) * static_cast<double>(N);
    const double loss = (E1.squaredNorm() + E2.squaredNorm()) / denom;
    if (!grad) return loss;

    E1 *= 2.0 / denom;
    E2 *= 2.0 / denom;
    grad->b1 = E1.sum();
    grad->b2 = E2.sum();
    Matrix dBo(2 * p, B);
    dBo.topRows(p).noalias() = To * E1.transpose();
    dBo.bottomRows(p).noalias() = To * E2.transpose();
    Matrix dTo = Bo.topRows(p) * E1;
    dTo.noalias() += Bo.bottomRows(p) * E2;
    grad->branch = zero_grad(model.branch);
    grad->trunk = zero_grad(model.trunk);
    backward_batch(model.branch, ba, std::move(dBo), grad->branch);
    backward_batch(model.trunk, ta, std::move(dTo), grad->trunk);
    return loss;
}

struct AdamState {
    ModelGrad m, v;
    std::size_t t = 0;
};

template <class P, class G>
void adam_update(P& param, const G& g, G& m, G& v, double lr, double b1c, double b2c, const TrainConfig& c) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param -= (lr * (m / b1c).array() / ((v / b2c).array().sqrt() + c.adam_epsilon)).matrix();
}

void adam_step(DeepONetModel& model, const ModelGrad& g, AdamState& st, double lr, const TrainConfig& c) {
    ++st.t;
    const double b1c = 1.0 - std::pow(c.beta1, static_cast<double>(st.t));
    const double b2c = 1.0 - std::pow(c.beta2, static_cast<double>(st.t));
    auto net = [&](Mlp& mlp, const MlpGrad& gr, MlpGrad& m, MlpGrad& v) {
        for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
            adam_update(mlp.layers[l].weight, gr.dW[l], m.dW[l], v.dW[l], lr, b1c, b2c, c);
            adam_update(mlp.layers[l].bias, gr.db[l], m.db[l], v.db[l], lr, b1c, b2c, c);
        }
    };
    net(model.branch, g.branch, st.m.branch, st.v.branch);
    net(model.trunk, g.trunk, st.m.trunk, st.v.trunk);
    auto scalar = [&](double& param, double gr, double& m, double& v) {
        m = c.beta1 * m + (1.0 - c.beta1) * gr;
        v = c.beta2 * v + (1.0 - c.beta2) * gr * gr;
        param -= lr * (m / b1c) / (std::sqrt(v / b2c) + c.adam_epsilon);
    };
    scalar(model.b1, g.b1, st.m.b1, st.v.b1);
    scalar(model.b2, g.b2, st.m.b2, st.v.b2);
}

template <class Fn>
void for_each_parameter_block(DeepONetModel& m, Fn&& fn) {
    for (Mlp* net : {&m.branch, &m.trunk})
        for (DenseLayer& L : net->layers) fn(L.weight.data(), L.weight.size(), true, L.weight.rows(), L.weight.cols());
    for (Mlp* net : {&m.branch, &m.trunk})
        for (DenseLayer& L : net->layers) fn(L.bias.data(), L.bias.size(), false, L.bias.size(), Eigen::Index{1});
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace

// ---- model structure ----

std::vector<std::size_t> Mlp::dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(input_dim());
    for (const DenseLayer& L : layers) d.push_back(static_cast<std::size_t>(L.weight.rows()));
    return d;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& L : layers) n += static_cast<std::size_t>(L.weight.size() + L.bias.size());
    return n;
}

void Mlp::validate(const char* name) const {
    if (layers.empty()) throw InvalidArgument(std::string(name) + ": network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& L = layers[l];
        if (L.bias.size() != L.weight.rows())
            throw InvalidArgument(std::string(name) + ": bias length does not match layer width");
        if (l > 0 && L.weight.cols() != layers[l - 1].weight.rows())
            throw InvalidArgument(std::string(name) + ": layer dimensions do not chain");
        if (!L.weight.allFinite() || !L.bias.allFinite())
            throw InvalidArgument(std::string(name) + ": non-finite parameters");
    }
}

void Architecture::validate() const {
    if (m_enc < 2) throw InvalidArgument("architecture: m_enc must be >= 2");
    if (p < 1) throw InvalidArgument("architecture: p must be >= 1");
    for (std::size_t w : branch_hidden)
        if (w < 1) throw InvalidArgument("architecture: zero-width branch layer");
    for (std::size_t w : trunk_hidden)
        if (w < 1) throw InvalidArgument("architecture: zero-width trunk layer");
}

DeepONetModel DeepONetModel::initialize(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(splitmix64(seed));
    DeepONetModel m;
    m.m_enc = arch.m_enc;
    m.p = arch.p;
    m.branch = make_mlp(branch_dims(arch), &rng);
    m.trunk = make_mlp(trunk_dims(arch), &rng);
    m.input_mean = Vector::Zero(static_cast<Eigen::Index>(arch.feature_dim()));
    m.input_scale = Vector::Ones(static_cast<Eigen::Index>(arch.feature_dim()));
    return m;
}

DeepONetModel DeepONetModel::zeros(const Architecture& arch) {
    arch.validate();
    DeepONetModel m;
    m.m_enc = arch.m_enc;
    m.p = arch.p;
    m.branch = make_mlp(branch_dims(arch), nullptr);
    m.trunk = make_mlp(trunk_dims(arch), nullptr);
    m.input_mean = Vector::Zero(static_cast<Eigen::Index>(arch.feature_dim()));
    m.input_scale = Vector::Ones(static_cast<Eigen::Index>(arch.feature_dim()));
    return m;
}

Architecture DeepONetModel::architecture() const {
    Architecture a;
    a.m_enc = m_enc;
    a.p = p;
    const auto bd = branch.dims(), td = trunk.dims();
    a.branch_hidden.assign(bd.begin() + 1, bd.end() - 1);
    a.trunk_hidden.assign(td.begin() + 1, td.end() - 1);
    return a;
}

std::size_t DeepONetModel::parameter_count() const { return branch.parameter_count() + trunk.parameter_count() + 2; }

void DeepONetModel::validate() const {
    if (m_enc < 2 || p < 1) throw InvalidArgument("DeepONet: m_enc >= 2 and p >= 1 required");
    branch.validate("branch");
    trunk.validate("trunk");
    if (branch.input_dim() != 5 * m_enc + 1) throw InvalidArgument("DeepONet: branch input must be 5 m_enc + 1");
    if (branch.output_dim() != 2 * p) throw InvalidArgument("DeepONet: branch output must be 2p");
    if (trunk.input_dim() != 2 || trunk.output_dim() != p)
        throw InvalidArgument("DeepONet: trunk must map 2 inputs to p outputs");
    if (input_mean.size() != static_cast<Eigen::Index>(5 * m_enc + 1) || input_scale.size() != input_mean.size())
        throw InvalidArgument("DeepONet: normalization vectors have the wrong length");
    if (!input_mean.allFinite() || !input_scale.allFinite() || (input_scale.array() <= 0.0).any())
        throw InvalidArgument("DeepONet: normalization scale must be positive and finite");
    if (!std::isfinite(b1) || !std::isfinite(b2)) throw InvalidArgument("DeepONet: non-finite output bias");
}

// ---- inference ----

std::vector<double> encode_input(const CoefficientSet& coeffs, std::size_t m_enc) {
    if (m_enc < 2) throw InvalidArgument("encode_input: m_enc must be >= 2");
    const IntervalGrid g(m_enc - 1);
    std::vector<double> f;
    f.reserve(5 * m_enc + 1);
    for (const auto* a : {&coeffs.lambda, &coeffs.mu, &coeffs.sigma, &coeffs.omega, &coeffs.theta})
        for (std::size_t k = 0; k < m_enc; ++k) f.push_back(interp_linear(*a, g.x(k)));
    f.push_back(coeffs.q);
    return f;
}

KernelPrediction forward(const DeepONetModel& model, std::span<const double> features,
                         std::span<const QueryPoint> points) {
    const std::vector<double> b = branch_output(model, features);
    const std::vector<double> t = trunk_table(model, points);
    KernelPrediction out;
    out.k1.resize(points.size());
    out.k2.resize(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        out.k1[k] = combine(b, t, model.p, k, 0, model.b1);
        out.k2[k] = combine(b, t, model.p, k, 1, model.b2);
    }
    return out;
}

KernelSet predict_kernels(const DeepONetModel& model, const CoefficientSet& coeffs, const TriangularGrid& grid) {
    const auto pts = grid_points(grid);
    KernelPrediction pr = forward(model, encode_input(coeffs, model.m_enc), pts);
    return KernelSet{KernelField(grid, std::move(pr.k1)), KernelField(grid, std::move(pr.k2)), {}, {}, {}, {}};
}

GainBasis::GainBasis(const DeepONetModel& model, const IntervalGrid& xi_grid)
    : model_(&model), grid_(xi_grid), basis_(trunk_table(model, gain_points(xi_grid))) {}

GainVector GainBasis::infer(const CoefficientSet& coeffs) const {
    const DeepONetModel& m = *model_;
    const std::vector<double> b = branch_output(m, encode_input(coeffs, m.m_enc));
    std::vector<double> g1(grid_.size()), g2(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        g1[k] = combine(b, basis_, m.p, k, 0, m.b1);
        g2[k] = combine(b, basis_, m.p, k, 1, m.b2);
    }
    return GainVector(grid_, std::move(g1), std::move(g2));
}

GainVector infer_gains(const DeepONetModel& model, const CoefficientSet& coeffs, const IntervalGrid& xi_grid) {
    return GainBasis(model, xi_grid).infer(coeffs);
}

// ---- training ----

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw InvalidArgument("train: epochs and batch size must be positive");
    if (!(learning_rate > 0.0) || !(lr_final_fraction > 0.0)) throw InvalidArgument("train: learning rates must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train: split fraction must lie in (0, 1)");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && adam_epsilon > 0.0))
        throw InvalidArgument("train: Adam moments must lie in (0, 1) and epsilon be positive");
    arch.validate();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_fraction,
                                                                             std::uint64_t seed) {
    if (n == 0) throw InvalidArgument("split_indices: no samples");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw InvalidArgument("split_indices: fraction must lie in (0, 1]");
    std::mt19937_64 rng(splitmix64(seed ^ 0x5eedULL));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n);
    return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train)),
            std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end())};
}

void fit_normalization(DeepONetModel& model, const Dataset& dataset, std::span<const std::size_t> indices) {
    if (indices.empty()) throw InvalidArgument("fit_normalization: no samples");
    const auto F = static_cast<Eigen::Index>(5 * model.m_enc + 1);
    // Accumulate in sorted index order so the result does not depend on sample order.
    std::vector<std::size_t> order(indices.begin(), indices.end());
    std::sort(order.begin(), order.end());
    Vector sum = Vector::Zero(F), sq = Vector::Zero(F);
    std::vector<std::vector<double>> feats;
    for (std::size_t i : order) feats.push_back(encode_input(dataset.coefficients(i), model.m_enc));
    for (const auto& f : feats)
        for (Eigen::Index k = 0; k < F; ++k) sum[k] += f[static_cast<std::size_t>(k)];
    const double n = static_cast<double>(feats.size());
    model.input_mean = sum / n;
    for (const auto& f : feats)
        for (Eigen::Index k = 0; k < F; ++k) {
            const double d = f[static_cast<std::size_t>(k)] - model.input_mean[k];
            sq[k] += d * d;
        }
    model.input_scale.resize(F);
    for (Eigen::Index k = 0; k < F; ++k) {
        const double sd = std::sqrt(sq[k] / n);
        model.input_scale[k] = sd > 1e-12 * (1.0 + std::abs(model.input_mean[k])) ? sd : 1.0;
    }
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainProgress& progress) {
    config.validate();
    if (dataset.size() == 0) throw InvalidArgument("train: empty dataset");
    dataset.validate();

    TrainResult res;
    std::tie(res.train_indices, res.test_indices) = split_indices(dataset.size(), config.train_fraction, config.seed);
    const std::size_t n_train = res.train_indices.size();
    std::mt19937_64 rng(splitmix64(config.seed ^ 0xba7c4ULL));
    const Dataset test_set = dataset.subset(res.test_indices);

    DeepONetModel model = DeepONetModel::initialize(config.arch, config.seed);
    fit_normalization(model, dataset, res.train_indices);
    const TrainingData td = prepare(model, dataset, res.train_indices);

    AdamState st;
    st.m.branch = zero_grad(model.branch);
    st.m.trunk = zero_grad(model.trunk);
    st.v = st.m;

    std::vector<std::size_t> cols(n_train);
    std::iota(cols.begin(), cols.end(), 0);
    const double decay = config.epochs > 1 ? std::pow(config.lr_final_fraction, 1.0 / static_cast<double>(config.epochs - 1)) : 1.0;
    double lr = config.learning_rate;
    ModelGrad g;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(cols, rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n_train; start += config.batch_size) {
            const std::size_t stop = std::min(n_train, start + config.batch_size);
            std::vector<Eigen::Index> batch(cols.begin() + static_cast<std::ptrdiff_t>(start),
                                            cols.begin() + static_cast<std::ptrdiff_t>(stop));
            const double loss = batch_loss_grad(model, td, batch, &g);
            if (!std::isfinite(loss))
                throw NumericalError("train: loss became non-finite at epoch " + std::to_string(epoch + 1) + ", batch " +
                                     std::to_string(batches + 1) + "; lower the learning rate");
            adam_step(model, g, st, lr, config);
            loss_sum += loss;
            ++batches;
        }
        res.history.train_loss.push_back(loss_sum / static_cast<double>(batches));
        double r1 = std::nan(""), r2 = std::nan("");
        if (test_set.size() > 0) {
            const EvalResult e = evaluate(model, test_set);
            r1 = e.rel_k1;
            r2 = e.rel_k2;
            res.history.test_rel_k1.push_back(r1);
            res.history.test_rel_k2.push_back(r2);
        }
        if (progress) progress(epoch + 1, res.history.train_loss.back(), r1, r2);
        lr *= decay;
    }
    res.model = std::move(model);
    return res;
}

EvalResult evaluate(const DeepONetModel& model, const Dataset& dataset) {
    const TriangularGrid g = dataset.grid();
    const std::vector<double> w = triangle_weights(g);
    const std::vector<double> table = trunk_table(model, grid_points(g));
    EvalResult r;
    r.samples = dataset.size();
    double sum1 = 0.0, sum2 = 0.0;
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const std::vector<double> b = branch_output(model, encode_input(dataset.coefficients(s), model.m_enc));
        double e1 = 0, n1 = 0, e2 = 0, n2 = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double t1 = dataset.samples[s].k1[k], t2 = dataset.samples[s].k2[k];
            const double d1 = combine(b, table, model.p, k, 0, model.b1) - t1;
            const double d2 = combine(b, table, model.p, k, 1, model.b2) - t2;
            e1 += w[k] * d1 * d1;
            n1 += w[k] * t1 * t1;
            e2 += w[k] * d2 * d2;
            n2 += w[k] * t2 * t2;
        }
        if (n1 > 0.0) sum1 += std::sqrt(e1 / n1); else ++r.skipped_k1;
        if (n2 > 0.0) sum2 += std::sqrt(e2 / n2); else ++r.skipped_k2;
    }
    const std::size_t c1 = r.samples - r.skipped_k1, c2 = r.samples - r.skipped_k2;
    r.rel_k1 = c1 > 0 ? sum1 / static_cast<double>(c1) : 0.0;
    r.rel_k2 = c2 > 0 ? sum2 / static_cast<double>(c2) : 0.0;
    return r;
}

// ---- parameters and gradients ----

std::vector<double> flatten_parameters(const DeepONetModel& model) {
    std::vector<double> out;
    out.reserve(model.parameter_count());
    DeepONetModel& m = const_cast<DeepONetModel&>(model);
    for_each_parameter_block(m, [&](double* data, Eigen::Index size, bool is_weight, Eigen::Index rows, Eigen::Index cols) {
        if (!is_weight) {
            out.insert(out.end(), data, data + size);
            return;
        }
        // Column-major storage, row-major order.
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) out.push_back(data[c * rows + r]);
    });
    out.push_back(model.b1);
    out.push_back(model.b2);
    return out;
}

void assign_parameters(DeepONetModel& model, std::span<const double> params) {
    if (params.size() != model.parameter_count())
        throw InvalidArgument("assign_parameters: expected " + std::to_string(model.parameter_count()) + " values");
    std::size_t k = 0;
    for_each_parameter_block(model, [&](double* data, Eigen::Index size, bool is_weight, Eigen::Index rows, Eigen::Index cols) {
        if (!is_weight) {
            for (Eigen::Index e = 0; e < size; ++e) data[e] = params[k++];
            return;
        }
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) data[c * rows + r] = params[k++];
    });
    model.b1 = params[k++];
    model.b2 = params[k++];
}

LossGradient loss_and_gradient(const DeepONetModel& model, const Dataset& dataset,
                               std::span<const std::size_t> indices) {
    if (indices.empty()) throw InvalidArgument("loss_and_gradient: no samples");
    const TrainingData td = prepare(model, dataset, indices);
    std::vector<Eigen::Index> cols(indices.size());
    std::iota(cols.begin(), cols.end(), 0);
    ModelGrad g;
    LossGradient out;
    out.loss = batch_loss_grad(model, td, cols, &g);

    // Pack the gradient through a model-shaped carrier to reuse the parameter ordering.
    DeepONetModel carrier = model;
    for (std::size_t l = 0; l < carrier.branch.layers.size(); ++l) {
        carrier.branch.layers[l].weight = g.branch.dW[l];
        carrier.branch.layers[l].bias = g.branch.db[l];
    }
    for (std::size_t l = 0; l < carrier.trunk.layers.size(); ++l) {
        carrier.trunk.layers[l].weight = g.trunk.dW[l];
        carrier.trunk.layers[l].bias = g.trunk.db[l];
    }
    carrier.b1 = g.b1;
    carrier.b2 = g.b2;
    out.gradient = flatten_parameters(carrier);
    return out;
}

// ---- persistence ----

void write_model(const DeepONetModel& model, const std::string& path) {
    model.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_model: cannot open " + path);
    os.write(kMagic, 4);
    io::put_u32(os, kVersion);
    io::put_u32(os, io::checked_u32(model.m_enc, "m_enc"));
    io::put_u32(os, io::checked_u32(model.p, "p"));
    for (const Mlp* net : {&model.branch, &model.trunk}) {
        const auto dims = net->dims();
        io::put_u32(os, io::checked_u32(dims.size(), "layer count"));
        for (std::size_t d : dims) io::put_u32(os, io::checked_u32(d, "layer width"));
    }
    const std::vector<double> params = flatten_parameters(model);
    io::put_f64s(os, std::span<const double>(params.data(), params.size() - 2));
    io::put_f64s(os, std::span<const double>(model.input_mean.data(), static_cast<std::size_t>(model.input_mean.size())));
    io::put_f64s(os, std::span<const double>(model.input_scale.data(), static_cast<std::size_t>(model.input_scale.size())));
    io::put_f64(os, model.b1);
    io::put_f64(os, model.b2);
    if (!os.flush()) throw std::runtime_error("write_model: write to " + path + " failed");
}

DeepONetModel read_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_model: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        throw io::FormatError("read_model: " + path + " is not a model file (bad magic)");
    auto need = [&](bool ok, const char* what) {
        if (!ok) throw io::FormatError(std::string("read_model: file truncated in ") + what);
    };
    std::uint32_t version = 0, m_enc = 0, p = 0;
    need(io::get_u32(is, version), "header");
    if (version != kVersion) throw io::FormatError("read_model: unsupported version " + std::to_string(version));
    need(io::get_u32(is, m_enc) && io::get_u32(is, p), "header");

    auto read_dims = [&](const char* what) {
        std::uint32_t count = 0;
        need(io::get_u32(is, count), what);
        if (count < 2 || count > 64) throw io::FormatError(std::string("read_model: implausible ") + what + " layer count");
        std::vector<std::size_t> dims(count);
        for (auto& d : dims) {
            std::uint32_t v = 0;
            need(io::get_u32(is, v), what);
            if (v < 1 || v > (1u << 20)) throw io::FormatError(std::string("read_model: implausible ") + what + " width");
            d = v;
        }
        return dims;
    };
    const auto bd = read_dims("branch dims");
    const auto td = read_dims("trunk dims");

    DeepONetModel m;
    m.m_enc = m_enc;
    m.p = p;
    m.branch = make_mlp(bd, nullptr);
    m.trunk = make_mlp(td, nullptr);
    std::vector<double> params;
    need(io::get_f64s(is, params, m.parameter_count() - 2), "parameters");
    params.push_back(0.0);
    params.push_back(0.0);
    assign_parameters(m, params);
    std::vector<double> mean, scale;
    const std::size_t F = bd.front();
    need(io::get_f64s(is, mean, F) && io::get_f64s(is, scale, F), "normalization");
    m.input_mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(F));
    m.input_scale = Eigen::Map<const Vector>(scale.data(), static_cast<Eigen::Index>(F));
    need(io::get_f64(is, m.b1) && io::get_f64(is, m.b2), "output biases");
    if (is.peek() != std::char_traits<char>::eof()) throw io::FormatError("read_model: trailing bytes after output biases");
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        throw io::FormatError(std::string("read_model: inconsistent model: ") + e.what());
    }
    return m;
}

}  // namespace bkst
