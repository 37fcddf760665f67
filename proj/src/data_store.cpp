#include "bkst/data_store.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <optional>
#include <string>

#include "binary_io.hpp"
#include "json.hpp"

namespace bkst {

namespace {

constexpr char kMagic[4] = {'H', 'K', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void check_shape(const DatasetSample& s, std::size_t m, std::size_t tri, std::size_t i) {
    for (const auto* a : {&s.lambda, &s.mu, &s.sigma, &s.omega, &s.theta})
        if (a->size() != m) throw InvalidArgument("dataset: sample " + std::to_string(i) + " has a coefficient array of wrong length");
    if (s.k1.size() != tri || s.k2.size() != tri)
        throw InvalidArgument("dataset: sample " + std::to_string(i) + " has a kernel array of wrong length");
}

DatasetSample make_sample(const CoefficientFamily& family, std::size_t m_coeff, const TriangularGrid& grid,
                          std::uint64_t seed) {
    CoefficientFamily f = family;
    f.m = m_coeff;
    CoefficientSet c = sample_random(f, seed);
    KernelSet ks = solve_kernels_serial(c, grid);
    return DatasetSample{c.q,
                         std::move(c.lambda),
                         std::move(c.mu),
                         std::move(c.sigma),
                         std::move(c.omega),
                         std::move(c.theta),
                         std::move(ks.k1.values),
                         std::move(ks.k2.values)};
}

}  // namespace

CoefficientSet Dataset::coefficients(std::size_t i) const {
    const DatasetSample& s = samples.at(i);
    return CoefficientSet::from_samples(s.lambda, s.mu, s.sigma, s.omega, s.theta, s.q);
}

KernelField Dataset::k1_field(std::size_t i) const { return KernelField(grid(), samples.at(i).k1); }
KernelField Dataset::k2_field(std::size_t i) const { return KernelField(grid(), samples.at(i).k2); }

void Dataset::validate() const {
    if (m_coeff < 2) throw InvalidArgument("dataset: m_coeff must be >= 2");
    if (n_grid < 2) throw InvalidArgument("dataset: n_grid must be >= 2");
    const TriangularGrid g = grid();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DatasetSample& s = samples[i];
        check_shape(s, m_coeff, g.size(), i);
        const std::string tag = "dataset: sample " + std::to_string(i);
        for (const auto* a : {&s.lambda, &s.mu, &s.sigma, &s.omega, &s.theta, &s.k1, &s.k2})
            for (double v : *a)
                if (!std::isfinite(v)) throw InvalidArgument(tag + " contains non-finite values");
        const auto lam = resample(s.lambda, n_grid);
        const auto mu = resample(s.mu, n_grid);
        const auto th = resample(s.theta, n_grid);
        for (std::size_t r = 0; r <= n_grid; ++r) {
            const double diag = s.k1[TriangularGrid::index(r, r)] + th[r] / (lam[r] + mu[r]);
            const double bottom = mu[0] * s.k2[TriangularGrid::index(r, 0)] - s.q * lam[0] * s.k1[TriangularGrid::index(r, 0)];
            if (std::abs(diag) > 1e-12 || std::abs(bottom) > 1e-12)
                throw InvalidArgument(tag + " violates a kernel boundary identity");
        }
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset d{m_coeff, n_grid, {}};
    d.samples.reserve(indices.size());
    for (std::size_t i : indices) d.samples.push_back(samples.at(i));
    return d;
}

Dataset generate(const CoefficientFamily& family, std::size_t n_samples, std::size_t m_coeff, std::size_t n_grid,
                 std::uint64_t seed, bool parallel) {
    if (n_samples < 1) throw InvalidArgument("generate: n_samples must be >= 1");
    if (m_coeff < 2) throw InvalidArgument("generate: m_coeff must be >= 2");
    family.validate();
    const TriangularGrid grid(n_grid);

    Dataset d{m_coeff, n_grid, std::vector<DatasetSample>(n_samples)};
    std::vector<std::optional<std::string>> failures(n_samples);
    const auto count = static_cast<std::ptrdiff_t>(n_samples);
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            d.samples[k] = make_sample(family, m_coeff, grid, seed ^ static_cast<std::uint64_t>(k));
        } catch (const std::exception& e) {
            failures[k] = e.what();
        }
    }
    for (std::size_t k = 0; k < n_samples; ++k)
        if (failures[k]) throw NumericalError("generate: sample " + std::to_string(k) + " failed: " + *failures[k]);
    return d;
}

std::uint64_t dataset_file_size(std::size_t n_samples, std::size_t m_coeff, std::size_t n_grid) {
    const std::uint64_t tri = (n_grid + 1) * (n_grid + 2) / 2;
    return 20 + static_cast<std::uint64_t>(n_samples) * 8 * (1 + 5 * m_coeff + 2 * tri);
}

void write_dataset(const Dataset& d, const std::string& path) {
    const std::size_t tri = d.grid().size();
    for (std::size_t i = 0; i < d.size(); ++i) check_shape(d.samples[i], d.m_coeff, tri, i);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
    os.write(kMagic, 4);
    io::put_u32(os, kVersion);
    io::put_u32(os, io::checked_u32(d.size(), "n_samples"));
    io::put_u32(os, io::checked_u32(d.m_coeff, "m_coeff"));
    io::put_u32(os, io::checked_u32(d.n_grid, "n_grid"));
    for (const DatasetSample& s : d.samples) {
        io::put_f64(os, s.q);
        for (const auto* a : {&s.lambda, &s.mu, &s.sigma, &s.omega, &s.theta}) io::put_f64s(os, *a);
        io::put_f64s(os, s.k1);
        io::put_f64s(os, s.k2);
    }
    if (!os.flush()) throw std::runtime_error("write_dataset: write to " + path + " failed");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_dataset: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        throw io::FormatError("read_dataset: " + path + " is not a dataset file (bad magic)");
    std::uint32_t version = 0, n = 0, m = 0, ng = 0;
    if (!io::get_u32(is, version)) throw io::FormatError("read_dataset: truncated header");
    if (version != kVersion) throw io::FormatError("read_dataset: unsupported version " + std::to_string(version));
    if (!io::get_u32(is, n) || !io::get_u32(is, m) || !io::get_u32(is, ng))
        throw io::FormatError("read_dataset: truncated header");
    if (m < 2 || ng < 2) throw io::FormatError("read_dataset: header declares an invalid shape");

    is.seekg(0, std::ios::end);
    const auto actual = static_cast<std::uint64_t>(is.tellg());
    is.seekg(20);
    const std::uint64_t expected = dataset_file_size(n, m, ng);

    Dataset d{m, ng, {}};
    const std::size_t tri = d.grid().size();
    if (actual < expected) {
        const std::uint64_t record = 8 * (1 + 5 * static_cast<std::uint64_t>(m) + 2 * tri);
        throw io::FormatError("read_dataset: file truncated in record " + std::to_string((actual - 20) / record) +
                              " of " + std::to_string(n));
    }
    if (actual > expected) throw io::FormatError("read_dataset: trailing bytes after the last record");

    d.samples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        DatasetSample& s = d.samples[i];
        bool ok = io::get_f64(is, s.q);
        for (auto* a : {&s.lambda, &s.mu, &s.sigma, &s.omega, &s.theta}) ok = ok && io::get_f64s(is, *a, m);
        ok = ok && io::get_f64s(is, s.k1, tri) && io::get_f64s(is, s.k2, tri);
        if (!ok) throw io::FormatError("read_dataset: file truncated in record " + std::to_string(i));
    }
    return d;
}

void write_manifest(const Dataset& d, const CoefficientFamily& family, std::uint64_t seed, const std::string& path) {
    nlohmann::json j = {{"format", "HKDS"},
                        {"version", kVersion},
                        {"n_samples", d.size()},
                        {"m_coeff", d.m_coeff},
                        {"n_grid", d.n_grid},
                        {"family", family.describe()},
                        {"seed", seed},
                        {"bytes", dataset_file_size(d.size(), d.m_coeff, d.n_grid)}};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_manifest: cannot open " + path);
    os << j.dump(2) << '\n';
}

}  // namespace bkst
