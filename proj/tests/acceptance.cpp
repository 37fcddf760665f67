// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bkst/analysis.hpp"
#include "bkst/data_store.hpp"
#include "bkst/neural_op.hpp"
#include "oracles.hpp"

using namespace bkst;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double l2(std::span<const double> a, double h) { return std::sqrt(trapezoid_dot(a, a, h)); }

double sup_diff(const KernelField& a, const KernelField& b) {
    double d = 0.0;
    for (std::size_t p = 0; p < a.values.size(); ++p) d = std::max(d, std::abs(a.values[p] - b.values[p]));
    return d;
}

double coarse_fine_diff(const KernelField& coarse, const KernelField& fine) {
    const std::size_t n = coarse.grid.n(), st = fine.grid.n() / n;
    double d = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j <= i; ++j) d = std::max(d, std::abs(coarse(i, j) - fine(st * i, st * j)));
    return d;
}

PlantState random_smooth_state(const IntervalGrid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    double a[8];
    for (double& v : a) v = u(rng);
    std::vector<double> uu(g.size()), vv(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.x(i);
        uu[i] = a[0] + a[1] * std::sin(M_PI * x) + a[2] * std::cos(3 * x) + a[3] * x * x;
        vv[i] = a[4] + a[5] * x + a[6] * std::sin(2 * M_PI * x) + a[7] * std::cos(5 * x);
    }
    return PlantState(g, uu, vv);
}

// Open-loop reference time, measured once at n = 400 (Phi first reaches 2 Phi(0) at t = 0.0470).
constexpr double kOpenLoopDoublingRef = 0.048;

constexpr std::uint64_t kDatasetSeed = 1;
constexpr std::size_t kDatasetSize = 1000;

// ---- criteria ----

Outcome c1() {
    auto c = gamma_family(3.0);
    std::fill(c.theta.begin(), c.theta.end(), 0.0);
    const auto ks = solve_kernels(c, TriangularGrid(100));
    const double m = std::max(ks.k1.sup_norm(), ks.k2.sup_norm());
    return {m <= 1e-12, fmt("max |k| = %.3g", m)};
}

Outcome c2() {
    double worst = 0.0;
    for (double gamma : {1.0, 5.0})
        for (std::size_t n : {50u, 100u}) {
            const auto c = gamma_family(gamma);
            const auto ks = solve_kernels(c, TriangularGrid(n));
            const auto lam = resample(c.lambda, n), mu = resample(c.mu, n), th = resample(c.theta, n);
            for (std::size_t i = 0; i <= n; ++i) {
                worst = std::max(worst, std::abs((lam[i] + mu[i]) * ks.k1(i, i) + th[i]));
                worst = std::max(worst, std::abs(mu[0] * ks.k2(i, 0) - c.q * lam[0] * ks.k1(i, 0)));
            }
        }
    return {worst <= 1e-12, fmt("max BC residual = %.3g", worst)};
}

Outcome c3() {
    const auto c = gamma_family(1.0);
    std::vector<KernelSet> s;
    for (std::size_t n : {50u, 100u, 200u, 400u}) s.push_back(solve_kernels(c, TriangularGrid(n)));
    bool ok = true;
    std::string d;
    for (int which = 1; which <= 2; ++which) {
        auto f = [&](std::size_t k) -> const KernelField& { return which == 1 ? s[k].k1 : s[k].k2; };
        const double d50 = coarse_fine_diff(f(0), f(1)), d100 = coarse_fine_diff(f(1), f(2)),
                     d200 = coarse_fine_diff(f(2), f(3));
        const double r1 = d50 / d100, r2 = d100 / d200;
        ok = ok && r1 >= 1.6 && r1 <= 2.4 && r2 >= 1.6 && r2 <= 2.4;
        d += fmt("k%d ratios %.3f %.3f; ", which, r1, r2);
    }
    const auto r100 = residual_operators(c, s[1].k1, s[1].k2), r200 = residual_operators(c, s[2].k1, s[2].k2);
    const double q3 = r200.K3_sup / r100.K3_sup, q4 = r200.K4_sup / r100.K4_sup;
    ok = ok && q3 <= 0.7 && q4 <= 0.7;
    d += fmt("K3 %.3f, K4 %.3f of n=100", q3, q4);
    return {ok, d};
}

Outcome c4() {
    const auto o = oracle::picard_gamma(1.0, 2000);
    const auto ks = solve_kernels(gamma_family(1.0), TriangularGrid(100));
    double e = 0.0;
    for (std::size_t i = 0; i <= 100; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            e = std::max({e, std::abs(ks.k1(i, j) - o.at1(20 * i, 20 * j)), std::abs(ks.k2(i, j) - o.at2(20 * i, 20 * j))});
    const double tol = 5.0 / 100;
    return {e <= tol && o.last_change <= 1e-10,
            fmt("sup error %.3g (limit %.3g), oracle converged in %d sweeps to %.1e", e, tol, o.iterations, o.last_change)};
}

Outcome c5() {
    const IntervalGrid g(100);
    const auto c = gamma_family(1.0);
    const auto ks = solve_inverse_kernels(solve_kernels(c, TriangularGrid(100)));
    std::mt19937_64 rng(2024);
    double comp = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto s = random_smooth_state(g, rng);
        const auto v = inverse_transform(s.u, forward_transform(s, ks), ks);
        std::vector<double> e(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) e[i] = v[i] - s.v[i];
        comp = std::max(comp, l2(e, g.h()));
    }
    const auto tr = simulate(c, PlantState::reference_initial(g), ControllerSpec::feedback(gain_slice(ks)), 10.0, 1);
    double edge = 0.0;
    for (std::size_t k = 1; k < tr.snapshots.size(); ++k)
        edge = std::max(edge, std::abs(forward_transform(tr.snapshots[k], ks).back()));
    return {comp <= 10 * g.h() && edge <= 1e-12,
            fmt("composition L2 %.3g (limit %.3g); max |beta(1,t)| %.3g over %zu steps", comp, 10 * g.h(), edge,
                tr.snapshots.size() - 1)};
}

Outcome c6() {
    std::string d;
    bool ok = true;
    for (std::size_t n : {100u, 400u}) {
        const auto tr = simulate(gamma_family(5.0), PlantState::reference_initial(IntervalGrid(n)),
                                 ControllerSpec::open_loop(), kOpenLoopDoublingRef);
        std::optional<double> t2;
        for (std::size_t k = 0; k < tr.size(); ++k)
            if (tr.phi[k] >= 2 * tr.phi[0]) {
                t2 = tr.times[k];
                break;
            }
        ok = ok && t2.has_value();
        d += t2 ? fmt("n=%zu doubles at t=%.4f; ", n, *t2) : fmt("n=%zu no doubling; ", n);
    }
    d += fmt("T* = %.3f", kOpenLoopDoublingRef);
    return {ok, d};
}

Outcome c7() {
    bool ok = true;
    std::string d;
    for (double gamma : {1.0, 5.0}) {
        const auto c = gamma_family(gamma);
        const auto gains = gain_slice(solve_kernels(c, TriangularGrid(100)));
        const auto tr = simulate(c, PlantState::reference_initial(IntervalGrid(100)), ControllerSpec::feedback(gains), 10.0);
        const auto fit = fit_decay(tr, 2.0);
        const double ratio = tr.phi.back() / tr.phi.front();
        ok = ok && !tr.blew_up && fit.c1_hat > 0 && fit.fit_quality >= 0.9 && ratio <= 1e-3;
        d += fmt("gamma=%g: c1=%.3f R2=%.4f Phi(10)/Phi(0)=%.3g; ", gamma, fit.c1_hat, fit.fit_quality, ratio);
    }
    return {ok, d};
}

struct MonotoneCount {
    std::size_t increases = 0, checked = 0;
    double worst = 0.0;  // largest relative step increase
};

// Steps k >= 2 only: the first step carries the transient of the discrete initial data.
MonotoneCount count_increases(const std::vector<double>& v) {
    MonotoneCount m;
    for (std::size_t k = 2; k < v.size(); ++k) {
        ++m.checked;
        if (v[k] > v[k - 1]) {
            ++m.increases;
            m.worst = std::max(m.worst, (v[k] - v[k - 1]) / v[k - 1]);
        }
    }
    return m;
}

Outcome c8() {
    const auto c = gamma_family(1.0);
    const IntervalGrid g(100);
    const auto ks = solve_kappa_c(c, solve_kernels(c, TriangularGrid(100)));
    const double p1 = default_p1(c.q);
    const double p2 = 1.1 * p2_lower_bound(c, ks, p1);
    const auto init = PlantState::reference_initial(g);
    const auto tr = simulate(c, init, ControllerSpec::feedback(gain_slice(ks)), 10.0, 1);
    std::vector<double> v;
    for (const auto& s : tr.snapshots) v.push_back(lyapunov_v1(s.u, forward_transform(s, ks), c, p1, p2));
    const auto plant = count_increases(v);

    // Reference only: the same functional on the simulated target system.
    const auto tt = simulate_target(c, ks, PlantState(g, init.u, forward_transform(init, ks)), 10.0, 1);
    std::vector<double> w;
    for (const auto& s : tt.snapshots) w.push_back(lyapunov_v1(s.u, s.v, c, p1, p2));
    const auto target = count_increases(w);

    return {plant.increases == 0,
            fmt("p1=%.3g p2=%.3g; closed loop: %zu increases in %zu steps (worst rel %.2g), V1 %.3g -> %.3g; "
                "target system: %zu increases",
                p1, p2, plant.increases, plant.checked, plant.worst, v[1], v.back(), target.increases)};
}

Outcome c9() {
    const Dataset d = generate(CoefficientFamily::gamma(0.5, 5.0), 3, 101, 20, 9);
    Architecture arch;
    arch.p = 8;
    arch.branch_hidden = {8, 8};
    arch.trunk_hidden = {8, 8};
    auto m = DeepONetModel::initialize(arch, 3);
    const std::vector<std::size_t> idx{0, 1, 2};
    fit_normalization(m, d, idx);
    const auto lg = loss_and_gradient(m, d, idx);
    const auto params = flatten_parameters(m);
    const double step = 1e-6;
    double worst = 0.0;
    std::size_t worst_at = 0;
    auto p = params;
    for (std::size_t k = 0; k < params.size(); ++k) {
        p[k] = params[k] + step;
        assign_parameters(m, p);
        const double up = loss_and_gradient(m, d, idx).loss;
        p[k] = params[k] - step;
        assign_parameters(m, p);
        const double down = loss_and_gradient(m, d, idx).loss;
        p[k] = params[k];
        const double fd = (up - down) / (2 * step);
        // Relative to the gradient scale; the floor keeps FD round-off on vanishing entries from dominating.
        const double rel = std::abs(fd - lg.gradient[k]) / std::max({std::abs(fd), std::abs(lg.gradient[k]), 1e-6});
        if (rel > worst) {
            worst = rel;
            worst_at = k;
        }
    }
    return {worst <= 1e-4, fmt("%zu parameters, worst relative mismatch %.3g (parameter %zu), loss %.4g", params.size(),
                               worst, worst_at, lg.loss)};
}

struct TrainedModel {
    DeepONetModel model;
    double rel_k1 = 0, rel_k2 = 0;
};

std::optional<TrainedModel> g_model;

Outcome c10() {
    const auto t0 = Clock::now();
    const Dataset d = generate(CoefficientFamily::gamma(0.5, 5.0), kDatasetSize, 101, kDefaultDatasetGrid, kDatasetSeed);
    const double t_gen = seconds_since(t0);
    const TrainConfig cfg;
    const auto res = train(d, cfg);
    const double t_train = seconds_since(t0) - t_gen;
    const auto test = evaluate(res.model, d.subset(res.test_indices));
    g_model = TrainedModel{res.model, test.rel_k1, test.rel_k2};

    // Capacity check. One sample means one full-batch step per epoch; fast second-moment
    // adaptation with heavy momentum reaches the target within the 5000 epochs.
    TrainConfig one;
    one.epochs = 5000;
    one.batch_size = 1;
    one.learning_rate = 1e-2;
    one.lr_final_fraction = 0.005;
    one.beta1 = 0.98;
    one.beta2 = 0.9;
    const Dataset single = d.subset({0});
    const auto fit1 = train(single, one);
    const auto e1 = evaluate(fit1.model, single);
    const double total = seconds_since(t0);

    const bool ok = test.rel_k1 <= 1e-2 && test.rel_k2 <= 1e-2 && e1.rel_k1 <= 1e-3 && e1.rel_k2 <= 1e-3 && total < 900;
    return {ok, fmt("held-out rel L2 k1 %.4g k2 %.4g (%zu test samples, %zu epochs); single-sample overfit %.3g %.3g; "
                    "generate %.1fs train %.1fs total %.1fs",
                    test.rel_k1, test.rel_k2, test.samples, cfg.epochs, e1.rel_k1, e1.rel_k2, t_gen, t_train, total)};
}

Outcome c11() {
    if (!g_model) c10();
    const DeepONetModel& m = g_model->model;
    const auto c = gamma_family(1.0);
    const IntervalGrid g(100);
    const TriangularGrid tg(100);
    const auto exact = solve_kappa_c(c, solve_kernels(c, tg));
    const auto neural_gains = infer_gains(m, c, g);
    const auto init = PlantState::reference_initial(g);
    const auto te = simulate(c, init, ControllerSpec::feedback(gain_slice(exact)), 10.0);
    const auto tn = simulate(c, init, ControllerSpec::feedback(neural_gains), 10.0);
    const auto fit = fit_decay(tn, 2.0);
    const double ratio = tn.phi.back() / tn.phi.front();
    double gap = 0.0;
    const std::size_t steps = std::min(te.size(), tn.size());
    for (std::size_t k = 0; k < steps; ++k) gap = std::max(gap, std::abs(tn.phi[k] - te.phi[k]) / tn.phi.front());

    const auto approx = solve_kappa_c(c, predict_kernels(m, c, tg));
    const double eps_res = residual_operators(c, approx.k1, approx.k2).epsilon_estimate;
    const double eps = approximation_error(c, exact, approx).epsilon_estimate;
    double gain_dev = 0.0;
    const auto eg = gain_slice(exact);
    for (std::size_t j = 0; j < eg.g1.size(); ++j)
        gain_dev = std::max({gain_dev, std::abs(eg.g1[j] - neural_gains.g1[j]), std::abs(eg.g2[j] - neural_gains.g2[j])});

    const bool ok = te.size() == tn.size() && !tn.blew_up && fit.c1_hat > 0 && ratio <= 1e-2 && gap <= 0.05;
    return {ok, fmt("c1=%.3f R2=%.4f Phi(10)/Phi(0)=%.3g max|Phi_n-Phi_e|/Phi(0)=%.3g; residual eps %.3g, "
                    "approximation eps %.3g, max gain deviation %.3g",
                    fit.c1_hat, fit.fit_quality, ratio, gap, eps_res, eps, gain_dev)};
}

template <class F>
double median_time(F&& f, int repeats) {
    std::vector<double> t;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        f();
        t.push_back(seconds_since(t0));
    }
    std::sort(t.begin(), t.end());
    return 0.5 * (t[(t.size() - 1) / 2] + t[t.size() / 2]);
}

Outcome c12() {
    const auto m = g_model ? g_model->model : DeepONetModel::initialize(Architecture{}, 0);
    const auto c = gamma_family(1.0);
    const IntervalGrid g(100);
    const TriangularGrid tg(100);
    volatile double sink = 0;
    const double t_solve = median_time([&] { sink = sink + solve_kernels(c, tg).k1(100, 0); }, 20);
    const GainBasis basis(m, g);
    const double t_cached = median_time([&] { sink = sink + basis.infer(c).g1[0]; }, 20);
    const double t_infer = median_time([&] { sink = sink + infer_gains(m, c, g).g1[0]; }, 20);
    const double ratio = t_cached / t_solve;
    return {ratio <= 0.1, fmt("solve %.1f us, gain inference with precomputed trunk %.1f us (ratio %.3f); "
                              "including trunk evaluation %.1f us (ratio %.3f)",
                              1e6 * t_solve, 1e6 * t_cached, ratio, 1e6 * t_infer, t_infer / t_solve)};
}

Outcome c13() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "bkst_acceptance";
    fs::create_directories(dir);
    const auto dpath = (dir / "d.hkds").string(), mpath = (dir / "m.nom").string();
    const Dataset d = generate(CoefficientFamily::random_smooth(0.5, 5.0, 0.5), 20, 101, 30, 5);
    write_dataset(d, dpath);
    const bool d_ok = read_dataset(dpath) == d && fs::file_size(dpath) == dataset_file_size(20, 101, 30);
    auto m = g_model ? g_model->model : DeepONetModel::initialize(Architecture{}, 1);
    write_model(m, mpath);
    const auto r = read_model(mpath);
    const bool m_ok = flatten_parameters(r) == flatten_parameters(m) && r.input_mean == m.input_mean &&
                      r.input_scale == m.input_scale;

    auto rejected = [](const std::string& path, auto reader) {
        try {
            reader(path);
        } catch (const std::exception&) {
            return true;
        }
        return false;
    };
    auto corrupt_magic = [](const std::string& path) {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.put('#');
    };
    fs::copy_file(dpath, dpath + ".bad", fs::copy_options::overwrite_existing);
    fs::copy_file(mpath, mpath + ".bad", fs::copy_options::overwrite_existing);
    corrupt_magic(dpath + ".bad");
    corrupt_magic(mpath + ".bad");
    bool rej = rejected(dpath + ".bad", read_dataset) && rejected(mpath + ".bad", read_model);
    fs::resize_file(dpath, fs::file_size(dpath) / 2);
    fs::resize_file(mpath, fs::file_size(mpath) / 2);
    rej = rej && rejected(dpath, read_dataset) && rejected(mpath, read_model);
    fs::remove_all(dir);
    return {d_ok && m_ok && rej, fmt("dataset round trip %s, model round trip %s, corrupt/truncated files %s",
                                     d_ok ? "exact" : "MISMATCH", m_ok ? "exact" : "MISMATCH",
                                     rej ? "rejected" : "ACCEPTED")};
}

Outcome c14() {
    const auto ks = solve_inverse_kernels(solve_kernels(gamma_family(1.0), TriangularGrid(100)));
    const double s1 = s1_empirical(ks), s2 = s2_empirical(ks);
    const IntervalGrid g(100);
    std::mt19937_64 rng(77);
    double r1 = 0.0, r2 = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto s = random_smooth_state(g, rng);
        const double p = phi(s), q = psi1(s, ks);
        r1 = std::max(r1, q / (s1 * p));
        r2 = std::max(r2, p / (s2 * q));
    }
    return {r1 <= 1.0 && r2 <= 1.0,
            fmt("S1=%.3f S2=%.3f; max psi1/(S1 phi)=%.3f, max phi/(S2 psi1)=%.3f", s1, s2, r1, r2)};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "trivial-kernel exactness", 1, c1},
        {2, "boundary-condition identities", 5, c2},
        {3, "solver convergence", 30, c3},
        {4, "oracle agreement", 120, c4},
        {5, "transform consistency", 30, c5},
        {6, "open-loop instability", 60, c6},
        {7, "exact-gain stabilization", 120, c7},
        {8, "Lyapunov certificate", 120, c8},
        {9, "gradient check", 30, c9},
        {10, "training", 900, c10},
        {11, "neural-gain stabilization", 120, c11},
        {12, "speedup", 60, c12},
        {13, "persistence", 10, c13},
        {14, "norm equivalence", 30, c14},
    };
    std::set<int> only;
    for (int a = 1; a < argc; ++a) only.insert(std::stoi(argv[a]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double t = seconds_since(t0);
        const bool in_time = t < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("[%s] C%-2d %-30s %s (%.2fs of %.0fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                    t, c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
