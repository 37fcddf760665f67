// Command-line front end: kernel solves, datasets, training, closed-loop runs and timing.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bkst/analysis.hpp"
#include "bkst/coefficients.hpp"
#include "bkst/controller.hpp"
#include "bkst/data_store.hpp"
#include "bkst/kernel_solver.hpp"
#include "bkst/neural_op.hpp"
#include "bkst/plant_sim.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Hard checks that fail the run after all artifacts are written.
class CheckFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void apply_thread_env() {
    if (const char* s = std::getenv("BKST_THREADS")) {
        const int n = std::atoi(s);
        if (n < 1) throw bkst::InvalidArgument("BKST_THREADS must be a positive integer");
        omp_set_num_threads(n);
    }
}

void write_json(const json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---- solve ----

struct SolveOpts {
    double gamma = 1.0;
    std::size_t n = 100;
    std::string out_dir = ".";
};

void cmd_solve(const SolveOpts& o) {
    const bkst::CoefficientSet c = bkst::gamma_family(o.gamma);
    const bkst::KernelSet ks = bkst::solve_kernels(c, bkst::TriangularGrid(o.n));
    const bkst::ResidualReport rep = bkst::residual_operators(c, ks.k1, ks.k2);
    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    std::ofstream os(dir / "kernels.csv");
    if (!os) throw std::runtime_error("cannot write kernels.csv in " + o.out_dir);
    os << "x,xi,k1,k2\n";
    char buf[128];
    const bkst::TriangularGrid& g = ks.grid();
    for (std::size_t i = 0; i <= g.n(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", g.x(i), g.x(j), ks.k1(i, j), ks.k2(i, j));
            os << buf;
        }
    json j = bkst::to_json(rep);
    j["gamma"] = o.gamma;
    j["n"] = o.n;
    j["k1_sup"] = ks.k1.sup_norm();
    j["k2_sup"] = ks.k2.sup_norm();
    write_json(j, (dir / "residuals.json").string());
    std::cout << "wrote " << (dir / "kernels.csv").string() << " and " << (dir / "residuals.json").string() << '\n';
    std::snprintf(buf, sizeof buf, "k1(0,0) = %.10f  |k1| = %.6g  |k2| = %.6g  eps = %.6g\n", ks.k1(0, 0),
                  ks.k1.sup_norm(), ks.k2.sup_norm(), rep.epsilon_estimate);
    std::cout << buf;
    if (!std::isfinite(rep.K3_sup) || !std::isfinite(rep.K4_sup)) throw CheckFailed("solve: non-finite residuals");
}

// ---- dataset ----

struct DatasetOpts {
    std::string family = "gamma";
    double gamma_min = 0.5, gamma_max = 5.0, amplitude = 0.3;
    std::size_t n_samples = 1000, m_coeff = 101, n_grid = bkst::kDefaultDatasetGrid;
    std::uint64_t seed = 1;
    std::string out = "dataset.hkds";
    bool manifest = true;
};

bkst::CoefficientFamily make_family(const DatasetOpts& o) {
    if (o.family == "gamma") return bkst::CoefficientFamily::gamma(o.gamma_min, o.gamma_max, o.m_coeff);
    return bkst::CoefficientFamily::random_smooth(o.gamma_min, o.gamma_max, o.amplitude, o.m_coeff);
}

void cmd_dataset(const DatasetOpts& o) {
    apply_thread_env();
    const bkst::CoefficientFamily fam = make_family(o);
    const auto t0 = std::chrono::steady_clock::now();
    const bkst::Dataset d = bkst::generate(fam, o.n_samples, o.m_coeff, o.n_grid, o.seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bkst::write_dataset(d, o.out);
    if (o.manifest) bkst::write_manifest(d, fam, o.seed, o.out + ".json");
    const auto bytes = fs::file_size(o.out);
    std::cout << "wrote " << d.size() << " samples (" << bytes << " bytes) to " << o.out << " in " << secs << " s\n";
    if (bytes != bkst::dataset_file_size(o.n_samples, o.m_coeff, o.n_grid))
        throw CheckFailed("dataset: file size differs from the format arithmetic");
}

// ---- train ----

struct TrainOpts {
    std::string data, out = "model.nom", history;
    bkst::TrainConfig cfg;
    bool quiet = false;
};

void cmd_train(const TrainOpts& o) {
    const bkst::Dataset d = bkst::read_dataset(o.data);
    auto progress = [&](std::size_t e, double loss, double r1, double r2) {
        if (!o.quiet && (e == 1 || e % 10 == 0 || e == o.cfg.epochs))
            std::cerr << "epoch " << e << "  loss " << loss << "  test rel L2 " << r1 << " " << r2 << '\n';
    };
    const bkst::TrainResult r = bkst::train(d, o.cfg, progress);
    bkst::write_model(r.model, o.out);
    if (!o.history.empty()) {
        std::ofstream os(o.history);
        if (!os) throw std::runtime_error("cannot open " + o.history);
        os << "epoch,train_loss,test_rel_k1,test_rel_k2\n";
        os.precision(17);
        for (std::size_t e = 0; e < r.history.train_loss.size(); ++e) {
            os << e + 1 << ',' << r.history.train_loss[e];
            if (e < r.history.test_rel_k1.size()) os << ',' << r.history.test_rel_k1[e] << ',' << r.history.test_rel_k2[e];
            else os << ",,";
            os << '\n';
        }
    }
    std::cout << "wrote model " << o.out << " (" << r.model.parameter_count() << " parameters)\n";
}

// ---- eval ----

struct EvalOpts {
    std::string model, data, out;
    std::uint64_t seed = 0;
    double split = 0.9;
    double threshold = -1.0;  // negative: report only
};

void cmd_eval(const EvalOpts& o) {
    const bkst::DeepONetModel m = bkst::read_model(o.model);
    const bkst::Dataset d = bkst::read_dataset(o.data);
    const auto [tr, te] = bkst::split_indices(d.size(), o.split, o.seed);
    const bkst::EvalResult etr = bkst::evaluate(m, d.subset(tr));
    json j = {{"train", {{"samples", etr.samples}, {"rel_l2_k1", etr.rel_k1}, {"rel_l2_k2", etr.rel_k2}}}};
    bool ok = true;
    if (!te.empty()) {
        const bkst::EvalResult ete = bkst::evaluate(m, d.subset(te));
        j["test"] = {{"samples", ete.samples}, {"rel_l2_k1", ete.rel_k1}, {"rel_l2_k2", ete.rel_k2}};
        if (o.threshold >= 0.0) ok = ete.rel_k1 <= o.threshold && ete.rel_k2 <= o.threshold;
    }
    write_json(j, o.out);
    if (!ok) throw CheckFailed("eval: test error above threshold");
}

// ---- simulate ----

struct SimOpts {
    double gamma = 1.0, T = 10.0, t_start = 2.0;
    std::size_t n = 100;
    std::string controller = "exact", model, out_dir = ".";
};

void cmd_simulate(const SimOpts& o) {
    if (o.controller == "neural" && o.model.empty()) throw bkst::InvalidArgument("simulate: neural mode needs --model");
    const bkst::CoefficientSet c = bkst::gamma_family(o.gamma);
    const bkst::IntervalGrid g(o.n);
    bkst::ControllerSpec spec;
    json extra;
    if (o.controller == "exact") {
        spec = bkst::ControllerSpec::feedback(bkst::gain_slice(bkst::solve_kernels(c, bkst::TriangularGrid(o.n))));
    } else if (o.controller == "neural") {
        const bkst::DeepONetModel m = bkst::read_model(o.model);
        spec = bkst::ControllerSpec::feedback(bkst::infer_gains(m, c, g));
        bkst::KernelSet exact = bkst::solve_kappa_c(c, bkst::solve_kernels(c, bkst::TriangularGrid(o.n)));
        bkst::KernelSet approx = bkst::solve_kappa_c(c, bkst::predict_kernels(m, c, bkst::TriangularGrid(o.n)));
        extra["epsilon_estimate"] = bkst::approximation_error(c, exact, approx).epsilon_estimate;
    }
    const bkst::SimTrace tr = bkst::simulate(c, bkst::PlantState::reference_initial(g), spec, o.T);
    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    tr.write_csv((dir / ("trace_" + o.controller + ".csv")).string());
    json j = {{"controller", o.controller}, {"gamma", o.gamma}, {"n", o.n}, {"T", o.T},
              {"blew_up", tr.blew_up},      {"phi0", tr.phi.front()}, {"phi_end", tr.phi.back()},
              {"t_end", tr.times.back()}};
    double doubling = -1.0;
    for (std::size_t k = 0; k < tr.size(); ++k)
        if (tr.phi[k] >= 2.0 * tr.phi.front()) {
            doubling = tr.times[k];
            break;
        }
    j["doubling_time"] = doubling < 0 ? json(nullptr) : json(doubling);
    if (!tr.blew_up) {
        try {
            j["stability"] = bkst::to_json(bkst::fit_decay(tr, o.t_start));
        } catch (const bkst::InvalidArgument& e) {
            j["stability_error"] = e.what();
        }
    }
    if (extra.is_object()) j.update(extra);
    write_json(j, (dir / ("report_" + o.controller + ".json")).string());
    std::cout << "wrote trace and report for " << o.controller << " control to " << o.out_dir << '\n';
}

// ---- bench ----

struct BenchOpts {
    double gamma = 1.0;
    std::size_t n = 100, repeats = 20;
    std::string model, out;
};

void cmd_bench(const BenchOpts& o) {
    if (o.repeats == 0) throw bkst::InvalidArgument("bench: repeats must be >= 1");
    const bkst::CoefficientSet c = bkst::gamma_family(o.gamma);
    const bkst::TriangularGrid tg(o.n);
    const bkst::IntervalGrid ig(o.n);
    using clock = std::chrono::steady_clock;
    auto time_it = [&](auto&& fn) {
        std::vector<double> t;
        for (std::size_t r = 0; r < o.repeats; ++r) {
            const auto t0 = clock::now();
            fn();
            t.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        }
        return median(t);
    };
    volatile double sink = 0.0;
    const double t_solve = time_it([&] { sink = sink + bkst::solve_kernels(c, tg).k1.values.back(); });
    json j = {{"gamma", o.gamma}, {"n", o.n}, {"repeats", o.repeats}, {"solve_median_s", t_solve}};
    if (!o.model.empty()) {
        const bkst::DeepONetModel m = bkst::read_model(o.model);
        const bkst::GainBasis basis(m, ig);
        const double t_gain = time_it([&] { sink = sink + basis.infer(c).g1.back(); });
        const double t_gain_cold = time_it([&] { sink = sink + bkst::infer_gains(m, c, ig).g1.back(); });
        const double t_dense = time_it([&] { sink = sink + bkst::predict_kernels(m, c, tg).k1.values.back(); });
        j["infer_gains_cached_median_s"] = t_gain;
        j["infer_gains_median_s"] = t_gain_cold;
        j["dense_forward_median_s"] = t_dense;
        j["ratio_cached"] = t_solve / t_gain;
        j["ratio_uncached"] = t_solve / t_gain_cold;
        j["ratio_dense"] = t_solve / t_dense;
    }
    write_json(j, o.out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Backstepping kernel solver, neural-operator surrogate and closed-loop simulator"};
    app.require_subcommand(1);

    SolveOpts so;
    auto* s = app.add_subcommand("solve", "Solve kernels for the gamma family; write kernels.csv and residuals.json");
    s->add_option("--gamma", so.gamma, "Family parameter (> 0)")->capture_default_str();
    s->add_option("--n", so.n, "Triangular grid cells")->capture_default_str()->check(CLI::Range(3, 100000));
    s->add_option("--out-dir", so.out_dir, "Output directory")->capture_default_str();

    DatasetOpts dso;
    auto* ds = app.add_subcommand("dataset", "Generate a dataset file (thread count from BKST_THREADS)");
    ds->add_option("--family", dso.family, "gamma or random")->check(CLI::IsMember({"gamma", "random"}))->capture_default_str();
    ds->add_option("--gamma-min", dso.gamma_min)->capture_default_str();
    ds->add_option("--gamma-max", dso.gamma_max)->capture_default_str();
    ds->add_option("--amplitude", dso.amplitude, "Perturbation size for the random family")->capture_default_str();
    ds->add_option("--samples", dso.n_samples)->capture_default_str()->check(CLI::PositiveNumber);
    ds->add_option("--m-coeff", dso.m_coeff)->capture_default_str()->check(CLI::Range(2, 100000));
    ds->add_option("--n-grid", dso.n_grid)->capture_default_str()->check(CLI::Range(2, 100000));
    ds->add_option("--seed", dso.seed)->capture_default_str();
    ds->add_option("--out", dso.out)->capture_default_str();
    ds->add_flag("!--no-manifest", dso.manifest, "Skip the JSON sidecar");

    TrainOpts to;
    auto* tr = app.add_subcommand("train", "Train the operator network on a dataset file");
    tr->add_option("--data", to.data)->required()->check(CLI::ExistingFile);
    tr->add_option("--out", to.out)->capture_default_str();
    tr->add_option("--history", to.history, "Per-epoch CSV");
    tr->add_option("--epochs", to.cfg.epochs)->capture_default_str();
    tr->add_option("--batch", to.cfg.batch_size)->capture_default_str();
    tr->add_option("--lr", to.cfg.learning_rate)->capture_default_str();
    tr->add_option("--lr-final", to.cfg.lr_final_fraction, "Final / initial learning rate")->capture_default_str();
    tr->add_option("--beta1", to.cfg.beta1, "Adam first-moment decay")->capture_default_str();
    tr->add_option("--beta2", to.cfg.beta2, "Adam second-moment decay")->capture_default_str();
    tr->add_option("--seed", to.cfg.seed)->capture_default_str();
    tr->add_option("--split", to.cfg.train_fraction, "Training fraction")->capture_default_str();
    tr->add_option("--m-enc", to.cfg.arch.m_enc)->capture_default_str();
    tr->add_option("--p", to.cfg.arch.p)->capture_default_str();
    tr->add_option("--branch-hidden", to.cfg.arch.branch_hidden)->capture_default_str();
    tr->add_option("--trunk-hidden", to.cfg.arch.trunk_hidden)->capture_default_str();
    tr->add_flag("--quiet", to.quiet);

    EvalOpts eo;
    auto* ev = app.add_subcommand("eval", "Relative L2 errors of a model on the train/test split of a dataset");
    ev->add_option("--model", eo.model)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", eo.data)->required()->check(CLI::ExistingFile);
    ev->add_option("--seed", eo.seed, "Seed used for training")->capture_default_str();
    ev->add_option("--split", eo.split)->capture_default_str();
    ev->add_option("--max-error", eo.threshold, "Fail if a test error exceeds this");
    ev->add_option("--out", eo.out, "JSON path (stdout if omitted)");

    SimOpts sm;
    auto* si = app.add_subcommand("simulate", "Closed- or open-loop run from u0 = 1, v0 = sin(x)");
    si->add_option("--gamma", sm.gamma)->capture_default_str();
    si->add_option("--controller", sm.controller)->check(CLI::IsMember({"open", "exact", "neural"}))->capture_default_str();
    si->add_option("--model", sm.model)->check(CLI::ExistingFile);
    si->add_option("--T", sm.T)->capture_default_str()->check(CLI::PositiveNumber);
    si->add_option("--n", sm.n)->capture_default_str()->check(CLI::Range(3, 100000));
    si->add_option("--fit-start", sm.t_start)->capture_default_str();
    si->add_option("--out-dir", sm.out_dir)->capture_default_str();

    BenchOpts bo;
    auto* be = app.add_subcommand("bench", "Median timing of the kernel solve versus gain inference");
    be->add_option("--gamma", bo.gamma)->capture_default_str();
    be->add_option("--n", bo.n)->capture_default_str()->check(CLI::Range(3, 100000));
    be->add_option("--model", bo.model)->check(CLI::ExistingFile);
    be->add_option("--repeats", bo.repeats)->capture_default_str();
    be->add_option("--out", bo.out, "JSON path (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*s) cmd_solve(so);
        else if (*ds) cmd_dataset(dso);
        else if (*tr) cmd_train(to);
        else if (*ev) cmd_eval(eo);
        else if (*si) cmd_simulate(sm);
        else if (*be) cmd_bench(bo);
    } catch (const CheckFailed& e) {
        std::cerr << "check failed: " << e.what() << '\n';
        return 3;
    } catch (const bkst::InvalidArgument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
