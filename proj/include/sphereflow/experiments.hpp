#pragma once

// Experiment runner: per-experiment key validation, execution, CSV and
// manifest emission, and gnuplot script stubs. Every CSV is byte-identical
// for a fixed (config, seed, workers) triple; the manifest carries the
// wall clock and is the one file allowed to differ between identical runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sphereflow/config.hpp"
#include "sphereflow/csv.hpp"
#include "sphereflow/dynamics.hpp"
#include "sphereflow/errors.hpp"
#include "sphereflow/functionals.hpp"
#include "sphereflow/measures.hpp"
#include "sphereflow/numerics.hpp"
#include "sphereflow/rng.hpp"
#include "sphereflow/sphere.hpp"
#include "sphereflow/variational.hpp"
#include "sphereflow/version.hpp"

namespace sphereflow {

struct ExperimentConfig {
    std::string experiment;
    Config values;
};

namespace detail {

struct KeySpec {
    std::vector<std::string> required;
    std::vector<std::string> optional;
};

inline const std::map<std::string, KeySpec>& key_specs() {
    static const std::map<std::string, KeySpec> specs = {
        {"simulate", {{"d", "n", "beta"}, {"T", "dt", "scheme", "seed", "out_dir"}}},
        {"landscape",
         {{"d", "n", "beta"},
          {"sigmas", "trials", "token", "T", "dt", "quad_dt", "scheme", "seed", "out_dir"}}},
        {"quad-order", {{"d", "n", "beta"}, {"dt_list", "T", "scheme", "seed", "out_dir"}}},
        {"el-residual",
         {{"d", "n", "beta"}, {"lagrangian", "T", "dt", "token", "scheme", "seed", "out_dir"}}},
        {"ball-bound",
         {{"epsilon"},
          {"d", "mu_sc", "alpha", "r_cap", "m_third", "estimate_m_third", "anchor", "T", "dt",
           "samples", "beta", "workers", "refine_starts", "scheme", "seed", "out_dir"}}},
        {"dirac", {{}, {"grids", "grid_size", "mixtures", "d", "seed", "out_dir"}}},
        {"theorem7",
         {{"epsilon"},
          {"d", "particles", "clouds", "adversarial", "pairs", "seed", "out_dir"}}},
        {"geodesic-pairing", {{}, {"d", "s0", "levels", "T", "dt", "out_dir"}}},
    };
    return specs;
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "euler") return Scheme::Euler;
    if (s == "midpoint") return Scheme::Midpoint;
    throw InvalidArgument("scheme must be 'euler' or 'midpoint', got '" + s + "'");
}

// Output directory handling plus the effective-config echo for the manifest.
class ExperimentIO {
public:
    ExperimentIO(const ExperimentConfig& cfg, bool write_files)
        : experiment_(cfg.experiment), write_(write_files),
          t0_(std::chrono::steady_clock::now()) {
        if (!write_) return;
        dir_ = std::filesystem::path(cfg.values.get_string("out_dir", "out")) / experiment_;
        std::filesystem::create_directories(dir_);
        note("out_dir", cfg.values.get_string("out_dir", "out"));
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    void note(const std::string& key, const std::string& value) { noted_[key] = value; }

    void finish(const std::string& plot_stub) {
        if (!write_) return;
        if (!plot_stub.empty()) {
            std::ofstream g(path("plot.gp"), std::ios::trunc);
            g << "# gnuplot stub\nset datafile separator ','\nset key autotitle columnhead\n"
              << plot_stub;
        }
        std::ofstream m(path("manifest.txt"), std::ios::trunc);
        m << "experiment=" << experiment_ << "\n";
        for (const auto& [k, v] : noted_) m << k << "=" << v << "\n";
        m << "version=" << version() << "\n";
        const std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        m << "finished_utc=" << stamp << "\n";
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        m << "wall_clock_seconds=" << format_double(secs) << "\n";
    }

private:
    std::string experiment_;
    bool write_;
    std::filesystem::path dir_;
    std::map<std::string, std::string> noted_;
    std::chrono::steady_clock::time_point t0_;
};

// Reads config values with their defaults and records every value it hands
// out, so the manifest echoes the exact effective configuration.
struct Keys {
    const Config& cfg;
    ExperimentIO& io;

    double num(const std::string& k) {
        const double v = cfg.get_double(k);
        io.note(k, format_double(v));
        return v;
    }
    double num(const std::string& k, double fb) {
        const double v = cfg.get_double(k, fb);
        io.note(k, format_double(v));
        return v;
    }
    int integer(const std::string& k) {
        const int v = cfg.get_int(k);
        io.note(k, format_int(v));
        return v;
    }
    int integer(const std::string& k, int fb) {
        const int v = cfg.get_int(k, fb);
        io.note(k, format_int(v));
        return v;
    }
    bool flag(const std::string& k, bool fb) {
        const bool v = cfg.get_bool(k, fb);
        io.note(k, v ? "true" : "false");
        return v;
    }
    std::string str(const std::string& k, const std::string& fb) {
        const std::string v = cfg.get_string(k, fb);
        io.note(k, v);
        return v;
    }
    std::vector<double> list(const std::string& k, const std::string& fb) {
        io.note(k, cfg.get_string(k, fb));
        return cfg.get_double_list(k, fb);
    }
    std::uint64_t seed() {
        const std::uint64_t v = cfg.resolve_seed();
        io.note("seed", std::to_string(v));
        return v;
    }
    Scheme scheme() { return parse_scheme(str("scheme", "midpoint")); }
};

inline std::string bool_cell(bool b) { return b ? "1" : "0"; }

inline std::vector<std::string> coord_header(const char* stem, int d) {
    std::vector<std::string> h;
    for (int c = 0; c < d; ++c) h.push_back(stem + std::to_string(c));
    return h;
}

constexpr const char* kDefaultSigmas = "0,0.02,0.05,0.1,0.2";
constexpr const char* kDefaultDtList =
    "0.125,0.0625,0.03125,0.015625,0.0078125,0.00390625";

inline Eigen::VectorXd parse_anchor(const Config& cfg, int d) {
    if (!cfg.has("anchor")) return Eigen::VectorXd::Unit(d, 0);
    const std::vector<double> raw = cfg.get_double_list("anchor");
    if (static_cast<int>(raw.size()) != d)
        throw InvalidArgument("anchor must have exactly d components");
    Eigen::VectorXd a(d);
    for (int c = 0; c < d; ++c) a[c] = raw[static_cast<std::size_t>(c)];
    const double n = a.norm();
    if (n <= kNearZeroTol) throw NearZeroVector("anchor must be nonzero");
    return a / n;
}

inline void run_simulate(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const int d = k.integer("d");
    const int n = k.integer("n");
    const double beta = k.num("beta");
    const double T = k.num("T", 1.0);
    const double dt = k.num("dt", 1e-3);
    const Scheme scheme = k.scheme();
    Rng rng(k.seed());
    const Trajectory traj =
        integrate(random_configuration(d, n, rng), AttentionParams(beta), T, dt, scheme);

    std::vector<std::string> header = {"t", "token_id"};
    for (const auto& h : coord_header("c", d)) header.push_back(h);
    CsvFile csv(io.path("trajectory.csv"), header);
    for (int i = 0; i <= traj.steps(); ++i) {
        for (int j = 0; j < n; ++j) {
            std::vector<std::string> row = {format_double(traj.time(i)), format_int(j)};
            const Eigen::VectorXd p = traj.state(i).point(j);
            for (int c = 0; c < d; ++c) row.push_back(format_double(p[c]));
            csv.row(row);
        }
    }
    io.finish("plot 'trajectory.csv' using 'c0':'c1' with points\n");
}

inline void run_landscape(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const int d = k.integer("d");
    const int n = k.integer("n");
    const double beta = k.num("beta");
    const std::vector<double> sigmas = k.list("sigmas", kDefaultSigmas);
    const int trials = k.integer("trials", 40);
    const int token = k.integer("token", 0);
    const double T = k.num("T", 1.0);
    const double dt = k.num("dt", 0.02);
    const double quad_dt = k.num("quad_dt", dt);
    const Scheme scheme = k.scheme();
    const std::uint64_t seed = k.seed();
    Rng rng(seed);
    const Trajectory base =
        integrate(random_configuration(d, n, rng), AttentionParams(beta), T, dt, scheme);
    const LandscapeResult res =
        energy_landscape(base, token, beta, sigmas, trials, seed + 1, quad_dt);

    CsvFile csv(io.path("landscape.csv"),
                {"trial", "sigma", "l2_distance", "pca_deviation", "action"});
    for (const auto& r : res.rows)
        csv.row({format_int(r.trial), format_double(r.sigma), format_double(r.l2_distance),
                 format_double(r.pca_deviation), format_double(r.action)});
    io.finish("plot 'landscape.csv' using 'l2_distance':'action' with points\n");
}

inline void run_quad_order(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const int d = k.integer("d");
    const int n = k.integer("n");
    const double beta = k.num("beta");
    const std::vector<double> dt_list = k.list("dt_list", kDefaultDtList);
    const double T = k.num("T", 1.0);
    const Scheme scheme = k.scheme();
    Rng rng(k.seed());
    double dt_min = dt_list.front();
    for (double v : dt_list) dt_min = std::min(dt_min, v);
    const Trajectory ref =
        integrate(random_configuration(d, n, rng), AttentionParams(beta), T, dt_min, scheme);
    const PathSample h = random_smooth_path(d, T, dt_min / 128.0, rng);
    const QuadratureStudyResult study = quadrature_error_study(h, ref, 0, beta, dt_list);

    CsvFile csv(io.path("quad_order.csv"), {"dt", "abs_error", "log10_dt", "log10_err"});
    for (const auto& r : study.rows)
        csv.row({format_double(r.dt), format_double(r.abs_error),
                 format_double(std::log10(r.dt)), format_double(std::log10(r.abs_error))});
    csv.comment("slope=" + format_double(study.slope));
    io.finish("set logscale xy\nplot 'quad_order.csv' using 'dt':'abs_error' with linespoints\n");
}

inline void run_el_residual(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const int d = k.integer("d");
    const int n = k.integer("n");
    const double beta = k.num("beta");
    const std::string kind = k.str("lagrangian", "kinetic-potential");
    const double T = k.num("T", 1.0);
    const double dt = k.num("dt", 0.01);
    const int token = k.integer("token", 0);
    const Scheme scheme = k.scheme();
    Rng rng(k.seed());
    const Trajectory traj =
        integrate(random_configuration(d, n, rng), AttentionParams(beta), T, dt, scheme);

    Lagrangian L = Lagrangian::kinetic_potential();
    if (kind == "geodesic")
        L = Lagrangian::geodesic();
    else if (kind == "transformer")
        L = Lagrangian::transformer();
    else if (kind != "kinetic-potential")
        throw InvalidArgument("lagrangian must be kinetic-potential, geodesic, or transformer");

    const ResidualSeries res = projected_el_residual(L, traj, token, beta);
    std::vector<std::string> header = {"t"};
    for (const auto& h : coord_header("r", d)) header.push_back(h);
    header.push_back("norm");
    CsvFile csv(io.path("residual.csv"), header);
    for (std::size_t i = 0; i < res.times.size(); ++i) {
        std::vector<std::string> row = {format_double(res.times[i])};
        for (int c = 0; c < d; ++c)
            row.push_back(format_double(res.residuals(c, static_cast<int>(i))));
        row.push_back(format_double(res.norms[static_cast<int>(i)]));
        csv.row(row);
    }
    io.finish("plot 'residual.csv' using 't':'norm' with lines\n");
}

inline void run_ball_bound(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    BallBoundOptions opt;
    opt.epsilon = k.num("epsilon");
    const int d = k.integer("d", 3);
    const double mu_sc = k.num("mu_sc", 1.0);
    opt.alpha = k.num("alpha", 0.0);
    opt.r_cap = k.num("r_cap", 1.0);
    opt.T = k.num("T", 1.0);
    opt.dt = k.num("dt", 0.01);
    opt.n_samples = k.integer("samples", 10000);
    opt.beta = k.num("beta", 1.0);
    opt.workers = k.integer("workers", 1);
    opt.refine_starts = k.integer("refine_starts", 64);
    opt.scheme = k.scheme();
    opt.seed = k.seed();
    const Eigen::VectorXd anchor = parse_anchor(cfg, d);
    {
        std::string coords;
        for (int c = 0; c < d; ++c)
            coords += (c ? "," : "") + format_double(anchor[c]);
        io.note("anchor", coords);
    }
    const Lagrangian L = Lagrangian::strongly_convex(anchor, mu_sc);
    if (k.flag("estimate_m_third", false)) {
        const PointCost cost = [mu_sc, anchor](const Eigen::VectorXd& x) {
            return 0.5 * mu_sc * (x - anchor).squaredNorm();
        };
        opt.m_third = third_derivative_bound_estimate(cost, d, 256, opt.seed + 1);
    } else {
        opt.m_third = cfg.get_double("m_third", 0.0);
    }
    io.note("m_third", format_double(opt.m_third));

    const BallBoundReport rep = epsilon_optimal_set_measure(L, opt);

    const std::vector<std::pair<std::string, std::string>> fields = {
        {"epsilon", format_double(rep.epsilon)},
        {"mu_sc", format_double(rep.mu_sc)},
        {"alpha", format_double(rep.alpha)},
        {"d", format_int(rep.d)},
        {"r_cap", format_double(rep.r_cap)},
        {"m_third", format_double(rep.m_third)},
        {"radius", format_double(rep.radius)},
        {"bound_area", format_double(rep.bound_area)},
        {"inf_action", format_double(rep.inf_action)},
        {"mc_area", format_double(rep.mc_area)},
        {"mc_stderr", format_double(rep.mc_stderr)},
        {"samples", format_int(rep.samples)},
        {"workers", format_int(rep.workers)},
    };
    {
        std::ofstream txt(io.path("ball_bound.txt"), std::ios::trunc);
        for (const auto& [key, value] : fields) txt << key << "=" << value << "\n";
    }
    std::vector<std::string> header, row;
    for (const auto& [key, value] : fields) {
        header.push_back(key);
        row.push_back(value);
    }
    CsvFile csv(io.path("ball_bound.csv"), header);
    csv.row(row);
    io.finish("plot 'ball_bound.csv' using 'bound_area':'mc_area' with points\n");
}

inline void run_dirac(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const int grids = k.integer("grids", 10);
    const int grid_size = k.integer("grid_size", 100);
    const int mixtures = k.integer("mixtures", 1000);
    const int d = k.integer("d", 3);
    const std::uint64_t seed = k.seed();

    CsvFile csv(io.path("dirac.csv"),
                {"grid", "dirac_minimum", "dirac_argmin", "mixture_minimum", "inequality_holds",
                 "degenerate_tie"});
    for (int g = 0; g < grids; ++g) {
        Rng rng(seed + static_cast<std::uint64_t>(g));
        Eigen::MatrixXd grid(d, grid_size);
        for (int j = 0; j < grid_size; ++j) grid.col(j) = sample_uniform_sphere(d, rng).vec();
        const Eigen::VectorXd u1 = sample_uniform_sphere(d, rng).vec();
        const Eigen::VectorXd u2 = sample_uniform_sphere(d, rng).vec();
        const Eigen::VectorXd u3 = sample_uniform_sphere(d, rng).vec();
        const double c1 = rng.gaussian(), c2 = rng.gaussian(), c3 = rng.gaussian();
        const PointCost L = [=](const Eigen::VectorXd& p) {
            const double a = p.dot(u1), b = p.dot(u2), c = p.dot(u3);
            return c1 * a + c2 * b * b + c3 * c * c * c;
        };
        const DiracOptimalityReport rep = brute_force_dirac_optimality(
            grid, L, mixtures, seed + 100000 + static_cast<std::uint64_t>(g));
        csv.row({format_int(g), format_double(rep.dirac_minimum), format_int(rep.dirac_argmin),
                 format_double(rep.mixture_minimum), bool_cell(rep.inequality_holds),
                 bool_cell(rep.degenerate_tie)});
    }
    io.finish("plot 'dirac.csv' using 'grid':'dirac_minimum' with points, "
              "'dirac.csv' using 'grid':'mixture_minimum' with points\n");
}

inline void run_theorem7(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const double epsilon = k.num("epsilon");
    const int d = k.integer("d", 3);
    const int particles = k.integer("particles", 32);
    const int clouds = k.integer("clouds", 100);
    const int adversarial = k.integer("adversarial", 20);
    const int pairs = k.integer("pairs", 10000);
    const std::uint64_t seed = k.seed();

    Rng master(seed);
    const Eigen::VectorXd g = sample_uniform_sphere(d, master).vec();
    const PointCost L = [g](const Eigen::VectorXd& p) { return p.dot(g); };
    const double lip = lipschitz_estimate(L, d, pairs, seed + 1);
    const double radius = epsilon / lip;

    CsvFile csv(io.path("theorem7.csv"),
                {"cloud", "kind", "mean_distance", "max_particle_distance", "mean_condition",
                 "per_particle_condition", "energy", "bound", "inequality_holds"});
    csv.comment("lipschitz=" + format_double(lip));

    std::vector<std::string> probe_header = {"cloud", "particle"};
    for (const auto& h : coord_header("c", d)) probe_header.push_back(h);
    CsvFile probes(io.path("probes.csv"), probe_header);

    const auto emit = [&](int cloud, int kind, const Eigen::MatrixXd& pts,
                          const UnitVector& xstar) {
        const ClusterCertificate cert = cluster_certificate(pts, xstar, lip, epsilon, L);
        csv.row({format_int(cloud), format_int(kind), format_double(cert.mean_distance),
                 format_double(cert.max_particle_distance), bool_cell(cert.mean_condition),
                 bool_cell(cert.per_particle_condition), format_double(cert.energy),
                 format_double(cert.bound), bool_cell(cert.inequality_holds)});
        if (cert.mean_condition && !cert.inequality_holds) {
            std::vector<std::string> row = {format_int(cloud), format_int(-1)};
            for (int c = 0; c < d; ++c) row.push_back(format_double(xstar.vec()[c]));
            probes.row(row);
            for (int j = 0; j < pts.cols(); ++j) {
                row = {format_int(cloud), format_int(j)};
                for (int c = 0; c < d; ++c) row.push_back(format_double(pts(c, j)));
                probes.row(row);
            }
        }
    };

    for (int c = 0; c < clouds; ++c) {
        Rng rng(seed + 2 + static_cast<std::uint64_t>(c));
        const UnitVector xstar = sample_uniform_sphere(d, rng);
        Eigen::MatrixXd pts(d, particles);
        for (int j = 0; j < particles; ++j)
            pts.col(j) = sample_geodesic_ball(xstar, radius, rng).vec();
        emit(c, 0, pts, xstar);
    }
    // two symmetric clusters whose mean sits at xstar while every particle
    // is far away: the mean condition alone does not certify the inequality
    for (int a = 0; a < adversarial; ++a) {
        Rng rng(seed + 1000000 + static_cast<std::uint64_t>(a));
        const UnitVector xstar = sample_uniform_sphere(d, rng);
        const Eigen::VectorXd w = sample_tangent_direction(xstar, rng).vec();
        const double psi = 0.2 + (M_PI / 3.0 - 0.2) * rng.uniform();
        const int half = std::max(1, particles / 2);
        Eigen::MatrixXd pts(d, 2 * half);
        const Eigen::VectorXd plus = exp_map(TangentVector(xstar, psi * w)).vec();
        const Eigen::VectorXd minus = exp_map(TangentVector(xstar, -psi * w)).vec();
        for (int j = 0; j < half; ++j) {
            pts.col(j) = plus;
            pts.col(half + j) = minus;
        }
        emit(clouds + a, 1, pts, xstar);
    }
    io.finish("plot 'theorem7.csv' using 'mean_distance':'energy' with points\n");
}

inline void run_geodesic_pairing(const Config& cfg, ExperimentIO& io) {
    Keys k{cfg, io};
    const int d = k.integer("d", 3);
    const double s0 = k.num("s0", 0.3);
    const int levels = k.integer("levels", 7);
    const double T = k.num("T", 1.0);
    const double dt = k.num("dt", 1.0 / 512.0);

    const auto circle = [d](double t) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
        v[0] = std::cos(t);
        v[1] = std::sin(t);
        return v;
    };
    const PathSample xstar = sample_path(circle, T, dt);
    const Eigen::VectorXd normal = Eigen::VectorXd::Unit(d, 2);

    CsvFile csv(io.path("pairing.csv"), {"s", "pairing", "log10_s", "log10_abs"});
    std::vector<double> lx, ly;
    for (int level = 0; level < levels; ++level) {
        const double s = s0 * std::pow(2.0, -level);
        const PathSample z = sample_path(
            [&](double t) {
                return Eigen::VectorXd(std::cos(s) * circle(t) + std::sin(s) * normal);
            },
            T, dt);
        const double pairing = geodesic_residual_pairing(z, xstar, dt);
        lx.push_back(std::log10(s));
        ly.push_back(std::log10(std::abs(pairing)));
        csv.row({format_double(s), format_double(pairing), format_double(lx.back()),
                 format_double(ly.back())});
    }
    const LineFit fit = least_squares_line(lx, ly);
    csv.comment("slope=" + format_double(fit.slope));
    io.finish("set logscale xy\nplot 'pairing.csv' using 's':(abs(column('pairing'))) "
              "with linespoints\n");
}

} // namespace detail

inline std::vector<std::string> experiment_names() {
    std::vector<std::string> names;
    for (const auto& [name, spec] : detail::key_specs()) names.push_back(name);
    return names;
}

// Diagnostics for a config; empty iff run_experiment would accept it.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> out;
    const auto& specs = detail::key_specs();
    const auto it = specs.find(cfg.experiment);
    if (it == specs.end()) {
        out.push_back("unknown experiment '" + cfg.experiment + "'");
        return out;
    }
    const detail::KeySpec& spec = it->second;
    std::set<std::string> allowed(spec.optional.begin(), spec.optional.end());
    for (const auto& k : spec.required) allowed.insert(k);
    for (const auto& k : spec.required)
        if (!cfg.values.has(k)) out.push_back("missing required key '" + k + "'");
    for (const auto& [k, v] : cfg.values.entries())
        if (!allowed.count(k))
            out.push_back("unknown key '" + k + "' for experiment '" + cfg.experiment + "'");
    if (!out.empty()) return out;

    const Config& c = cfg.values;
    const auto check = [&](const std::function<void()>& f) {
        try {
            f();
        } catch (const Error& e) {
            out.push_back(e.what());
        }
    };
    const auto check_grid = [&](double T, double dt) { detail::checked_step_count(T, dt); };

    check([&] {
        if (c.has("seed")) c.get_uint64("seed");
        c.resolve_seed();
    });
    check([&] {
        if (c.has("scheme")) detail::parse_scheme(c.get_string("scheme"));
    });
    const std::string& e = cfg.experiment;
    if (e == "simulate" || e == "landscape" || e == "quad-order" || e == "el-residual") {
        check([&] {
            const int d = c.get_int("d");
            if (d < 2) throw InvalidArgument("d must be >= 2");
        });
        check([&] {
            const int n = c.get_int("n");
            if (n < 1) throw InvalidArgument("n must be >= 1");
            const int token = c.get_int("token", 0);
            if (token < 0 || token >= n) throw InvalidArgument("token must lie in [0, n)");
        });
        check([&] {
            if (!(c.get_double("beta") > 0.0)) throw InvalidArgument("beta must be positive");
        });
    }
    if (e == "simulate") check([&] { check_grid(c.get_double("T", 1.0), c.get_double("dt", 1e-3)); });
    if (e == "landscape") {
        check([&] { check_grid(c.get_double("T", 1.0), c.get_double("dt", 0.02)); });
        check([&] {
            for (double s : c.get_double_list("sigmas", detail::kDefaultSigmas))
                if (s < 0.0) throw InvalidArgument("sigmas must be nonnegative");
            if (c.get_int("trials", 40) < 1) throw InvalidArgument("trials must be >= 1");
            if (!(c.get_double("quad_dt", c.get_double("dt", 0.02)) > 0.0))
                throw InvalidArgument("quad_dt must be positive");
        });
    }
    if (e == "quad-order") {
        check([&] {
            const double T = c.get_double("T", 1.0);
            const std::vector<double> dts = c.get_double_list("dt_list", detail::kDefaultDtList);
            double dt_min = dts.front();
            for (double dt : dts) {
                check_grid(T, dt);
                dt_min = std::min(dt_min, dt);
            }
            for (double dt : dts) {
                const double ratio = dt / dt_min;
                if (std::abs(ratio - std::round(ratio)) > 1e-9)
                    throw GridMismatch("every dt_list entry must be a multiple of the smallest");
            }
        });
    }
    if (e == "el-residual") {
        check([&] { check_grid(c.get_double("T", 1.0), c.get_double("dt", 0.01)); });
        check([&] {
            if (detail::checked_step_count(c.get_double("T", 1.0), c.get_double("dt", 0.01)) < 2)
                throw InvalidArgument("el-residual needs at least two steps");
            const std::string kind = c.get_string("lagrangian", "kinetic-potential");
            if (kind != "kinetic-potential" && kind != "geodesic" && kind != "transformer")
                throw InvalidArgument(
                    "lagrangian must be kinetic-potential, geodesic, or transformer");
        });
    }
    if (e == "ball-bound") {
        check([&] {
            if (!(c.get_double("epsilon") > 0.0))
                throw InvalidArgument("epsilon must be positive");
            const int d = c.get_int("d", 3);
            if (d < 2) throw InvalidArgument("d must be >= 2");
            if (!(c.get_double("mu_sc", 1.0) > 0.0))
                throw InvalidArgument("mu_sc must be positive");
            if (!(c.get_double("beta", 1.0) > 0.0))
                throw InvalidArgument("beta must be positive");
            if (c.get_int("samples", 10000) < 1)
                throw InvalidArgument("samples must be >= 1");
            if (c.get_int("workers", 1) < 1) throw InvalidArgument("workers must be >= 1");
            if (c.get_int("refine_starts", 64) < 1)
                throw InvalidArgument("refine_starts must be >= 1");
            c.get_bool("estimate_m_third", false);
            detail::parse_anchor(c, d);
            check_grid(c.get_double("T", 1.0), c.get_double("dt", 0.01));
        });
    }
    if (e == "dirac") {
        check([&] {
            if (c.get_int("grids", 10) < 1) throw InvalidArgument("grids must be >= 1");
            if (c.get_int("grid_size", 100) < 1)
                throw InvalidArgument("grid_size must be >= 1");
            if (c.get_int("mixtures", 1000) < 1)
                throw InvalidArgument("mixtures must be >= 1");
            if (c.get_int("d", 3) < 2) throw InvalidArgument("d must be >= 2");
        });
    }
    if (e == "theorem7") {
        check([&] {
            if (!(c.get_double("epsilon") > 0.0))
                throw InvalidArgument("epsilon must be positive");
            if (c.get_int("d", 3) < 2) throw InvalidArgument("d must be >= 2");
            if (c.get_int("particles", 32) < 2)
                throw InvalidArgument("particles must be >= 2");
            if (c.get_int("clouds", 100) < 0) throw InvalidArgument("clouds must be >= 0");
            if (c.get_int("adversarial", 20) < 0)
                throw InvalidArgument("adversarial must be >= 0");
            if (c.get_int("pairs", 10000) < 100)
                throw InvalidArgument("pairs must be >= 100");
        });
    }
    if (e == "geodesic-pairing") {
        check([&] {
            if (c.get_int("d", 3) < 3)
                throw InvalidArgument("geodesic-pairing needs d >= 3");
            if (!(c.get_double("s0", 0.3) > 0.0)) throw InvalidArgument("s0 must be positive");
            if (c.get_double("s0", 0.3) >= M_PI / 2.0)
                throw InvalidArgument("s0 must be below pi/2");
            if (c.get_int("levels", 7) < 2) throw InvalidArgument("levels must be >= 2");
            check_grid(c.get_double("T", 1.0), c.get_double("dt", 1.0 / 512.0));
        });
    }
    return out;
}

inline void run_experiment(const ExperimentConfig& cfg) {
    const std::vector<std::string> diags = validate_config(cfg);
    if (!diags.empty()) throw InvalidArgument(diags.front());
    detail::ExperimentIO io(cfg, true);
    if (cfg.experiment == "simulate")
        detail::run_simulate(cfg.values, io);
    else if (cfg.experiment == "landscape")
        detail::run_landscape(cfg.values, io);
    else if (cfg.experiment == "quad-order")
        detail::run_quad_order(cfg.values, io);
    else if (cfg.experiment == "el-residual")
        detail::run_el_residual(cfg.values, io);
    else if (cfg.experiment == "ball-bound")
        detail::run_ball_bound(cfg.values, io);
    else if (cfg.experiment == "dirac")
        detail::run_dirac(cfg.values, io);
    else if (cfg.experiment == "theorem7")
        detail::run_theorem7(cfg.values, io);
    else if (cfg.experiment == "geodesic-pairing")
        detail::run_geodesic_pairing(cfg.values, io);
    else
        throw InvalidArgument("unknown experiment '" + cfg.experiment + "'");
}

} // namespace sphereflow
