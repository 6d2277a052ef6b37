#pragma once

// Discrete measures on the sphere, pushforward energies, brute-force Dirac
// optimality, the geodesic-ball lower bound, and the Monte Carlo measure of
// the epsilon-optimal start set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sphereflow/dynamics.hpp"
#include "sphereflow/errors.hpp"
#include "sphereflow/functionals.hpp"
#include "sphereflow/numerics.hpp"
#include "sphereflow/rng.hpp"
#include "sphereflow/sphere.hpp"
#include "sphereflow/variational.hpp"

namespace sphereflow {

using PointCost = std::function<double(const Eigen::VectorXd&)>;

namespace detail {

// Greedy merge of atoms closer than tol; weights of merged atoms summed onto
// the first occurrence.
inline void merge_atoms(Eigen::MatrixXd& atoms, Eigen::VectorXd& weights, double tol) {
    const int m = static_cast<int>(atoms.cols());
    std::vector<int> keep;
    keep.reserve(static_cast<std::size_t>(m));
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        bool merged = false;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if (geodesic_distance(Eigen::VectorXd(atoms.col(keep[k])),
                                  Eigen::VectorXd(atoms.col(j))) <= tol) {
                w[k] += weights[j];
                merged = true;
                break;
            }
        }
        if (!merged) {
            keep.push_back(j);
            w.push_back(weights[j]);
        }
    }
    if (static_cast<int>(keep.size()) == m) return;
    Eigen::MatrixXd a(atoms.rows(), static_cast<int>(keep.size()));
    Eigen::VectorXd v(static_cast<int>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        a.col(static_cast<int>(k)) = atoms.col(keep[k]);
        v[static_cast<int>(k)] = w[k];
    }
    atoms = std::move(a);
    weights = std::move(v);
}

} // namespace detail

// Weighted point masses on the sphere. Atoms within 1e-12 of each other are
// merged at construction; zero-mass atoms are dropped (they are invisible to
// every energy and every pushforward).
class DiscreteMeasure {
public:
    DiscreteMeasure(Eigen::MatrixXd atoms, Eigen::VectorXd weights) {
        const int m = static_cast<int>(atoms.cols());
        if (m < 1) throw InvalidArgument("DiscreteMeasure needs at least one atom");
        if (atoms.rows() < 2) throw DimensionMismatch("atoms must live in dimension >= 2");
        if (weights.size() != m) throw DimensionMismatch("one weight per atom required");
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            if (std::abs(atoms.col(j).norm() - 1.0) > kUnitNormTol)
                throw InvalidArgument("atoms must be unit vectors");
            if (weights[j] < 0.0) throw InvalidArgument("weights must be nonnegative");
            sum += weights[j];
        }
        if (std::abs(sum - 1.0) > 1e-12) throw InvalidArgument("weights must sum to 1");
        detail::merge_atoms(atoms, weights, 1e-12);
        std::vector<int> live;
        for (int j = 0; j < weights.size(); ++j)
            if (weights[j] > 0.0) live.push_back(j);
        atoms_.resize(atoms.rows(), static_cast<int>(live.size()));
        weights_.resize(static_cast<int>(live.size()));
        for (std::size_t k = 0; k < live.size(); ++k) {
            atoms_.col(static_cast<int>(k)) = atoms.col(live[k]);
            weights_[static_cast<int>(k)] = weights[live[k]];
        }
    }

    static DiscreteMeasure dirac(const UnitVector& p) {
        Eigen::MatrixXd a(p.dim(), 1);
        a.col(0) = p.vec();
        return DiscreteMeasure(std::move(a), Eigen::VectorXd::Ones(1));
    }
    static DiscreteMeasure uniform(Eigen::MatrixXd atoms) {
        const int m = static_cast<int>(atoms.cols());
        if (m < 1) throw InvalidArgument("DiscreteMeasure needs at least one atom");
        return DiscreteMeasure(std::move(atoms),
                               Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
    }

    int dim() const { return static_cast<int>(atoms_.rows()); }
    int size() const { return static_cast<int>(atoms_.cols()); }
    const Eigen::MatrixXd& atoms() const { return atoms_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    Eigen::VectorXd atom(int j) const { return atoms_.col(j); }

private:
    Eigen::MatrixXd atoms_;
    Eigen::VectorXd weights_;
};

inline double measure_energy(const PointCost& L, const DiscreteMeasure& mu0) {
    double e = 0.0;
    for (int j = 0; j < mu0.size(); ++j) e += mu0.weights()[j] * L(mu0.atom(j));
    return e;
}

// Time-T pushforward of the measure under its own flow: the atoms are the
// ensemble, so advecting the ensemble advects every atom through the
// co-evolving field. Atoms landing within 1e-9 are merged.
inline DiscreteMeasure pushforward_measure(const DiscreteMeasure& mu0,
                                           const AttentionParams& params, double dt,
                                           double T = 1.0, Scheme scheme = Scheme::Midpoint) {
    const TokenConfiguration cfg(mu0.atoms(), mu0.weights());
    const Trajectory traj = integrate(cfg, params, T, dt, scheme);
    Eigen::MatrixXd atoms = traj.state(traj.steps()).points();
    Eigen::VectorXd weights = mu0.weights();
    detail::merge_atoms(atoms, weights, 1e-9);
    return DiscreteMeasure(std::move(atoms), std::move(weights));
}

struct DiracOptimalityReport {
    double dirac_minimum = 0.0;
    int dirac_argmin = 0;
    double mixture_minimum = 0.0;
    int n_mixtures = 0;
    bool inequality_holds = false;
    bool degenerate_tie = false;
};

// Energy is linear in the weights, so the minimum over the simplex sits at a
// vertex. Mixture energies are evaluated in the shifted form
// Lmin + sum w_j (L_j - Lmin), whose convex-combination bound survives
// floating-point rounding; ties at the Dirac minimum resolve to the lowest
// grid index.
inline DiracOptimalityReport brute_force_dirac_optimality(const Eigen::MatrixXd& grid,
                                                          const PointCost& L, int n_mixtures,
                                                          std::uint64_t seed) {
    const int m = static_cast<int>(grid.cols());
    if (m < 1) throw InvalidArgument("brute_force_dirac_optimality needs a nonempty grid");
    if (n_mixtures < 1) throw InvalidArgument("n_mixtures must be >= 1");
    Eigen::VectorXd vals(m);
    for (int j = 0; j < m; ++j) vals[j] = L(grid.col(j));
    DiracOptimalityReport report;
    report.n_mixtures = n_mixtures;
    report.dirac_argmin = 0;
    report.dirac_minimum = vals[0];
    int hits = 1;
    for (int j = 1; j < m; ++j) {
        if (vals[j] < report.dirac_minimum) {
            report.dirac_minimum = vals[j];
            report.dirac_argmin = j;
            hits = 1;
        } else if (vals[j] == report.dirac_minimum) {
            ++hits;
        }
    }
    report.degenerate_tie = hits > 1;

    Rng rng(seed);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_mixtures; ++k) {
        Eigen::VectorXd g(m);
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            g[j] = -std::log(1.0 - rng.uniform());
            s += g[j];
        }
        double shifted = 0.0;
        for (int j = 0; j < m; ++j)
            shifted += (g[j] / s) * (vals[j] - report.dirac_minimum);
        best = std::min(best, report.dirac_minimum + shifted);
    }
    report.mixture_minimum = best;
    report.inequality_holds = report.mixture_minimum >= report.dirac_minimum;
    return report;
}

struct ClusterCertificate {
    bool mean_condition = false;
    bool per_particle_condition = false;
    double energy = 0.0;
    double bound = 0.0;
    bool inequality_holds = false;
    double mean_distance = 0.0;
    double max_particle_distance = 0.0;
};

// Certificate for a particle cloud against a candidate limit point: the mean
// condition places the normalized empirical mean within epsilon/lipschitz of
// xstar, the per-particle condition places every particle there. Only the
// latter is a proof-level sufficient condition for energy <= L(xstar) + eps.
inline ClusterCertificate cluster_certificate(const Eigen::MatrixXd& particles,
                                              const UnitVector& xstar, double lipschitz,
                                              double epsilon, const PointCost& L) {
    const int n = static_cast<int>(particles.cols());
    if (n < 1) throw InvalidArgument("cluster_certificate needs at least one particle");
    if (particles.rows() != xstar.dim()) throw DimensionMismatch("particle dimension differs");
    if (!(lipschitz > 0.0) || !(epsilon > 0.0))
        throw InvalidArgument("lipschitz and epsilon must be positive");
    for (int j = 0; j < n; ++j)
        if (std::abs(particles.col(j).norm() - 1.0) > kUnitNormTol)
            throw InvalidArgument("particles must be unit vectors");

    const Eigen::VectorXd mean = particles.rowwise().mean();
    if (mean.norm() <= 1e-12) throw ZeroMeanParticles("empirical mean is numerically zero");
    const Eigen::VectorXd xbar = mean / mean.norm();

    ClusterCertificate cert;
    const double radius = epsilon / lipschitz;
    cert.mean_distance = geodesic_distance(xbar, xstar.vec());
    cert.mean_condition = cert.mean_distance <= radius;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        cert.max_particle_distance = std::max(
            cert.max_particle_distance,
            geodesic_distance(Eigen::VectorXd(particles.col(j)), xstar.vec()));
        acc += L(particles.col(j));
    }
    cert.per_particle_condition = cert.max_particle_distance <= radius;
    cert.energy = acc / static_cast<double>(n);
    cert.bound = L(xstar.vec()) + epsilon;
    cert.inequality_holds = cert.energy <= cert.bound;
    return cert;
}

// Max of |L(p)-L(q)| / d_g(p,q) over sampled pairs; pairs closer than 1e-3
// are redrawn. One sequential stream, so the first k accepted pairs are the
// same for every n_pairs >= k and the estimate is monotone in n_pairs. A
// lower estimate of the true constant.
inline double lipschitz_estimate(const PointCost& L, int d, int n_pairs, std::uint64_t seed) {
    if (n_pairs < 100) throw InvalidArgument("lipschitz_estimate needs n_pairs >= 100");
    Rng rng(seed);
    double best = 0.0;
    for (int k = 0; k < n_pairs; ++k) {
        double dist = 0.0;
        Eigen::VectorXd p, q;
        do {
            p = sample_uniform_sphere(d, rng).vec();
            q = sample_uniform_sphere(d, rng).vec();
            dist = geodesic_distance(p, q);
        } while (dist < 1e-3);
        best = std::max(best, std::abs(L(p) - L(q)) / dist);
    }
    return best;
}

// min{ R, sqrt( 6 eps / ( 3 (mu+alpha) (sin R / R)^{d-1} (d-1)/(d+1) - M ) ) }
inline double ball_bound_radius(double epsilon, double mu_sc, double alpha, int d, double r_cap,
                                double m_third) {
    if (d < 2) throw DimensionMismatch("ball_bound_radius: d must be >= 2");
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
    if (!(r_cap > 0.0) || r_cap > M_PI)
        throw InvalidArgument("ball_bound_radius: R must lie in (0, pi]");
    const double shape = std::pow(std::sin(r_cap) / r_cap, d - 1);
    const double denom = 3.0 * (mu_sc + alpha) * shape *
                             (static_cast<double>(d - 1) / static_cast<double>(d + 1)) -
                         m_third;
    if (denom <= 0.0) throw IllPosedBound("third-derivative bound overwhelms the convexity term");
    return std::min(r_cap, std::sqrt(6.0 * epsilon / denom));
}

// Sup of |d^3/ds^3 L(p + s v)| over sampled ambient lines, by a centered
// 4-point stencil. Zero up to stencil noise for costs quadratic in ambient
// coordinates.
inline double third_derivative_bound_estimate(const PointCost& L, int d, int n_probes,
                                              std::uint64_t seed, double fd_step = 1e-2) {
    if (n_probes < 1) throw InvalidArgument("n_probes must be >= 1");
    Rng rng(seed);
    const double h = fd_step;
    double best = 0.0;
    for (int k = 0; k < n_probes; ++k) {
        const Eigen::VectorXd p = sample_uniform_sphere(d, rng).vec();
        const Eigen::VectorXd v = sample_uniform_sphere(d, rng).vec();
        const double third = (-L(p - 2.0 * h * v) + 2.0 * L(p - h * v) - 2.0 * L(p + h * v) +
                              L(p + 2.0 * h * v)) /
                             (2.0 * h * h * h);
        best = std::max(best, std::abs(third));
    }
    return best;
}

struct BallBoundReport {
    double epsilon = 0.0;
    double mu_sc = 0.0;
    double alpha = 0.0;
    int d = 0;
    double r_cap = 0.0;
    double m_third = 0.0;
    double radius = 0.0;
    double bound_area = 0.0;
    double inf_action = 0.0;
    double mc_area = 0.0;
    double mc_stderr = 0.0;
    int samples = 0;
    int workers = 1;
};

struct BallBoundOptions {
    double epsilon = 1e-2;
    double alpha = 0.0;
    double r_cap = 1.0;
    double m_third = 0.0;
    double T = 1.0;
    double dt = 1e-2;
    int n_samples = 10000;
    std::uint64_t seed = 0;
    double beta = 1.0;
    int workers = 1;
    Scheme scheme = Scheme::Midpoint;
    int refine_starts = 64;
    double refine_tol = 1e-10;
};

namespace detail {

// Action of the harness Lagrangian along the flow trajectory started at p.
inline double flow_start_action(const Lagrangian& L, const Eigen::VectorXd& p,
                                const BallBoundOptions& opt) {
    Eigen::MatrixXd start(p.size(), 1);
    start.col(0) = p / p.norm();
    const TokenConfiguration cfg(start);
    const AttentionParams params{opt.beta};
    const Trajectory traj = integrate(cfg, params, opt.T, opt.dt, opt.scheme);
    return lagrangian_action(L, token_path_sample(traj, 0), traj, 0, opt.beta, opt.dt);
}

// Coordinate sweeps along geodesics from p, one golden-section line search
// per tangent direction, repeated until the action stops improving.
inline std::pair<Eigen::VectorXd, double> refine_start(const Lagrangian& L, Eigen::VectorXd p,
                                                       double value,
                                                       const BallBoundOptions& opt) {
    const int d = static_cast<int>(p.size());
    const auto move_along = [](const Eigen::VectorXd& base, const Eigen::VectorXd& dir,
                               double t) {
        return exp_map(TangentVector(UnitVector(base), t * dir)).vec();
    };
    for (int round = 0; round < 50; ++round) {
        const double before = value;
        const Eigen::MatrixXd frame = tangent_basis(UnitVector(p));
        for (int k = 0; k < d - 1; ++k) {
            const Eigen::VectorXd dir = frame.col(k);
            const auto line = [&](double t) {
                return flow_start_action(L, move_along(p, dir, t), opt);
            };
            const double t_best = golden_section_minimize(line, -M_PI / 2.0, M_PI / 2.0,
                                                          opt.refine_tol);
            const double cand = line(t_best);
            if (cand < value) {
                value = cand;
                p = move_along(p, dir, t_best);
            }
        }
        if (before - value <= 1e-13 * (1.0 + std::abs(before))) break;
    }
    return {p, value};
}

} // namespace detail

// Monte Carlo measure of {p : action of the flow trajectory from p <= inf + eps}
// against the geodesic-ball lower bound. The infimum comes from multistart
// refinement of the best sampled starts. Sample i always draws from substream
// seed + i and lands in slot i, so the tally is independent of the worker
// count; workers only shard the evaluation loop.
inline BallBoundReport epsilon_optimal_set_measure(const Lagrangian& L,
                                                   const BallBoundOptions& opt) {
    if (L.kind != Lagrangian::Kind::StronglyConvexTest)
        throw InvalidArgument("the ball-bound harness needs the strongly convex test Lagrangian");
    const int d = static_cast<int>(L.anchor.size());
    if (d < 2) throw DimensionMismatch("anchor dimension must be >= 2");
    if (opt.n_samples < 1) throw InvalidArgument("n_samples must be >= 1");

    const int n = opt.n_samples;
    Eigen::MatrixXd starts(d, n);
    Eigen::VectorXd actions(n);
    const int workers = std::max(1, opt.workers);
    const auto run_block = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            Rng rng(opt.seed + static_cast<std::uint64_t>(i));
            starts.col(i) = sample_uniform_sphere(d, rng).vec();
            actions[i] = detail::flow_start_action(L, starts.col(i), opt);
        }
    };
    if (workers == 1) {
        run_block(0, n);
    } else {
        std::vector<std::thread> pool;
        const int block = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(run_block, w * block, std::min(n, (w + 1) * block));
        for (auto& t : pool) t.join();
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return actions[a] != actions[b] ? actions[a] < actions[b] : a < b;
    });
    double inf_action = actions[order[0]];
    const int n_refine = std::min(opt.refine_starts, n);
    for (int k = 0; k < n_refine; ++k) {
        const int i = order[static_cast<std::size_t>(k)];
        const auto refined =
            detail::refine_start(L, starts.col(i), actions[i], opt);
        inf_action = std::min(inf_action, refined.second);
    }

    int count = 0;
    for (int i = 0; i < n; ++i)
        if (actions[i] <= inf_action + opt.epsilon) ++count;
    const double frac = static_cast<double>(count) / static_cast<double>(n);
    const double full_area = unit_sphere_area(d - 1);

    BallBoundReport report;
    report.epsilon = opt.epsilon;
    report.mu_sc = L.mu_sc;
    report.alpha = opt.alpha;
    report.d = d;
    report.r_cap = opt.r_cap;
    report.m_third = opt.m_third;
    report.radius = ball_bound_radius(opt.epsilon, L.mu_sc, opt.alpha, d, opt.r_cap, opt.m_third);
    report.bound_area = geodesic_ball_area(d, report.radius);
    report.inf_action = inf_action;
    report.mc_area = frac * full_area;
    report.mc_stderr = full_area * std::sqrt(frac * (1.0 - frac) / static_cast<double>(n));
    report.samples = n;
    report.workers = workers;
    return report;
}

} // namespace sphereflow
