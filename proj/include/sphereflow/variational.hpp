#pragma once

// Euler-Lagrange residuals, first variations, perturbation batteries, and the
// action landscape around a reference trajectory.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sphereflow/dynamics.hpp"
#include "sphereflow/errors.hpp"
#include "sphereflow/functionals.hpp"
#include "sphereflow/numerics.hpp"
#include "sphereflow/rng.hpp"
#include "sphereflow/sphere.hpp"

namespace sphereflow {

// A Lagrangian kind plus whatever data it carries. Custom wraps a user scalar
// L(t, x, xdot) and is the only kind without analytic partials.
struct Lagrangian {
    enum class Kind {
        TransformerAction,
        KineticPotential,
        GeodesicAction,
        TokenSelection,
        StronglyConvexTest,
        Custom
    };

    using Scalar = std::function<double(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

    Kind kind = Kind::KineticPotential;
    std::shared_ptr<const Trajectory> target; // TokenSelection
    int target_token = 0;
    Eigen::VectorXd anchor; // StronglyConvexTest
    double mu_sc = 0.0;
    Scalar custom;

    static Lagrangian transformer() { return {Kind::TransformerAction, nullptr, 0, {}, 0.0, {}}; }
    static Lagrangian kinetic_potential() {
        return {Kind::KineticPotential, nullptr, 0, {}, 0.0, {}};
    }
    static Lagrangian geodesic() { return {Kind::GeodesicAction, nullptr, 0, {}, 0.0, {}}; }
    static Lagrangian token_selection(std::shared_ptr<const Trajectory> tgt, int token = 0) {
        if (!tgt) throw InvalidArgument("token_selection Lagrangian needs a target trajectory");
        return {Kind::TokenSelection, std::move(tgt), token, {}, 0.0, {}};
    }
    static Lagrangian strongly_convex(Eigen::VectorXd a, double mu) {
        if (!(mu > 0.0)) throw InvalidArgument("strong convexity modulus must be positive");
        return {Kind::StronglyConvexTest, nullptr, 0, std::move(a), mu, {}};
    }
    static Lagrangian custom_scalar(Scalar f) {
        Lagrangian l{Kind::Custom, nullptr, 0, {}, 0.0, std::move(f)};
        if (!l.custom) throw InvalidArgument("custom Lagrangian needs a callable");
        return l;
    }
};

struct ResidualSeries {
    std::vector<double> times;  // interior grid points only
    Eigen::MatrixXd residuals;  // d x times.size()
    Eigen::VectorXd norms;
    bool used_finite_differences = false;
};

namespace detail {

struct PartialsSeries {
    Eigen::MatrixXd dx;   // dL/dx at each grid point
    Eigen::MatrixXd dxd;  // dL/dxdot at each grid point
    bool by_fd = false;
};

// dL/dx and dL/dxdot along one token of a trajectory, with the trajectory
// itself supplying the measure where the Lagrangian needs one.
inline PartialsSeries lagrangian_partials(const Lagrangian& L, const Trajectory& traj, int token,
                                          double beta) {
    const int d = traj.dim();
    const int cols = traj.steps() + 1;
    const Eigen::MatrixXd path = traj.token_path(token);
    const Eigen::MatrixXd vel = fd_derivative(path, traj.dt());
    PartialsSeries out;
    out.dx = Eigen::MatrixXd::Zero(d, cols);
    out.dxd = Eigen::MatrixXd::Zero(d, cols);
    switch (L.kind) {
        case Lagrangian::Kind::KineticPotential:
            for (int i = 0; i < cols; ++i) {
                out.dx.col(i) = grad_potential(path.col(i), traj.state(i), beta);
                out.dxd.col(i) = 2.0 * vel.col(i);
            }
            break;
        case Lagrangian::Kind::GeodesicAction:
            for (int i = 0; i < cols; ++i) out.dxd.col(i) = 2.0 * vel.col(i);
            break;
        case Lagrangian::Kind::StronglyConvexTest:
            if (L.anchor.size() != d) throw DimensionMismatch("anchor dimension differs");
            for (int i = 0; i < cols; ++i) {
                out.dx.col(i) = L.mu_sc * (path.col(i) - L.anchor);
                out.dxd.col(i) = vel.col(i);
            }
            break;
        case Lagrangian::Kind::TransformerAction:
            // L = |v|^2/2 - <v, P(t)> with P read from the trajectory itself
            for (int i = 0; i < cols; ++i) {
                const Eigen::VectorXd x = path.col(i);
                const Eigen::VectorXd p =
                    beta * project_tangent(x, mean_field(x, traj.state(i), beta));
                out.dxd.col(i) = vel.col(i) - p;
            }
            break;
        case Lagrangian::Kind::TokenSelection: {
            const Trajectory& tgt = *L.target;
            detail::check_same_span(traj.duration(), tgt.duration(), "token_selection residual");
            const RefInterpolant ti(tgt);
            for (int i = 0; i < cols; ++i) {
                const Eigen::VectorXd g =
                    ti.projected_grad(traj.time(i), L.target_token, beta);
                out.dxd.col(i) = 2.0 * (vel.col(i) - g);
            }
            break;
        }
        case Lagrangian::Kind::Custom: {
            out.by_fd = true;
            const double eps = 1e-6;
            for (int i = 0; i < cols; ++i) {
                const double t = traj.time(i);
                for (int c = 0; c < d; ++c) {
                    Eigen::VectorXd xp = path.col(i), xm = path.col(i);
                    xp[c] += eps;
                    xm[c] -= eps;
                    out.dx(c, i) =
                        (L.custom(t, xp, vel.col(i)) - L.custom(t, xm, vel.col(i))) / (2.0 * eps);
                    Eigen::VectorXd vp = vel.col(i), vm = vel.col(i);
                    vp[c] += eps;
                    vm[c] -= eps;
                    out.dxd(c, i) =
                        (L.custom(t, path.col(i), vp) - L.custom(t, path.col(i), vm)) / (2.0 * eps);
                }
            }
            break;
        }
    }
    return out;
}

} // namespace detail

// Pointwise residual r(t_i) = dL/dx - d/dt dL/dxdot at the interior grid
// points; the time derivative is a centered difference of the dL/dxdot series.
inline ResidualSeries el_residual(const Lagrangian& L, const Trajectory& traj, int token,
                                  double beta) {
    if (token < 0 || token >= traj.tokens()) throw InvalidArgument("token index out of range");
    if (traj.steps() < 2) throw InvalidArgument("el_residual needs at least three snapshots");
    const auto parts = detail::lagrangian_partials(L, traj, token, beta);
    const int m = traj.steps() - 1;
    ResidualSeries out;
    out.used_finite_differences = parts.by_fd;
    out.times.resize(static_cast<std::size_t>(m));
    out.residuals.resize(traj.dim(), m);
    out.norms.resize(m);
    const double dt = traj.dt();
    for (int i = 1; i <= m; ++i) {
        const Eigen::VectorXd db = (parts.dxd.col(i + 1) - parts.dxd.col(i - 1)) / (2.0 * dt);
        out.times[static_cast<std::size_t>(i - 1)] = traj.time(i);
        out.residuals.col(i - 1) = parts.dx.col(i) - db;
        out.norms[i - 1] = out.residuals.col(i - 1).norm();
    }
    return out;
}

inline ResidualSeries projected_el_residual(const Lagrangian& L, const Trajectory& traj, int token,
                                            double beta) {
    ResidualSeries out = el_residual(L, traj, token, beta);
    const Eigen::MatrixXd path = traj.token_path(token);
    for (int i = 0; i < out.residuals.cols(); ++i) {
        out.residuals.col(i) = project_tangent(Eigen::VectorXd(path.col(i + 1)),
                                               Eigen::VectorXd(out.residuals.col(i)));
        out.norms[i] = out.residuals.col(i).norm();
    }
    return out;
}

// Action of an arbitrary sampled path under a Lagrangian, with the reference
// trajectory supplying measures and targets. Used directly and as the basis
// of the finite-difference first variation.
inline double lagrangian_action(const Lagrangian& L, const PathSample& h, const Trajectory& ref,
                                int token, double beta, double quad_dt) {
    detail::check_same_span(h.duration(), ref.duration(), "lagrangian_action");
    const double T = h.duration();
    switch (L.kind) {
        case Lagrangian::Kind::TransformerAction:
            return transformer_action(h, ref, token, beta, quad_dt);
        case Lagrangian::Kind::KineticPotential: {
            const RefInterpolant interp(ref);
            const CubicSpline hs = detail::path_spline(h);
            const CubicSpline hd = detail::path_derivative_spline(h);
            return midpoint_quadrature_richardson(
                [&](double t) {
                    const Eigen::MatrixXd a = interp.atoms(t);
                    const auto st =
                        detail::attention_stats_raw(hs.value(t), a, interp.weights(), beta);
                    return hd.value(t).squaredNorm() + st.log_z;
                },
                0.0, T, quad_dt);
        }
        case Lagrangian::Kind::GeodesicAction: {
            const CubicSpline hd = detail::path_derivative_spline(h);
            return midpoint_quadrature_richardson(
                [&](double t) { return hd.value(t).squaredNorm(); }, 0.0, T, quad_dt);
        }
        case Lagrangian::Kind::TokenSelection: {
            const Trajectory& tgt = *L.target;
            detail::check_same_span(h.duration(), tgt.duration(), "token_selection action");
            const RefInterpolant ti(tgt);
            const CubicSpline hd = detail::path_derivative_spline(h);
            const double integral = midpoint_quadrature_richardson(
                [&](double t) {
                    return (hd.value(t) - ti.projected_grad(t, L.target_token, beta))
                        .squaredNorm();
                },
                0.0, T, quad_dt);
            const Eigen::VectorXd dx0 =
                h.values.col(0) - tgt.state(0).point(L.target_token);
            return integral + 0.5 * dx0.squaredNorm();
        }
        case Lagrangian::Kind::StronglyConvexTest: {
            if (L.anchor.size() != h.dim()) throw DimensionMismatch("anchor dimension differs");
            const CubicSpline hs = detail::path_spline(h);
            const CubicSpline hd = detail::path_derivative_spline(h);
            return midpoint_quadrature_richardson(
                [&](double t) {
                    return 0.5 * L.mu_sc * (hs.value(t) - L.anchor).squaredNorm() +
                           0.5 * hd.value(t).squaredNorm();
                },
                0.0, T, quad_dt);
        }
        case Lagrangian::Kind::Custom: {
            const CubicSpline hs = detail::path_spline(h);
            const CubicSpline hd = detail::path_derivative_spline(h);
            return midpoint_quadrature_richardson(
                [&](double t) { return L.custom(t, hs.value(t), hd.value(t)); }, 0.0, T, quad_dt);
        }
    }
    throw InvalidArgument("unhandled Lagrangian kind");
}

// First variation of the action at h in direction delta. TransformerAction has
// the analytic form Int( <h', delta'> - <delta', P(t)> )dt plus the boundary
// term's variation; every other kind is a central difference at eps = 1e-5.
inline double first_variation(const Lagrangian& L, const PathSample& h, const Trajectory& ref,
                              int token, const PathSample& delta, double beta, double quad_dt) {
    if (delta.dim() != h.dim() || delta.steps() != h.steps() ||
        std::abs(delta.dt - h.dt) > 1e-12 * h.dt)
        throw GridMismatch("first_variation: delta grid differs from h");
    if (L.kind == Lagrangian::Kind::TransformerAction) {
        detail::check_same_span(h.duration(), ref.duration(), "first_variation");
        const RefInterpolant interp(ref);
        const CubicSpline hd = detail::path_derivative_spline(h);
        const CubicSpline dd = detail::path_derivative_spline(delta);
        const double integral = midpoint_quadrature_richardson(
            [&](double t) {
                const Eigen::VectorXd p = interp.projected_grad(t, token, beta);
                return dd.value(t).dot(hd.value(t) - p);
            },
            0.0, h.duration(), quad_dt);
        const Eigen::VectorXd x0 = ref.state(0).point(token);
        return integral + (h.values.col(0) - x0).dot(delta.values.col(0));
    }
    const double eps = 1e-5;
    PathSample hp = h, hm = h;
    hp.values += eps * delta.values;
    hm.values -= eps * delta.values;
    const double ap = lagrangian_action(L, hp, ref, token, beta, quad_dt);
    const double am = lagrangian_action(L, hm, ref, token, beta, quad_dt);
    return (ap - am) / (2.0 * eps);
}

struct PerturbedPath {
    PathSample path;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    double l2_distance = 0.0;
};

// Gaussian noise, smoothed by a 3-point moving average (edges replicated),
// added to one token's path and renormalized samplewise. sigma = 0 returns
// the base path bit for bit.
inline PerturbedPath perturb_trajectory(const Trajectory& base, int token, double sigma,
                                        std::uint64_t seed) {
    if (token < 0 || token >= base.tokens()) throw InvalidArgument("token index out of range");
    if (sigma < 0.0) throw InvalidArgument("sigma must be nonnegative");
    const Eigen::MatrixXd path = base.token_path(token);
    PerturbedPath out;
    out.sigma = sigma;
    out.seed = seed;
    if (sigma == 0.0) {
        out.path = PathSample(base.dt(), path);
        out.l2_distance = 0.0;
        return out;
    }
    const int d = base.dim();
    const int cols = base.steps() + 1;
    Rng rng(seed);
    Eigen::MatrixXd noise(d, cols);
    for (int i = 0; i < cols; ++i)
        for (int c = 0; c < d; ++c) noise(c, i) = rng.gaussian();
    Eigen::MatrixXd smooth(d, cols);
    for (int i = 0; i < cols; ++i) {
        const int lo = std::max(i - 1, 0);
        const int hi = std::min(i + 1, cols - 1);
        smooth.col(i) = (noise.col(lo) + noise.col(i) + noise.col(hi)) / 3.0;
    }
    Eigen::MatrixXd vals(d, cols);
    double acc = 0.0;
    for (int i = 0; i < cols; ++i) {
        const Eigen::VectorXd v = path.col(i) + sigma * smooth.col(i);
        const double n = v.norm();
        if (n <= kNearZeroTol) throw NearZeroVector("perturbed sample collapsed to the origin");
        vals.col(i) = v / n;
        acc += (vals.col(i) - path.col(i)).squaredNorm();
    }
    out.path = PathSample(base.dt(), std::move(vals));
    out.l2_distance = std::sqrt(base.dt() * acc);
    return out;
}

struct LandscapeRow {
    int trial = 0;
    double sigma = 0.0;
    double l2_distance = 0.0;
    double pca_deviation = 0.0;
    double action = 0.0;
};

struct LandscapeResult {
    std::vector<LandscapeRow> rows;
};

// Noise-level sweep around one token's path: every trial perturbs, scores the
// action, and contributes a flattened deviation row to a batch PCA. The
// signed PCA coordinate uses the first principal direction with its sign
// fixed so the largest-magnitude loading is positive. Trial seeds are
// seed0 + trial, so rows are reproducible independent of evaluation order.
inline LandscapeResult energy_landscape(const Trajectory& base, int token, double beta,
                                        const std::vector<double>& sigmas, int trials_per_sigma,
                                        std::uint64_t seed0, double quad_dt) {
    if (sigmas.empty() || trials_per_sigma < 1)
        throw InvalidArgument("energy_landscape needs sigmas and trials_per_sigma >= 1");
    const int total = static_cast<int>(sigmas.size()) * trials_per_sigma;
    const TransformerActionEvaluator eval(base, token, beta, quad_dt);
    const Eigen::MatrixXd ref_path = base.token_path(token);
    const long flat = static_cast<long>(base.dim()) * (base.steps() + 1);

    LandscapeResult out;
    out.rows.resize(static_cast<std::size_t>(total));
    Eigen::MatrixXd deviations(total, flat);
    for (int t = 0; t < total; ++t) {
        const double sigma = sigmas[static_cast<std::size_t>(t / trials_per_sigma)];
        const PerturbedPath p = perturb_trajectory(base, token, sigma, seed0 + static_cast<std::uint64_t>(t));
        LandscapeRow& row = out.rows[static_cast<std::size_t>(t)];
        row.trial = t;
        row.sigma = sigma;
        row.l2_distance = p.l2_distance;
        row.action = eval.action(p.path);
        const Eigen::MatrixXd dev = p.path.values - ref_path;
        deviations.row(t) = Eigen::Map<const Eigen::VectorXd>(dev.data(), flat).transpose();
    }

    // top principal direction via the trial-space Gram matrix
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(total, total);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(deviations);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const Eigen::VectorXd u = es.eigenvectors().col(total - 1);
    Eigen::VectorXd v = deviations.transpose() * u;
    const double vn = v.norm();
    if (vn > 0.0) {
        v /= vn;
        int imax = 0;
        double amax = 0.0;
        for (long i = 0; i < v.size(); ++i)
            if (std::abs(v[i]) > amax) {
                amax = std::abs(v[i]);
                imax = static_cast<int>(i);
            }
        if (v[imax] < 0.0) v = -v;
        const Eigen::VectorXd proj = deviations * v;
        for (int t = 0; t < total; ++t) out.rows[static_cast<std::size_t>(t)].pca_deviation = proj[t];
    }
    return out;
}

// Pairing of the extrinsic geodesic residual of a curve z against its
// deviation from a geodesic xstar:
//   Int < z~ - x*, P_{x*}( z~'' + |z~'|^2 z~ ) > dt
// with z~ the samplewise normalization of z.
inline double geodesic_residual_pairing(const PathSample& z, const PathSample& xstar,
                                        double quad_dt) {
    if (z.dim() != xstar.dim() || z.steps() != xstar.steps() ||
        std::abs(z.dt - xstar.dt) > 1e-12 * z.dt)
        throw GridMismatch("geodesic_residual_pairing: grids differ");
    const int cols = z.steps() + 1;
    Eigen::MatrixXd zt(z.dim(), cols);
    for (int i = 0; i < cols; ++i) {
        const double n = z.values.col(i).norm();
        if (n <= kNearZeroTol) throw NearZeroVector("curve sample collapsed to the origin");
        zt.col(i) = z.values.col(i) / n;
    }
    const Eigen::MatrixXd zd = fd_derivative(zt, z.dt);
    const Eigen::MatrixXd zdd = fd_second_derivative(zt, z.dt);
    Eigen::MatrixXd integrand(1, cols);
    for (int i = 0; i < cols; ++i) {
        const Eigen::VectorXd xs = xstar.values.col(i);
        const Eigen::VectorXd g = zdd.col(i) + zd.col(i).squaredNorm() * zt.col(i);
        integrand(0, i) = (zt.col(i) - xs).dot(project_tangent(xs, g));
    }
    const CubicSpline s(0.0, z.dt, integrand);
    return midpoint_quadrature_richardson([&](double t) { return s.value(t)[0]; }, 0.0,
                                          z.duration(), quad_dt);
}

// |X[mu](x) - (1/beta) P_x(grad Phi)|: zero up to rounding, by construction.
inline double gradient_flow_identity_error(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                           double beta) {
    const Eigen::VectorXd lhs = flow_field(x, mu, beta);
    const Eigen::VectorXd rhs = project_tangent(x, grad_potential(x, mu, beta)) / beta;
    return (lhs - rhs).norm();
}

} // namespace sphereflow
