#pragma once

// Action functionals along paths and trajectories, their midpoint
// discretization, and the quadrature error study.
//
// The continuous "truth" for every functional is composite-midpoint
// quadrature at resolution quad_dt combined with Richardson extrapolation;
// sampled paths are interpolated by natural cubic splines and differentiated
// by centered differences (second-order one-sided at the ends).

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "sphereflow/dynamics.hpp"
#include "sphereflow/errors.hpp"
#include "sphereflow/numerics.hpp"
#include "sphereflow/sphere.hpp"

namespace sphereflow {

// Uniformly sampled ambient path; values are not required to be unit.
struct PathSample {
    double dt = 0.0;
    Eigen::MatrixXd values; // d x (steps+1)

    PathSample() = default;
    PathSample(double step, Eigen::MatrixXd vals) : dt(step), values(std::move(vals)) {
        if (!(dt > 0.0)) throw InvalidArgument("path sample dt must be positive");
        if (values.cols() < 2) throw InvalidArgument("path sample needs at least two samples");
    }

    int steps() const { return static_cast<int>(values.cols()) - 1; }
    int dim() const { return static_cast<int>(values.rows()); }
    double duration() const { return dt * static_cast<double>(steps()); }
    double time(int i) const { return dt * static_cast<double>(i); }

    PathSample subsample(int stride) const {
        if (stride < 1 || steps() % stride != 0)
            throw GridMismatch("subsample stride must divide the step count");
        Eigen::MatrixXd v(values.rows(), steps() / stride + 1);
        for (int i = 0; i * stride <= steps(); ++i) v.col(i) = values.col(i * stride);
        return PathSample(dt * static_cast<double>(stride), v);
    }
};

inline PathSample sample_path(const std::function<Eigen::VectorXd(double)>& f, double T,
                              double dt) {
    const int n = detail::checked_step_count(T, dt);
    Eigen::VectorXd first = f(0.0);
    Eigen::MatrixXd vals(first.size(), n + 1);
    vals.col(0) = first;
    for (int i = 1; i <= n; ++i) vals.col(i) = f(dt * static_cast<double>(i));
    return PathSample(dt, vals);
}

inline PathSample token_path_sample(const Trajectory& traj, int token) {
    return PathSample(traj.dt(), traj.token_path(token));
}

// Random smooth sphere path with bounded derivatives: a dominant constant
// direction plus three decaying harmonics, normalized samplewise. The
// harmonic amplitudes sum below the dominant norm, so no sample is near zero.
inline PathSample random_smooth_path(int d, double T, double dt, Rng& rng) {
    if (d < 2) throw DimensionMismatch("random_smooth_path: d must be >= 2");
    const Eigen::VectorXd a0 = 2.0 * sample_uniform_sphere(d, rng).vec();
    std::vector<Eigen::VectorXd> s(3), c(3);
    for (int k = 0; k < 3; ++k) {
        const double amp = 0.5 / static_cast<double>(k + 1);
        s[static_cast<std::size_t>(k)] = amp * sample_uniform_sphere(d, rng).vec();
        c[static_cast<std::size_t>(k)] = amp * sample_uniform_sphere(d, rng).vec();
    }
    return sample_path(
        [&](double t) {
            Eigen::VectorXd v = a0;
            for (int k = 0; k < 3; ++k) {
                const double w = static_cast<double>(k + 1) * M_PI * t / T;
                v += std::sin(w) * s[static_cast<std::size_t>(k)] +
                     std::cos(w) * c[static_cast<std::size_t>(k)];
            }
            return Eigen::VectorXd(v / v.norm());
        },
        T, dt);
}

struct ActionBreakdown {
    Eigen::VectorXd per_token;
    double total = 0.0;
    double mean = 0.0;
};

inline ActionBreakdown make_breakdown(Eigen::VectorXd per_token) {
    ActionBreakdown b;
    b.per_token = std::move(per_token);
    b.total = b.per_token.sum();
    b.mean = b.total / static_cast<double>(b.per_token.size());
    return b;
}

// Phi(x) = log Z(x): the potential whose gradient is beta * m(x).
inline double potential(const Eigen::VectorXd& x, const TokenConfiguration& mu, double beta) {
    return log_partition_function(x, mu, beta);
}

inline Eigen::VectorXd grad_potential(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                      double beta) {
    return beta * mean_field(x, mu, beta);
}

namespace detail {

inline SoftmaxStats attention_stats_raw(const Eigen::VectorXd& x, const Eigen::MatrixXd& atoms,
                                        const Eigen::VectorXd& w, double beta) {
    return softmax_stats(beta * (atoms.transpose() * x), w);
}

inline Eigen::VectorXd mean_field_raw(const Eigen::VectorXd& x, const Eigen::MatrixXd& atoms,
                                      const Eigen::VectorXd& w, double beta) {
    return atoms * attention_stats_raw(x, atoms, w, beta).probs;
}

} // namespace detail

// Spline view of a trajectory: every token coordinate is interpolated on the
// snapshot grid. Interpolated atoms sit off the sphere by the interpolation
// error; downstream formulas are ambient so no renormalization is applied.
class RefInterpolant {
public:
    explicit RefInterpolant(const Trajectory& ref)
        : d_(ref.dim()), n_(ref.tokens()), weights_(ref.state(0).weights()) {
        const int cols = ref.steps() + 1;
        Eigen::MatrixXd stacked(d_ * n_, cols);
        for (int i = 0; i < cols; ++i) {
            const Eigen::MatrixXd& pts = ref.state(i).points();
            for (int j = 0; j < n_; ++j) stacked.block(j * d_, i, d_, 1) = pts.col(j);
        }
        spline_ = CubicSpline(0.0, ref.dt(), std::move(stacked));
    }

    int dim() const { return d_; }
    int tokens() const { return n_; }
    const Eigen::VectorXd& weights() const { return weights_; }

    Eigen::MatrixXd atoms(double t) const {
        const Eigen::VectorXd flat = spline_.value(t);
        Eigen::MatrixXd a(d_, n_);
        for (int j = 0; j < n_; ++j) a.col(j) = flat.segment(j * d_, d_);
        return a;
    }

    Eigen::VectorXd token(double t, int j) const {
        return spline_.value(t).segment(j * d_, d_);
    }

    // beta * P_x(grad Phi / beta) = P_x(beta m): the projected potential
    // gradient along the reference token.
    Eigen::VectorXd projected_grad(double t, int token, double beta) const {
        const Eigen::MatrixXd a = atoms(t);
        const Eigen::VectorXd x = a.col(token);
        const Eigen::VectorXd m = detail::mean_field_raw(x, a, weights_, beta);
        return beta * project_tangent(x, m);
    }

private:
    int d_ = 0;
    int n_ = 0;
    Eigen::VectorXd weights_;
    CubicSpline spline_;
};

namespace detail {

inline void check_same_span(double a, double b, const char* what) {
    if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(a)))
        throw GridMismatch(std::string(what) + ": time spans differ");
}

inline CubicSpline path_spline(const PathSample& h) {
    return CubicSpline(0.0, h.dt, h.values);
}

inline CubicSpline path_derivative_spline(const PathSample& h) {
    return CubicSpline(0.0, h.dt, fd_derivative(h.values, h.dt));
}

} // namespace detail

// Evaluates the per-token action
//   A[h] = Int ( |h'|^2/2 - <h', P_x(grad Phi(x))> + |h(0)-x(0)|^2 / 2T ) dt
// against a fixed reference trajectory. The reference-only quantities are
// cached at the quadrature nodes so many candidate paths can be scored.
class TransformerActionEvaluator {
public:
    TransformerActionEvaluator(const Trajectory& ref, int token, double beta, double quad_dt)
        : beta_(beta), token_(token), T_(ref.duration()), x0_(ref.state(0).point(token)) {
        if (token < 0 || token >= ref.tokens()) throw InvalidArgument("token index out of range");
        if (!(quad_dt > 0.0) || quad_dt > ref.dt() + 1e-15)
            throw InvalidArgument("quad_dt must be positive and at most the grid spacing");
        const RefInterpolant interp(ref);
        build_nodes(interp, quad_dt, full_);
        build_nodes(interp, 0.5 * quad_dt, half_);
    }

    double action(const PathSample& h) const {
        detail::check_same_span(h.duration(), T_, "transformer_action");
        if (h.dim() != static_cast<int>(x0_.size()))
            throw DimensionMismatch("path dimension differs from reference");
        const CubicSpline hd = detail::path_derivative_spline(h);
        const double boundary = 0.5 * (h.values.col(0) - x0_).squaredNorm();
        const double full = integrate_nodes(full_, hd);
        const double half = integrate_nodes(half_, hd);
        return (4.0 * half - full) / 3.0 + boundary;
    }

private:
    struct NodeSet {
        double step = 0.0;
        std::vector<double> t;
        Eigen::MatrixXd p; // projected potential gradient at each node
    };

    void build_nodes(const RefInterpolant& interp, double q, NodeSet& set) {
        const int n = std::max(1, static_cast<int>(std::ceil(T_ / q - 1e-12)));
        set.step = T_ / static_cast<double>(n);
        set.t.resize(static_cast<std::size_t>(n));
        set.p.resize(x0_.size(), n);
        for (int j = 0; j < n; ++j) {
            const double t = (static_cast<double>(j) + 0.5) * set.step;
            set.t[static_cast<std::size_t>(j)] = t;
            set.p.col(j) = interp.projected_grad(t, token_, beta_);
        }
    }

    double integrate_nodes(const NodeSet& set, const CubicSpline& hd) const {
        double sum = 0.0;
        for (std::size_t j = 0; j < set.t.size(); ++j) {
            const Eigen::VectorXd v = hd.value(set.t[j]);
            sum += 0.5 * v.squaredNorm() - v.dot(set.p.col(static_cast<int>(j)));
        }
        return sum * set.step;
    }

    double beta_;
    int token_;
    double T_;
    Eigen::VectorXd x0_;
    NodeSet full_, half_;
};

inline double transformer_action(const PathSample& h, const Trajectory& ref, int token,
                                 double beta, double quad_dt) {
    return TransformerActionEvaluator(ref, token, beta, quad_dt).action(h);
}

// Midpoint-rule discretization of the same functional on the grid of h. The
// midpoint states come from ref_half, an integration of the reference at half
// the step of h (odd snapshots are the interval midpoints); chord averaging is
// never used because averaged midpoints leave the sphere at O(dt^2).
inline double discrete_action(const PathSample& h, const Trajectory& ref_half, int token,
                              double beta) {
    if (token < 0 || token >= ref_half.tokens()) throw InvalidArgument("token index out of range");
    if (h.dim() != ref_half.dim()) throw DimensionMismatch("path dimension differs from reference");
    const int n = h.steps();
    if (ref_half.steps() != 2 * n)
        throw GridMismatch("discrete_action: ref_half must have exactly twice the steps of h");
    if (std::abs(ref_half.dt() - 0.5 * h.dt) > 1e-12 * h.dt)
        throw GridMismatch("discrete_action: ref_half step must be half the path step");
    const double dt = h.dt;
    const Eigen::VectorXd x0 = ref_half.state(0).point(token);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd v = (h.values.col(i + 1) - h.values.col(i)) / dt;
        const TokenConfiguration& mid = ref_half.state(2 * i + 1);
        const Eigen::VectorXd x = mid.point(token);
        const Eigen::VectorXd p = beta * project_tangent(x, mean_field(x, mid, beta));
        sum += 0.5 * v.squaredNorm() - v.dot(p);
    }
    return sum * dt + 0.5 * (h.values.col(0) - x0).squaredNorm();
}

// Int ( |x'|^2 + Phi(x) ) dt per token.
inline ActionBreakdown kinetic_potential_action(const Trajectory& traj, double beta,
                                                double quad_dt) {
    if (!(quad_dt > 0.0) || quad_dt > traj.dt() + 1e-15)
        throw InvalidArgument("quad_dt must be positive and at most the grid spacing");
    const RefInterpolant interp(traj);
    const double T = traj.duration();
    Eigen::VectorXd per(traj.tokens());
    for (int j = 0; j < traj.tokens(); ++j) {
        const PathSample path = token_path_sample(traj, j);
        const CubicSpline hd = detail::path_derivative_spline(path);
        const auto f = [&](double t) {
            const Eigen::MatrixXd a = interp.atoms(t);
            const Eigen::VectorXd x = a.col(j);
            const auto st = detail::attention_stats_raw(x, a, interp.weights(), beta);
            return hd.value(t).squaredNorm() + st.log_z;
        };
        per[j] = midpoint_quadrature_richardson(f, 0.0, T, quad_dt);
    }
    return make_breakdown(std::move(per));
}

// Int |x'|^2 dt per token.
inline ActionBreakdown geodesic_action(const Trajectory& traj, double quad_dt) {
    if (!(quad_dt > 0.0) || quad_dt > traj.dt() + 1e-15)
        throw InvalidArgument("quad_dt must be positive and at most the grid spacing");
    const double T = traj.duration();
    Eigen::VectorXd per(traj.tokens());
    for (int j = 0; j < traj.tokens(); ++j) {
        const CubicSpline hd = detail::path_derivative_spline(token_path_sample(traj, j));
        per[j] = midpoint_quadrature_richardson(
            [&](double t) { return hd.value(t).squaredNorm(); }, 0.0, T, quad_dt);
    }
    return make_breakdown(std::move(per));
}

// Token selection loss against a target trajectory:
//   Int |x' - P_{x*}(grad Phi(x*))|^2 dt + |x(0) - x*(0)|^2 / 2
// With a map F the integrand compares F-transported velocities,
//   | J_F(x)^T P_x(grad Phi(x)) - d/dt F(x*) |^2,
// where J_F is estimated by central differences.
inline double token_selection_action(
    const Trajectory& x, int x_token, const Trajectory& target, int target_token, double beta,
    double quad_dt, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F = nullptr) {
    detail::check_same_span(x.duration(), target.duration(), "token_selection_action");
    if (!(quad_dt > 0.0) || quad_dt > std::min(x.dt(), target.dt()) + 1e-15)
        throw InvalidArgument("quad_dt must be positive and at most the grid spacing");
    const double T = x.duration();
    const RefInterpolant xi(x);
    const RefInterpolant ti(target);
    const PathSample xp = token_path_sample(x, x_token);
    const CubicSpline xd = detail::path_derivative_spline(xp);
    double integral = 0.0;
    if (!F) {
        const auto f = [&](double t) {
            const Eigen::VectorXd p_star = ti.projected_grad(t, target_token, beta);
            return (xd.value(t) - p_star).squaredNorm();
        };
        integral = midpoint_quadrature_richardson(f, 0.0, T, quad_dt);
    } else {
        // d/dt F(x*) from centered differences of F along the target samples
        const PathSample tp = token_path_sample(target, target_token);
        Eigen::MatrixXd fvals(F(tp.values.col(0)).size(), tp.steps() + 1);
        for (int i = 0; i <= tp.steps(); ++i) fvals.col(i) = F(tp.values.col(i));
        const CubicSpline fdot(0.0, tp.dt, fd_derivative(fvals, tp.dt));
        const int d = x.dim();
        const double eps = 1e-6;
        const auto f = [&](double t) {
            const Eigen::VectorXd xt = xi.token(t, x_token);
            const Eigen::VectorXd p = xi.projected_grad(t, x_token, beta);
            Eigen::VectorXd jtp(d);
            for (int c = 0; c < d; ++c) {
                Eigen::VectorXd ep = xt, em = xt;
                ep[c] += eps;
                em[c] -= eps;
                // row c of J^T p equals <dF/dx_c, p>
                jtp[c] = (F(ep) - F(em)).dot(p) / (2.0 * eps);
            }
            return (jtp - fdot.value(t)).squaredNorm();
        };
        integral = midpoint_quadrature_richardson(f, 0.0, T, quad_dt);
    }
    const Eigen::VectorXd dx0 = x.state(0).point(x_token) - target.state(0).point(target_token);
    return integral + 0.5 * dx0.squaredNorm();
}

// Convenience overload: the target trajectory is generated by integrating
// target_start as its own single-token ensemble on the grid of x.
inline double token_selection_action(
    const Trajectory& x, int x_token, const UnitVector& target_start, double beta, double quad_dt,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& F = nullptr) {
    const TokenConfiguration single(target_start.vec());
    const Trajectory target =
        integrate(single, AttentionParams(beta), x.duration(), x.dt(), x.scheme());
    return token_selection_action(x, x_token, target, 0, beta, quad_dt, F);
}

struct QuadratureStudyRow {
    double dt = 0.0;
    double abs_error = 0.0;
};

struct QuadratureStudyResult {
    std::vector<QuadratureStudyRow> rows;
    double slope = 0.0;     // log-log fit of abs_error against dt
    double r_squared = 0.0;
    bool degenerate = false; // all errors at rounding level, slope meaningless
    double truth = 0.0;
};

// Error of the midpoint-discretized action against the quadrature truth over
// a ladder of step sizes. h must be sampled finely enough that every dt grid
// is a subsample of it; the truth uses quad_dt = dt_min/100. Each level's
// midpoint states come from re-integrating the reference initial condition at
// half that level's step.
inline QuadratureStudyResult quadrature_error_study(const PathSample& h, const Trajectory& ref,
                                                    int token, double beta,
                                                    const std::vector<double>& dt_list) {
    if (dt_list.empty()) throw InvalidArgument("dt_list must not be empty");
    detail::check_same_span(h.duration(), ref.duration(), "quadrature_error_study");
    const double T = ref.duration();
    double dt_min = dt_list.front();
    for (double dt : dt_list) dt_min = std::min(dt_min, dt);
    const double quad_dt = dt_min / 100.0;

    QuadratureStudyResult out;
    out.truth = transformer_action(h, ref, token, beta, std::min(quad_dt, ref.dt()));

    const AttentionParams params(beta);
    for (double dt : dt_list) {
        const double ratio = dt / h.dt;
        const double rounded = std::round(ratio);
        if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9)
            throw GridMismatch("dt level is not a multiple of the path sample step");
        const PathSample h_sub = h.subsample(static_cast<int>(rounded));
        const Trajectory ref_half =
            integrate(ref.state(0), params, T, 0.5 * dt, ref.scheme());
        const double approx = discrete_action(h_sub, ref_half, token, beta);
        out.rows.push_back({dt, std::abs(out.truth - approx)});
    }

    bool all_tiny = true;
    for (const auto& r : out.rows) all_tiny = all_tiny && r.abs_error <= 1e-12;
    out.degenerate = all_tiny;
    if (!out.degenerate && out.rows.size() >= 2) {
        std::vector<double> lx, ly;
        for (const auto& r : out.rows) {
            lx.push_back(std::log10(r.dt));
            ly.push_back(std::log10(std::max(r.abs_error, 1e-300)));
        }
        const LineFit fit = least_squares_line(lx, ly);
        out.slope = fit.slope;
        out.r_squared = fit.r_squared;
    } else {
        out.slope = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

} // namespace sphereflow
