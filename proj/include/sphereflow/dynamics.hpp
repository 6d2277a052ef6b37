#pragma once

// The token flow map: n tokens on S^{d-1} advected by the attention vector
// field of their own empirical measure,
//   dx/dt = P_x( (1/Z) sum_j w_j exp(beta <x, y_j>) y_j ).

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sphereflow/errors.hpp"
#include "sphereflow/sphere.hpp"

namespace sphereflow {

struct AttentionParams {
    double beta = 1.0;
    // optional time-constant attention matrices; empty means plain attention
    Eigen::MatrixXd Q, K, V;

    explicit AttentionParams(double b) : beta(b) {
        if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
    }
    AttentionParams(double b, Eigen::MatrixXd q, Eigen::MatrixXd k, Eigen::MatrixXd v)
        : beta(b), Q(std::move(q)), K(std::move(k)), V(std::move(v)) {
        if (!(beta > 0.0)) throw InvalidArgument("beta must be positive");
    }

    bool has_qkv() const { return Q.size() > 0 || K.size() > 0 || V.size() > 0; }
};

// Weighted token ensemble; columns of points() are unit vectors.
class TokenConfiguration {
public:
    TokenConfiguration(Eigen::MatrixXd points, Eigen::VectorXd weights)
        : p_(std::move(points)), w_(std::move(weights)) {
        validate();
    }

    explicit TokenConfiguration(Eigen::MatrixXd points) : p_(std::move(points)) {
        const int n = static_cast<int>(p_.cols());
        if (n == 0) throw InvalidArgument("token configuration needs at least one token");
        w_ = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
        validate();
    }

    const Eigen::MatrixXd& points() const { return p_; }
    const Eigen::VectorXd& weights() const { return w_; }
    int dim() const { return static_cast<int>(p_.rows()); }
    int size() const { return static_cast<int>(p_.cols()); }
    Eigen::VectorXd point(int j) const { return p_.col(j); }

private:
    void validate() const {
        if (p_.rows() < 2) throw DimensionMismatch("token dimension must be >= 2");
        if (p_.cols() == 0) throw InvalidArgument("token configuration needs at least one token");
        if (w_.size() != p_.cols())
            throw DimensionMismatch("weight count differs from token count");
        for (int j = 0; j < p_.cols(); ++j) {
            if (std::abs(p_.col(j).norm() - 1.0) > kUnitNormTol)
                throw InvalidArgument("token " + std::to_string(j) + " is not unit length");
            if (!(w_[j] > 0.0)) throw InvalidArgument("token weights must be positive");
        }
        if (std::abs(w_.sum() - 1.0) > 1e-12)
            throw InvalidArgument("token weights must sum to 1 within 1e-12");
    }

    Eigen::MatrixXd p_;
    Eigen::VectorXd w_;
};

namespace detail {

// Stabilized softmax statistics of a_j = beta <x, y_j> (or the QKV scores):
// log Z and the normalized attention weights.
struct SoftmaxStats {
    double log_z = 0.0;
    Eigen::VectorXd probs;
};

inline SoftmaxStats softmax_stats(const Eigen::VectorXd& scores, const Eigen::VectorXd& w) {
    const double amax = scores.maxCoeff();
    Eigen::VectorXd e = ((scores.array() - amax).exp() * w.array()).matrix();
    const double s = e.sum();
    SoftmaxStats st;
    st.log_z = amax + std::log(s);
    st.probs = e / s;
    return st;
}

inline SoftmaxStats attention_stats(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                    double beta) {
    if (x.size() != mu.dim()) throw DimensionMismatch("probe dimension differs from tokens");
    return softmax_stats(beta * (mu.points().transpose() * x), mu.weights());
}

} // namespace detail

// Z(x) = sum_j w_j exp(beta <x, y_j>); always >= exp(-beta) on the sphere.
inline double partition_function(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                 double beta) {
    return std::exp(detail::attention_stats(x, mu, beta).log_z);
}

inline double log_partition_function(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                     double beta) {
    return detail::attention_stats(x, mu, beta).log_z;
}

// m(x) = (1/Z) sum_j w_j exp(beta <x, y_j>) y_j; |m| <= 1.
inline Eigen::VectorXd mean_field(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                  double beta) {
    return mu.points() * detail::attention_stats(x, mu, beta).probs;
}

// Theta(x) = (1/Z) sum_j w_j exp(beta <x, y_j>) y_j y_j^T. Attention-weighted
// second moment: symmetric PSD with unit trace.
inline Eigen::MatrixXd second_moment(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                     double beta) {
    const auto st = detail::attention_stats(x, mu, beta);
    return mu.points() * st.probs.asDiagonal() * mu.points().transpose();
}

// X[mu](x) = P_x(m(x)): the flow map's right-hand side.
inline Eigen::VectorXd flow_field(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                  double beta) {
    return project_tangent(x, mean_field(x, mu, beta));
}

// QKV variant: scores beta <Qx, K y_j>, values V y_j, then the same projection.
inline Eigen::VectorXd flow_field_qkv(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                      const AttentionParams& params) {
    const int d = mu.dim();
    if (x.size() != d) throw DimensionMismatch("probe dimension differs from tokens");
    const Eigen::MatrixXd& q = params.Q;
    const Eigen::MatrixXd& k = params.K;
    const Eigen::MatrixXd& v = params.V;
    if (q.rows() != d || q.cols() != d || k.rows() != d || k.cols() != d || v.rows() != d ||
        v.cols() != d)
        throw DimensionMismatch("Q, K, V must all be d x d");
    const Eigen::VectorXd scores = params.beta * (mu.points().transpose() * (k.transpose() * (q * x)));
    const auto st = detail::softmax_stats(scores, mu.weights());
    return project_tangent(x, v * (mu.points() * st.probs));
}

inline Eigen::VectorXd field_for(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                 const AttentionParams& params) {
    return params.has_qkv() ? flow_field_qkv(x, mu, params) : flow_field(x, mu, params.beta);
}

// Directional derivative of the mean field: Gamma(x)[h] = beta (Theta - m m^T) h.
inline Eigen::VectorXd gamma_linearization(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                           double beta, const Eigen::VectorXd& h) {
    if (h.size() != mu.dim()) throw DimensionMismatch("direction dimension differs from tokens");
    const auto st = detail::attention_stats(x, mu, beta);
    const Eigen::VectorXd m = mu.points() * st.probs;
    const Eigen::VectorXd th = mu.points() * (st.probs.asDiagonal() * (mu.points().transpose() * h));
    return beta * (th - m * (m.dot(h)));
}

// Psi(x) = -beta (Theta - m m^T) + m x^T + <m, x> I.
inline Eigen::MatrixXd psi_matrix(const Eigen::VectorXd& x, const TokenConfiguration& mu,
                                  double beta) {
    const int d = mu.dim();
    if (x.size() != d) throw DimensionMismatch("probe dimension differs from tokens");
    const auto st = detail::attention_stats(x, mu, beta);
    const Eigen::VectorXd m = mu.points() * st.probs;
    const Eigen::MatrixXd theta = mu.points() * st.probs.asDiagonal() * mu.points().transpose();
    return -beta * (theta - m * m.transpose()) + m * x.transpose() +
           m.dot(x) * Eigen::MatrixXd::Identity(d, d);
}

enum class Scheme { Euler, Midpoint };

inline const char* scheme_name(Scheme s) { return s == Scheme::Euler ? "euler" : "midpoint"; }

// Snapshots of the coupled system on a uniform grid t_i = i dt, t_0 = 0.
class Trajectory {
public:
    Trajectory(std::vector<TokenConfiguration> states, double dt, Scheme scheme)
        : states_(std::move(states)), dt_(dt), scheme_(scheme) {
        if (states_.size() < 2) throw InvalidArgument("trajectory needs at least two snapshots");
        if (!(dt_ > 0.0)) throw InvalidArgument("trajectory dt must be positive");
        const int d = states_.front().dim();
        const int n = states_.front().size();
        for (const auto& s : states_)
            if (s.dim() != d || s.size() != n)
                throw DimensionMismatch("trajectory snapshots have inconsistent shapes");
    }

    int steps() const { return static_cast<int>(states_.size()) - 1; }
    int dim() const { return states_.front().dim(); }
    int tokens() const { return states_.front().size(); }
    double dt() const { return dt_; }
    double duration() const { return dt_ * static_cast<double>(steps()); }
    Scheme scheme() const { return scheme_; }
    double time(int i) const { return dt_ * static_cast<double>(i); }
    const TokenConfiguration& state(int i) const { return states_[static_cast<std::size_t>(i)]; }
    const std::vector<TokenConfiguration>& states() const { return states_; }

    // d x (steps+1) matrix of one token's samples
    Eigen::MatrixXd token_path(int token) const {
        Eigen::MatrixXd path(dim(), steps() + 1);
        for (int i = 0; i <= steps(); ++i) path.col(i) = states_[static_cast<std::size_t>(i)].point(token);
        return path;
    }

private:
    std::vector<TokenConfiguration> states_;
    double dt_;
    Scheme scheme_;
};

namespace detail {

inline int checked_step_count(double T, double dt) {
    if (!(T > 0.0) || !(dt > 0.0)) throw InvalidArgument("T and dt must be positive");
    const double ratio = T / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9)
        throw StepCountMismatch("T/dt = " + std::to_string(ratio) + " is not an integer");
    return static_cast<int>(rounded);
}

inline Eigen::MatrixXd normalized_columns(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (int j = 0; j < m.cols(); ++j) {
        const double n = m.col(j).norm();
        if (n <= kNearZeroTol) throw NearZeroVector("token collapsed to the origin during a step");
        out.col(j) = m.col(j) / n;
    }
    return out;
}

inline Eigen::MatrixXd ensemble_field(const Eigen::MatrixXd& pts, const TokenConfiguration& mu,
                                      const AttentionParams& params) {
    Eigen::MatrixXd f(pts.rows(), pts.cols());
    for (int j = 0; j < pts.cols(); ++j) f.col(j) = field_for(pts.col(j), mu, params);
    return f;
}

} // namespace detail

// Advance the coupled system to time T. Euler or classical two-stage
// Runge-Kutta (midpoint); token norms are restored after each full step, the
// half step stage is left unnormalized.
inline Trajectory integrate(const TokenConfiguration& start, const AttentionParams& params,
                            double T, double dt, Scheme scheme) {
    const int steps = detail::checked_step_count(T, dt);
    std::vector<TokenConfiguration> states;
    states.reserve(static_cast<std::size_t>(steps) + 1);
    states.push_back(start);
    Eigen::MatrixXd pts = start.points();
    const Eigen::VectorXd w = start.weights();
    for (int i = 0; i < steps; ++i) {
        const TokenConfiguration cur(pts, w);
        if (scheme == Scheme::Euler) {
            const Eigen::MatrixXd k1 = detail::ensemble_field(pts, cur, params);
            pts = detail::normalized_columns(pts + dt * k1);
        } else {
            const Eigen::MatrixXd k1 = detail::ensemble_field(pts, cur, params);
            const Eigen::MatrixXd half = pts + (0.5 * dt) * k1;
            // the half-step ensemble is used as the measure for the second stage
            Eigen::MatrixXd k2(pts.rows(), pts.cols());
            {
                const Eigen::MatrixXd half_unit = detail::normalized_columns(half);
                const TokenConfiguration half_mu(half_unit, w);
                for (int j = 0; j < pts.cols(); ++j)
                    k2.col(j) = field_for(half.col(j), half_mu, params);
            }
            pts = detail::normalized_columns(pts + dt * k2);
        }
        states.emplace_back(pts, w);
    }
    return Trajectory(std::move(states), dt, scheme);
}

// Time-1 pushforward of a single probe point through the ensemble flow. The
// ensemble co-evolves by default; frozen = true keeps the measure at mu0. A
// probe that starts on an ensemble token reproduces that token's trajectory
// bit for bit (same arithmetic, same order).
inline UnitVector pushforward_point(const UnitVector& x0, const TokenConfiguration& mu0,
                                    const AttentionParams& params, double dt,
                                    bool frozen = false, double T = 1.0,
                                    Scheme scheme = Scheme::Midpoint) {
    const int steps = detail::checked_step_count(T, dt);
    Eigen::MatrixXd pts = mu0.points();
    const Eigen::VectorXd w = mu0.weights();
    Eigen::VectorXd probe = x0.vec();
    const auto renorm = [](Eigen::VectorXd& v) {
        const double n = v.norm();
        if (n <= kNearZeroTol) throw NearZeroVector("probe collapsed to the origin during a step");
        v /= n;
    };
    for (int i = 0; i < steps; ++i) {
        const TokenConfiguration cur(pts, w);
        const TokenConfiguration& probe_mu = frozen ? mu0 : cur;
        if (scheme == Scheme::Euler) {
            const Eigen::VectorXd g1 = field_for(probe, probe_mu, params);
            if (!frozen) {
                const Eigen::MatrixXd k1 = detail::ensemble_field(pts, cur, params);
                pts = detail::normalized_columns(pts + dt * k1);
            }
            probe = probe + dt * g1;
            renorm(probe);
        } else {
            const Eigen::VectorXd g1 = field_for(probe, probe_mu, params);
            const Eigen::VectorXd probe_half = probe + (0.5 * dt) * g1;
            if (frozen) {
                const Eigen::VectorXd g2 = field_for(probe_half, mu0, params);
                probe = probe + dt * g2;
            } else {
                const Eigen::MatrixXd k1 = detail::ensemble_field(pts, cur, params);
                const Eigen::MatrixXd half = pts + (0.5 * dt) * k1;
                const Eigen::MatrixXd half_unit = detail::normalized_columns(half);
                const TokenConfiguration half_mu(half_unit, w);
                const Eigen::VectorXd g2 = field_for(probe_half, half_mu, params);
                Eigen::MatrixXd k2(pts.rows(), pts.cols());
                for (int j = 0; j < pts.cols(); ++j)
                    k2.col(j) = field_for(half.col(j), half_mu, params);
                pts = detail::normalized_columns(pts + dt * k2);
                probe = probe + dt * g2;
            }
            renorm(probe);
        }
    }
    return UnitVector(probe);
}

inline TokenConfiguration random_configuration(int d, int n, Rng& rng) {
    if (n < 1) throw InvalidArgument("token configuration needs at least one token");
    Eigen::MatrixXd pts(d, n);
    for (int j = 0; j < n; ++j) pts.col(j) = sample_uniform_sphere(d, rng).vec();
    return TokenConfiguration(std::move(pts));
}

} // namespace sphereflow
