#pragma once

// Extrinsic geometry of the unit sphere S^{d-1} embedded in R^d. Points and
// tangent vectors are plain Eigen vectors; the wrapper types only enforce the
// construction invariants (unit norm, tangency).

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "sphereflow/errors.hpp"
#include "sphereflow/numerics.hpp"
#include "sphereflow/rng.hpp"

namespace sphereflow {

inline constexpr double kUnitNormTol = 1e-9;
inline constexpr double kTangencyTol = 1e-9;
inline constexpr double kNearZeroTol = 1e-12;

class UnitVector {
public:
    explicit UnitVector(Eigen::VectorXd v) : v_(std::move(v)) {
        if (v_.size() < 2) throw DimensionMismatch("unit vector needs dimension >= 2");
        const double n = v_.norm();
        if (std::abs(n - 1.0) > kUnitNormTol)
            throw InvalidArgument("unit vector norm off by " + std::to_string(n - 1.0));
    }

    const Eigen::VectorXd& vec() const { return v_; }
    int dim() const { return static_cast<int>(v_.size()); }
    double operator[](int i) const { return v_[i]; }

private:
    Eigen::VectorXd v_;
};

// Tangent projection P_p(y) = y - <y,p>p. p is typically unit but the formula
// is applied verbatim to whatever is passed (integrator stages sit slightly
// off the sphere on purpose).
inline Eigen::VectorXd project_tangent(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
    if (p.size() != y.size()) throw DimensionMismatch("project_tangent: p and y sizes differ");
    return y - y.dot(p) * p;
}

inline Eigen::VectorXd project_tangent(const UnitVector& p, const Eigen::VectorXd& y) {
    return project_tangent(p.vec(), y);
}

class TangentVector {
public:
    TangentVector(UnitVector base, Eigen::VectorXd vec)
        : base_(std::move(base)), v_(std::move(vec)) {
        if (v_.size() != base_.vec().size())
            throw DimensionMismatch("tangent vector dimension differs from base point");
        if (std::abs(v_.dot(base_.vec())) > kTangencyTol * std::max(1.0, v_.norm()))
            throw InvalidArgument("tangent vector is not orthogonal to its base point");
    }

    const UnitVector& base() const { return base_; }
    const Eigen::VectorXd& vec() const { return v_; }
    double norm() const { return v_.norm(); }

private:
    UnitVector base_;
    Eigen::VectorXd v_;
};

inline UnitVector normalize(const Eigen::VectorXd& v) {
    const double n = v.norm();
    if (n <= kNearZeroTol) throw NearZeroVector("cannot normalize a vector of norm <= 1e-12");
    return UnitVector(v / n);
}

// exp_p(h) = cos(|h|) p + sin(|h|) h/|h|, with the series branch below 1e-8
// where h/|h| is ill-conditioned.
inline UnitVector exp_map(const TangentVector& h) {
    const Eigen::VectorXd& p = h.base().vec();
    const double th = h.norm();
    Eigen::VectorXd r;
    if (th < 1e-8) {
        // cos th ~ 1 - th^2/2, sin th / th ~ 1 - th^2/6
        r = (1.0 - 0.5 * th * th) * p + (1.0 - th * th / 6.0) * h.vec();
    } else {
        r = std::cos(th) * p + (std::sin(th) / th) * h.vec();
    }
    return normalize(r);
}

// 2 atan2(|p-q|, |p+q|): full relative accuracy at both ends of [0, pi]
inline double geodesic_distance(const UnitVector& p, const UnitVector& q) {
    if (p.dim() != q.dim()) throw DimensionMismatch("geodesic_distance: dimensions differ");
    return 2.0 * std::atan2((p.vec() - q.vec()).norm(), (p.vec() + q.vec()).norm());
}

// Unchecked variant for columns already validated by their container.
inline double geodesic_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw DimensionMismatch("geodesic_distance: dimensions differ");
    return 2.0 * std::atan2((p - q).norm(), (p + q).norm());
}

inline TangentVector log_map(const UnitVector& p, const UnitVector& q) {
    const double th = geodesic_distance(p, q);
    if (th > M_PI - 1e-6)
        throw AntipodalPoints("log_map undefined within 1e-6 of the antipode");
    Eigen::VectorXd v = project_tangent(p, q.vec());
    const double vn = v.norm();
    if (vn <= kNearZeroTol) return TangentVector(p, Eigen::VectorXd::Zero(p.dim()));
    // |v| = sin(th), so th * v/|v| has length th
    return TangentVector(p, (th / vn) * v);
}

// Surface area of the m-sphere S^m (m >= 0), via log-gamma for stability.
inline double unit_sphere_area(int m) {
    if (m < 0) throw InvalidArgument("unit_sphere_area: m must be >= 0");
    const double a = 0.5 * static_cast<double>(m + 1);
    return std::exp(std::log(2.0) + a * std::log(M_PI) - std::lgamma(a));
}

// Area of the geodesic ball of radius r on S^{d-1}:
//   |S^{d-2}| * Integral_0^r sin^{d-2}(s) ds
inline double geodesic_ball_area(int d, double r) {
    if (d < 2) throw DimensionMismatch("geodesic_ball_area: d must be >= 2");
    if (r < 0.0 || r > M_PI) throw InvalidArgument("geodesic_ball_area: r must lie in [0, pi]");
    if (r == 0.0) return 0.0;
    const double shell = unit_sphere_area(d - 2);
    const int k = d - 2;
    const double integral = adaptive_simpson(
        [k](double s) { return k == 0 ? 1.0 : std::pow(std::sin(s), k); }, 0.0, r, 1e-13);
    return shell * integral;
}

inline UnitVector sample_uniform_sphere(int d, Rng& rng) {
    if (d < 2) throw DimensionMismatch("sample_uniform_sphere: d must be >= 2");
    for (;;) {
        Eigen::VectorXd g = rng.gaussian_vector(d);
        if (g.norm() > kNearZeroTol) return normalize(g);
    }
}

// Uniform direction in the tangent space at p (uniform on the d-2 sphere of
// T_p), by projecting an ambient gaussian.
inline TangentVector sample_tangent_direction(const UnitVector& p, Rng& rng) {
    for (;;) {
        Eigen::VectorXd g = project_tangent(p, rng.gaussian_vector(p.dim()));
        const double n = g.norm();
        if (n > kNearZeroTol) return TangentVector(p, g / n);
    }
}

// Uniform sample in the geodesic ball B(p, r): uniform tangent direction plus
// a radius drawn from density proportional to sin^{d-2}(s) on [0, r], by
// bisecting the radial CDF to 1e-12.
inline UnitVector sample_geodesic_ball(const UnitVector& p, double r, Rng& rng) {
    if (r <= 0.0 || r > M_PI) throw InvalidArgument("sample_geodesic_ball: r must lie in (0, pi]");
    const int k = p.dim() - 2;
    const auto density = [k](double s) { return k == 0 ? 1.0 : std::pow(std::sin(s), k); };
    const double total = adaptive_simpson(density, 0.0, r, 1e-14);
    const double u = rng.uniform();
    const TangentVector dir = sample_tangent_direction(p, rng);
    const double s = bisect_increasing(
        [&](double x) { return adaptive_simpson(density, 0.0, x, 1e-14); }, 0.0, r, u * total,
        1e-12);
    return exp_map(TangentVector(p, s * dir.vec()));
}

// Orthonormal basis of T_p as the columns of a d x (d-1) matrix.
inline Eigen::MatrixXd tangent_basis(const UnitVector& p) {
    const int d = p.dim();
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, d);
    // Householder completion of p to an orthonormal frame; drop the first column.
    Eigen::VectorXd w = p.vec();
    w[0] += (w[0] >= 0.0 ? 1.0 : -1.0);
    const double wn2 = w.squaredNorm();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d) - (2.0 / wn2) * (w * w.transpose());
    // column 0 of h is +-p; the rest span the tangent space
    Eigen::MatrixXd basis = h.rightCols(d - 1);
    return basis;
}

} // namespace sphereflow
