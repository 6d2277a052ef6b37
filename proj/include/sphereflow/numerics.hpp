#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "sphereflow/errors.hpp"

namespace sphereflow {

// ---------------------------------------------------------------------------
// Natural cubic spline on a uniform grid, one factorization shared by all
// rows of a (rows x n) value matrix. Evaluation clamps t to the grid span.
// ---------------------------------------------------------------------------
class CubicSpline {
public:
    CubicSpline() = default;

    // values: rows x n, column j holds the sample at t0 + j*h
    CubicSpline(double t0, double h, Eigen::MatrixXd values)
        : t0_(t0), h_(h), y_(std::move(values)) {
        const int n = static_cast<int>(y_.cols());
        if (n < 2) throw InvalidArgument("spline needs at least two samples");
        if (h_ <= 0.0) throw InvalidArgument("spline step must be positive");
        m_ = Eigen::MatrixXd::Zero(y_.rows(), n);
        if (n == 2) return;
        // tridiagonal (1,4,1) system for interior second derivatives, natural ends
        const int k = n - 2;
        Eigen::VectorXd diag(k);
        Eigen::MatrixXd rhs(y_.rows(), k);
        for (int i = 0; i < k; ++i)
            rhs.col(i) = 6.0 / (h_ * h_) * (y_.col(i) - 2.0 * y_.col(i + 1) + y_.col(i + 2));
        diag[0] = 4.0;
        for (int i = 1; i < k; ++i) {
            const double w = 1.0 / diag[i - 1];
            diag[i] = 4.0 - w;
            rhs.col(i) -= w * rhs.col(i - 1);
        }
        m_.col(k) = rhs.col(k - 1) / diag[k - 1];
        for (int i = k - 2; i >= 0; --i)
            m_.col(i + 1) = (rhs.col(i) - m_.col(i + 2)) / diag[i];
    }

    int rows() const { return static_cast<int>(y_.rows()); }
    double t_begin() const { return t0_; }
    double t_end() const { return t0_ + h_ * static_cast<double>(y_.cols() - 1); }

    Eigen::VectorXd value(double t) const {
        int i;
        double s;
        locate(t, i, s);
        const double a = 1.0 - s;
        return a * y_.col(i) + s * y_.col(i + 1) +
               (h_ * h_ / 6.0) * ((a * a * a - a) * m_.col(i) + (s * s * s - s) * m_.col(i + 1));
    }

    Eigen::VectorXd derivative(double t) const {
        int i;
        double s;
        locate(t, i, s);
        const double a = 1.0 - s;
        return (y_.col(i + 1) - y_.col(i)) / h_ +
               (h_ / 6.0) * ((1.0 - 3.0 * a * a) * m_.col(i) + (3.0 * s * s - 1.0) * m_.col(i + 1));
    }

private:
    void locate(double t, int& i, double& s) const {
        const int n = static_cast<int>(y_.cols());
        double u = (t - t0_) / h_;
        if (u < 0.0) u = 0.0;
        const double umax = static_cast<double>(n - 1);
        if (u > umax) u = umax;
        i = std::min(static_cast<int>(u), n - 2);
        s = u - static_cast<double>(i);
    }

    double t0_ = 0.0;
    double h_ = 1.0;
    Eigen::MatrixXd y_;
    Eigen::MatrixXd m_;
};

// ---------------------------------------------------------------------------
// Finite differences on uniformly sampled series (columns of a matrix).
// Centered in the interior, second-order one-sided at the ends.
// ---------------------------------------------------------------------------
inline Eigen::MatrixXd fd_derivative(const Eigen::MatrixXd& y, double h) {
    const int n = static_cast<int>(y.cols());
    if (n < 3) throw InvalidArgument("fd_derivative needs at least three samples");
    Eigen::MatrixXd d(y.rows(), n);
    d.col(0) = (-3.0 * y.col(0) + 4.0 * y.col(1) - y.col(2)) / (2.0 * h);
    for (int i = 1; i < n - 1; ++i) d.col(i) = (y.col(i + 1) - y.col(i - 1)) / (2.0 * h);
    d.col(n - 1) = (3.0 * y.col(n - 1) - 4.0 * y.col(n - 2) + y.col(n - 3)) / (2.0 * h);
    return d;
}

inline Eigen::MatrixXd fd_second_derivative(const Eigen::MatrixXd& y, double h) {
    const int n = static_cast<int>(y.cols());
    if (n < 4) throw InvalidArgument("fd_second_derivative needs at least four samples");
    const double h2 = h * h;
    Eigen::MatrixXd d(y.rows(), n);
    d.col(0) = (2.0 * y.col(0) - 5.0 * y.col(1) + 4.0 * y.col(2) - y.col(3)) / h2;
    for (int i = 1; i < n - 1; ++i) d.col(i) = (y.col(i + 1) - 2.0 * y.col(i) + y.col(i - 1)) / h2;
    d.col(n - 1) =
        (2.0 * y.col(n - 1) - 5.0 * y.col(n - 2) + 4.0 * y.col(n - 3) - y.col(n - 4)) / h2;
    return d;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

// Composite midpoint rule at resolution <= q over [a, b].
inline double midpoint_quadrature(const std::function<double(double)>& f, double a, double b,
                                  double q) {
    if (b <= a) return 0.0;
    if (q <= 0.0) throw InvalidArgument("quadrature resolution must be positive");
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / q - 1e-12)));
    const double step = (b - a) / static_cast<double>(n);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += f(a + (static_cast<double>(j) + 0.5) * step);
    return sum * step;
}

// Midpoint value at q and q/2 combined by Richardson extrapolation; the
// midpoint rule's leading error is O(q^2), so (4*I_half - I_full)/3.
inline double midpoint_quadrature_richardson(const std::function<double(double)>& f, double a,
                                             double b, double q) {
    const double full = midpoint_quadrature(f, a, b, q);
    const double half = midpoint_quadrature(f, a, b, 0.5 * q);
    return (4.0 * half - full) / 3.0;
}

namespace detail {
inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
} // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-12, int max_depth = 48) {
    if (b <= a) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// ---------------------------------------------------------------------------
// 1-D root and minimum search
// ---------------------------------------------------------------------------

// Bisection for increasing g on [lo, hi]; stops when the bracket is below tol.
inline double bisect_increasing(const std::function<double(double)>& g, double lo, double hi,
                                double target, double tol) {
    double a = lo, b = hi;
    for (int it = 0; it < 200 && (b - a) > tol; ++it) {
        const double m = 0.5 * (a + b);
        if (g(m) < target)
            a = m;
        else
            b = m;
    }
    return 0.5 * (a + b);
}

inline double golden_section_minimize(const std::function<double(double)>& f, double a, double b,
                                      double tol) {
    const double gr = 0.6180339887498948482;
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while ((b - a) > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        }
    }
    return f1 < f2 ? x1 : x2;
}

// ---------------------------------------------------------------------------
// Fits and rank statistics
// ---------------------------------------------------------------------------
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw InvalidArgument("least_squares_line: need matched n >= 2");
    const double nx = static_cast<double>(n);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / nx;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / nx;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

// Average ranks (ties share the mean rank), 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 3)
        throw InvalidArgument("spearman_rho: need matched n >= 3");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
        sab += (ra[i] - ma) * (rb[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace sphereflow
