#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sphereflow/dynamics.hpp"

using namespace sphereflow;

namespace {

TokenConfiguration antipodal_pair(const Eigen::VectorXd& x) {
    Eigen::MatrixXd pts(x.size(), 2);
    pts.col(0) = x;
    pts.col(1) = -x;
    Eigen::VectorXd w(2);
    w << 0.5, 0.5;
    return TokenConfiguration(pts, w);
}

double naive_partition(const Eigen::VectorXd& x, const TokenConfiguration& mu, double beta) {
    double z = 0.0;
    for (int j = 0; j < mu.size(); ++j)
        z += mu.weights()[j] * std::exp(beta * x.dot(mu.point(j)));
    return z;
}

Eigen::VectorXd naive_mean(const Eigen::VectorXd& x, const TokenConfiguration& mu, double beta) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(mu.dim());
    for (int j = 0; j < mu.size(); ++j)
        m += mu.weights()[j] * std::exp(beta * x.dot(mu.point(j))) * mu.point(j);
    return m / naive_partition(x, mu, beta);
}

double max_state_gap(const Trajectory& a, const Trajectory& b) {
    double gap = 0.0;
    for (int i = 0; i <= std::min(a.steps(), b.steps()); ++i)
        gap = std::max(gap, (a.state(i).points() - b.state(i).points()).norm());
    return gap;
}

} // namespace

TEST_CASE("construction guards", "[dynamics]") {
    CHECK_THROWS_AS(AttentionParams(0.0), InvalidArgument);
    CHECK_THROWS_AS(AttentionParams(-1.0), InvalidArgument);

    Eigen::MatrixXd pts = Eigen::MatrixXd::Identity(3, 2);
    pts(0, 0) = 1.1; // not unit
    CHECK_THROWS_AS(TokenConfiguration(pts), InvalidArgument);
    pts(0, 0) = 1.0;
    Eigen::VectorXd w(2);
    w << 0.7, 0.7;
    CHECK_THROWS_AS(TokenConfiguration(pts, w), InvalidArgument);
    w << 1.5, -0.5;
    CHECK_THROWS_AS(TokenConfiguration(pts, w), InvalidArgument);
    const TokenConfiguration ok(pts);
    CHECK(ok.weights()[0] == 0.5);
    CHECK(ok.weights()[1] == 0.5);
}

TEST_CASE("partition function examples and lower bound", "[dynamics]") {
    Rng rng(1);
    const UnitVector x = sample_uniform_sphere(3, rng);
    Eigen::MatrixXd one(3, 1);
    one.col(0) = x.vec();
    CHECK(partition_function(x.vec(), TokenConfiguration(one), 1.0) ==
          Catch::Approx(std::exp(1.0)).epsilon(1e-14));

    CHECK(partition_function(x.vec(), antipodal_pair(x.vec()), 1.0) ==
          Catch::Approx(std::cosh(1.0)).epsilon(1e-14));

    const TokenConfiguration mu = random_configuration(4, 5, rng);
    const Eigen::VectorXd p = sample_uniform_sphere(4, rng).vec();
    CHECK(partition_function(p, mu, 0.5) ==
          Catch::Approx(naive_partition(p, mu, 0.5)).epsilon(1e-14));

    for (int k = 0; k < 50; ++k) {
        const double beta = (k % 3 == 0) ? 0.1 : (k % 3 == 1) ? 1.0 : 5.0;
        const TokenConfiguration cfg = random_configuration(3 + k % 5, 1 + k % 7, rng);
        const Eigen::VectorXd q = sample_uniform_sphere(cfg.dim(), rng).vec();
        CHECK(partition_function(q, cfg, beta) >= std::exp(-beta) * (1.0 - 1e-14));
    }
}

TEST_CASE("mean field examples", "[dynamics]") {
    Rng rng(2);
    const UnitVector y = sample_uniform_sphere(5, rng);
    Eigen::MatrixXd one(5, 1);
    one.col(0) = y.vec();
    CHECK((mean_field(sample_uniform_sphere(5, rng).vec(), TokenConfiguration(one), 2.0) -
           y.vec())
              .norm() <= 1e-15);

    const Eigen::VectorXd x = sample_uniform_sphere(3, rng).vec();
    for (double beta : {0.3, 1.0, 4.0}) {
        const Eigen::VectorXd m = mean_field(x, antipodal_pair(x), beta);
        CHECK((m - std::tanh(beta) * x).norm() <= 1e-15);
    }

    for (int k = 0; k < 20; ++k) {
        const TokenConfiguration mu = random_configuration(4, 6, rng);
        const Eigen::VectorXd p = sample_uniform_sphere(4, rng).vec();
        CHECK((mean_field(p, mu, 1.3) - naive_mean(p, mu, 1.3)).norm() <= 1e-14);
        CHECK(mean_field(p, mu, 1.3).norm() <= 1.0 + 1e-14);
    }
}

TEST_CASE("second moment is the attention-weighted outer product", "[dynamics]") {
    Rng rng(3);
    const UnitVector y = sample_uniform_sphere(4, rng);
    Eigen::MatrixXd one(4, 1);
    one.col(0) = y.vec();
    const Eigen::MatrixXd th =
        second_moment(sample_uniform_sphere(4, rng).vec(), TokenConfiguration(one), 1.0);
    CHECK((th - y.vec() * y.vec().transpose()).norm() <= 1e-15);

    for (int k = 0; k < 100; ++k) {
        const int d = 2 + k % 6;
        const TokenConfiguration mu = random_configuration(d, 1 + k % 8, rng);
        const Eigen::VectorXd x = sample_uniform_sphere(d, rng).vec();
        const Eigen::MatrixXd t = second_moment(x, mu, 0.8);
        CHECK(std::abs(t.trace() - 1.0) <= 1e-12);
        CHECK((t - t.transpose()).norm() <= 1e-14);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }
}

TEST_CASE("flow field examples, tangency, contraction", "[dynamics]") {
    Rng rng(4);
    const UnitVector x = sample_uniform_sphere(3, rng);
    Eigen::MatrixXd one(3, 1);
    one.col(0) = x.vec();
    CHECK(flow_field(x.vec(), TokenConfiguration(one), 1.0).norm() <= 1e-15);
    CHECK(flow_field(x.vec(), antipodal_pair(x.vec()), 1.0).norm() <= 1e-15);

    Eigen::MatrixXd pts(3, 3);
    pts.col(0) = Eigen::Vector3d(1.0, 0.0, 0.0);
    pts.col(1) = Eigen::Vector3d(0.0, 1.0, 0.0);
    pts.col(2) = Eigen::Vector3d(0.6, 0.0, 0.8);
    const TokenConfiguration three(pts);
    const Eigen::VectorXd probe = pts.col(0);
    double z = 0.0;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(3);
    for (int j = 0; j < 3; ++j) {
        const double e = std::exp(probe.dot(pts.col(j))) / 3.0;
        z += e;
        m += e * pts.col(j);
    }
    m /= z;
    const Eigen::VectorXd oracle = m - m.dot(probe) * probe;
    CHECK((flow_field(probe, three, 1.0) - oracle).norm() <= 1e-14);

    for (int k = 0; k < 200; ++k) {
        const double beta = (k % 3 == 0) ? 0.1 : (k % 3 == 1) ? 1.0 : 5.0;
        const int d = 2 + k % 9;
        const TokenConfiguration mu = random_configuration(d, 1 + k % 12, rng);
        const Eigen::VectorXd p = sample_uniform_sphere(d, rng).vec();
        const Eigen::VectorXd f = flow_field(p, mu, beta);
        CHECK(std::abs(f.dot(p)) <= 1e-10);
        CHECK(f.norm() <= 1.0 + 1e-14);
    }
}

TEST_CASE("qkv flow field", "[dynamics]") {
    Rng rng(5);
    const TokenConfiguration mu = random_configuration(3, 4, rng);
    const Eigen::VectorXd x = sample_uniform_sphere(3, rng).vec();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);

    const AttentionParams plain(1.2);
    const AttentionParams idp(1.2, id, id, id);
    CHECK((flow_field_qkv(x, mu, idp) - flow_field(x, mu, 1.2)).norm() <= 1e-15);

    const AttentionParams vzero(1.2, id, id, Eigen::MatrixXd::Zero(3, 3));
    CHECK(flow_field_qkv(x, mu, vzero).norm() == 0.0);

    Eigen::MatrixXd q(3, 3), k(3, 3), v(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            q(r, c) = rng.gaussian();
            k(r, c) = rng.gaussian();
            v(r, c) = rng.gaussian();
        }
    const AttentionParams qkv(0.9, q, k, v);
    double z = 0.0;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(3);
    const Eigen::VectorXd qx = q * x;
    for (int j = 0; j < mu.size(); ++j) {
        const double e = mu.weights()[j] * std::exp(0.9 * qx.dot(k * mu.point(j)));
        z += e;
        acc += e * (v * mu.point(j));
    }
    acc /= z;
    const Eigen::VectorXd oracle = acc - acc.dot(x) * x;
    CHECK((flow_field_qkv(x, mu, qkv) - oracle).norm() <= 1e-13);

    const AttentionParams bad(1.0, Eigen::MatrixXd::Identity(2, 2), id, id);
    CHECK_THROWS_AS(flow_field_qkv(x, mu, bad), DimensionMismatch);
    CHECK((field_for(x, mu, plain) - flow_field(x, mu, 1.2)).norm() == 0.0);
}

TEST_CASE("gamma linearization matches finite differences", "[dynamics]") {
    Rng rng(6);
    const TokenConfiguration mu = random_configuration(4, 5, rng);
    const Eigen::VectorXd x = sample_uniform_sphere(4, rng).vec();
    CHECK(gamma_linearization(x, mu, 1.0, Eigen::VectorXd::Zero(4)).norm() == 0.0);

    Eigen::MatrixXd one(4, 1);
    one.col(0) = sample_uniform_sphere(4, rng).vec();
    CHECK(gamma_linearization(x, TokenConfiguration(one), 2.0, x).norm() <= 1e-15);

    for (int k = 0; k < 20; ++k) {
        const int d = 2 + k % 5;
        const TokenConfiguration cfg = random_configuration(d, 2 + k % 6, rng);
        const Eigen::VectorXd p = sample_uniform_sphere(d, rng).vec();
        const Eigen::VectorXd h = sample_uniform_sphere(d, rng).vec();
        const double beta = 0.5 + k * 0.1;
        const double eps = 1e-5;
        const Eigen::VectorXd fd =
            (mean_field(p + eps * h, cfg, beta) - mean_field(p - eps * h, cfg, beta)) /
            (2.0 * eps);
        const Eigen::VectorXd got = gamma_linearization(p, cfg, beta, h);
        CHECK((got - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    }
}

TEST_CASE("psi matrix assembly", "[dynamics]") {
    Rng rng(7);
    const UnitVector x = sample_uniform_sphere(3, rng);
    Eigen::MatrixXd one(3, 1);
    one.col(0) = x.vec();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
    CHECK((psi_matrix(x.vec(), TokenConfiguration(one), 1.0) -
           (x.vec() * x.vec().transpose() + id))
              .norm() <= 1e-14);

    for (double beta : {0.5, 2.0}) {
        const Eigen::MatrixXd xxt = x.vec() * x.vec().transpose();
        const double th = std::tanh(beta);
        const Eigen::MatrixXd expected = -beta * (xxt - th * th * xxt) + th * (xxt + id);
        CHECK((psi_matrix(x.vec(), antipodal_pair(x.vec()), beta) - expected).norm() <= 1e-14);
    }

    for (int k = 0; k < 20; ++k) {
        const int d = 2 + k % 5;
        const TokenConfiguration cfg = random_configuration(d, 2 + k % 6, rng);
        const Eigen::VectorXd p = sample_uniform_sphere(d, rng).vec();
        const double beta = 0.7;
        const Eigen::MatrixXd theta = second_moment(p, cfg, beta);
        const Eigen::VectorXd m = mean_field(p, cfg, beta);
        const Eigen::MatrixXd expected = -beta * (theta - m * m.transpose()) +
                                         m * p.transpose() +
                                         m.dot(p) * Eigen::MatrixXd::Identity(d, d);
        CHECK((psi_matrix(p, cfg, beta) - expected).norm() <= 1e-14);
    }
}

TEST_CASE("integrate: stationary, grids, clustering, scheme gap", "[dynamics]") {
    Rng rng(8);
    const AttentionParams params(1.0);
    Eigen::MatrixXd one(3, 1);
    one.col(0) = sample_uniform_sphere(3, rng).vec();
    const TokenConfiguration single(one);
    const Trajectory flat = integrate(single, params, 1.0, 0.05, Scheme::Midpoint);
    for (int i = 0; i <= flat.steps(); ++i)
        CHECK((flat.state(i).points() - one).norm() <= 1e-12);

    CHECK_THROWS_AS(integrate(single, params, 1.0, 0.3, Scheme::Euler), StepCountMismatch);

    Eigen::MatrixXd pts(3, 2);
    pts.col(0) = Eigen::Vector3d(1.0, 0.0, 0.0);
    pts.col(1) = Eigen::Vector3d(std::cos(1.0), std::sin(1.0), 0.0);
    const TokenConfiguration pair(pts);
    const Trajectory traj = integrate(pair, params, 1.0, 0.01, Scheme::Midpoint);
    double prev = geodesic_distance(Eigen::VectorXd(pts.col(0)), Eigen::VectorXd(pts.col(1)));
    for (int i = 1; i <= traj.steps(); ++i) {
        const double dist = geodesic_distance(traj.state(i).point(0), traj.state(i).point(1));
        CHECK(dist < prev);
        prev = dist;
    }
    const Trajectory fine = integrate(pair, params, 1.0, 0.001, Scheme::Midpoint);
    CHECK((traj.state(traj.steps()).points() - fine.state(fine.steps()).points()).norm() <= 1e-3);

    for (int i = 0; i <= traj.steps(); ++i)
        for (int j = 0; j < traj.tokens(); ++j)
            CHECK(std::abs(traj.state(i).point(j).norm() - 1.0) <= 1e-7);

    const Trajectory euler = integrate(pair, params, 1.0, 0.01, Scheme::Euler);
    const Trajectory euler_half = integrate(pair, params, 1.0, 0.005, Scheme::Euler);
    const double gap = max_state_gap(euler, traj);
    const Trajectory mid_half = integrate(pair, params, 1.0, 0.005, Scheme::Midpoint);
    const double gap_half = max_state_gap(euler_half, mid_half);
    CHECK(gap <= 5.0 * 0.01);
    CHECK(gap_half <= 0.75 * gap);
}

TEST_CASE("integrate is permutation equivariant", "[dynamics]") {
    Rng rng(9);
    const TokenConfiguration cfg = random_configuration(3, 4, rng);
    const AttentionParams params(1.0);
    const Trajectory a = integrate(cfg, params, 0.5, 0.01, Scheme::Midpoint);

    const std::vector<int> perm = {2, 0, 3, 1};
    Eigen::MatrixXd shuffled(3, 4);
    for (int j = 0; j < 4; ++j) shuffled.col(j) = cfg.point(perm[static_cast<std::size_t>(j)]);
    const Trajectory b = integrate(TokenConfiguration(shuffled), params, 0.5, 0.01,
                                   Scheme::Midpoint);
    double gap = 0.0;
    for (int i = 0; i <= a.steps(); ++i)
        for (int j = 0; j < 4; ++j)
            gap = std::max(gap, (a.state(i).point(perm[static_cast<std::size_t>(j)]) -
                                 b.state(i).point(j))
                                    .norm());
    CHECK(gap <= 1e-9);
}

TEST_CASE("pushforward point", "[dynamics]") {
    Rng rng(10);
    const AttentionParams params(1.0);
    Eigen::MatrixXd one(3, 1);
    one.col(0) = sample_uniform_sphere(3, rng).vec();
    const TokenConfiguration single(one);
    const UnitVector x0(Eigen::VectorXd(one.col(0)));
    CHECK((pushforward_point(x0, single, params, 0.01).vec() - one.col(0)).norm() <= 1e-12);
    CHECK((pushforward_point(x0, single, params, 0.01, true).vec() - one.col(0)).norm() <=
          1e-12);

    const TokenConfiguration cfg = random_configuration(3, 3, rng);
    const Trajectory traj = integrate(cfg, params, 1.0, 0.01, Scheme::Midpoint);
    for (int j = 0; j < 3; ++j) {
        const UnitVector probe(cfg.point(j));
        const UnitVector out = pushforward_point(probe, cfg, params, 0.01);
        CHECK((out.vec() - traj.state(traj.steps()).point(j)).norm() == 0.0);
    }

    const UnitVector p = sample_uniform_sphere(3, rng);
    const UnitVector a = pushforward_point(p, cfg, params, 0.01);
    const UnitVector b = pushforward_point(p, cfg, params, 0.01);
    CHECK((a.vec() - b.vec()).norm() == 0.0);

    const UnitVector frozen = pushforward_point(p, cfg, params, 0.01, true);
    CHECK((a.vec() - frozen.vec()).norm() > 1e-8);
}
