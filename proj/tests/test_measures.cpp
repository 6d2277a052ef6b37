#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sphereflow/measures.hpp"

using namespace sphereflow;

namespace {

Eigen::MatrixXd two_columns(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::MatrixXd m(a.size(), 2);
    m.col(0) = a;
    m.col(1) = b;
    return m;
}

Eigen::VectorXd e(int d, int i) { return Eigen::VectorXd::Unit(d, i); }

} // namespace

TEST_CASE("discrete measure construction", "[measures]") {
    const DiscreteMeasure d1 = DiscreteMeasure::dirac(UnitVector(e(3, 0)));
    CHECK(d1.size() == 1);
    CHECK(d1.weights()[0] == 1.0);
    CHECK((d1.atom(0) - e(3, 0)).norm() == 0.0);

    const DiscreteMeasure u = DiscreteMeasure::uniform(two_columns(e(3, 0), e(3, 1)));
    CHECK(u.size() == 2);
    CHECK(u.weights().sum() == Catch::Approx(1.0).margin(1e-15));

    Eigen::VectorXd bad(2);
    bad << 0.4, 0.4;
    CHECK_THROWS_AS(DiscreteMeasure(two_columns(e(3, 0), e(3, 1)), bad), InvalidArgument);
    Eigen::VectorXd neg(2);
    neg << 1.5, -0.5;
    CHECK_THROWS_AS(DiscreteMeasure(two_columns(e(3, 0), e(3, 1)), neg), InvalidArgument);
    CHECK_THROWS_AS(DiscreteMeasure(two_columns(2.0 * e(3, 0), e(3, 1)),
                                    Eigen::VectorXd::Constant(2, 0.5)),
                    InvalidArgument);

    // duplicate atoms merge, zero-weight atoms drop
    const DiscreteMeasure merged(two_columns(e(3, 0), e(3, 0)),
                                 Eigen::VectorXd::Constant(2, 0.5));
    CHECK(merged.size() == 1);
    CHECK(merged.weights()[0] == 1.0);
    Eigen::VectorXd z(2);
    z << 0.0, 1.0;
    const DiscreteMeasure dropped(two_columns(e(3, 0), e(3, 1)), z);
    CHECK(dropped.size() == 1);
    CHECK((dropped.atom(0) - e(3, 1)).norm() == 0.0);
}

TEST_CASE("measure energy", "[measures]") {
    const auto L = [](const Eigen::VectorXd& p) { return 0.2 * p[0] * p[0] + 0.5 * p[1] * p[1]; };
    const DiscreteMeasure dirac = DiscreteMeasure::dirac(UnitVector(e(3, 0)));
    CHECK(measure_energy(L, dirac) == 0.2);
    // L is 0.2 on the first atom and 0.5 on the second
    const DiscreteMeasure u = DiscreteMeasure::uniform(two_columns(e(3, 0), e(3, 1)));
    CHECK(measure_energy(L, u) == Catch::Approx(0.35).margin(1e-16));

    Rng rng(61);
    const int m = 7;
    Eigen::MatrixXd atoms(4, m);
    for (int j = 0; j < m; ++j) atoms.col(j) = sample_uniform_sphere(4, rng).vec();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < m; ++j) w[j] = rng.uniform() + 0.01;
    w /= w.sum();
    const Eigen::VectorXd u4 = sample_uniform_sphere(4, rng).vec();
    const auto smooth = [&](const Eigen::VectorXd& p) { return std::sin(p.dot(u4)); };
    const DiscreteMeasure mu(atoms, w);
    double naive = 0.0;
    for (int j = 0; j < mu.size(); ++j) naive += mu.weights()[j] * smooth(mu.atom(j));
    CHECK(measure_energy(smooth, mu) == naive);

    // exact linearity in the weights for dyadic weights and values
    const auto dyadic = [](const Eigen::VectorXd& p) { return 2.0 * p[0] + 4.0 * p[1]; };
    Eigen::VectorXd wa(2), wb(2);
    wa << 0.25, 0.75;
    wb << 0.75, 0.25;
    const Eigen::MatrixXd pts = two_columns(e(3, 0), e(3, 1));
    const double ea = measure_energy(dyadic, DiscreteMeasure(pts, wa));
    const double eb = measure_energy(dyadic, DiscreteMeasure(pts, wb));
    const double emix = measure_energy(dyadic, DiscreteMeasure(pts, 0.5 * wa + 0.5 * wb));
    CHECK(emix == 0.5 * ea + 0.5 * eb);
}

TEST_CASE("pushforward measure", "[measures]") {
    Rng rng(62);
    const UnitVector p = sample_uniform_sphere(3, rng);
    const AttentionParams params(1.0);
    const DiscreteMeasure moved =
        pushforward_measure(DiscreteMeasure::dirac(p), params, 0.01, 1.0);
    REQUIRE(moved.size() == 1);
    CHECK((moved.atom(0) - p.vec()).norm() <= 1e-12);
    CHECK(moved.weights().sum() == Catch::Approx(1.0).margin(1e-15));

    Eigen::MatrixXd pts(3, 2);
    pts.col(0) = e(3, 0);
    pts.col(1) = (e(3, 0) + e(3, 1)).normalized();
    const DiscreteMeasure start = DiscreteMeasure::uniform(pts);
    const double before = geodesic_distance(Eigen::VectorXd(pts.col(0)),
                                            Eigen::VectorXd(pts.col(1)));
    const DiscreteMeasure after = pushforward_measure(start, params, 0.001, 1.0);
    REQUIRE(after.size() == 2);
    const double gap = geodesic_distance(after.atom(0), after.atom(1));
    CHECK(gap < before);
    CHECK(after.weights().sum() == Catch::Approx(1.0).margin(1e-15));

    const DiscreteMeasure fine = pushforward_measure(start, params, 0.0001, 1.0);
    for (int j = 0; j < 2; ++j) CHECK((after.atom(j) - fine.atom(j)).norm() <= 1e-3);
}

TEST_CASE("brute force dirac optimality", "[measures]") {
    const auto L2 = [](const Eigen::VectorXd& p) { return 0.2 * p[0] * p[0] + 0.5 * p[1] * p[1]; };
    const DiracOptimalityReport small =
        brute_force_dirac_optimality(two_columns(e(3, 0), e(3, 1)), L2, 200, 5);
    CHECK(small.dirac_minimum == 0.2);
    CHECK(small.dirac_argmin == 0);
    CHECK(small.inequality_holds);
    CHECK(small.mixture_minimum >= small.dirac_minimum);
    CHECK_FALSE(small.degenerate_tie);

    Rng rng(63);
    Eigen::MatrixXd grid(3, 100);
    for (int j = 0; j < 100; ++j) grid.col(j) = sample_uniform_sphere(3, rng).vec();
    const Eigen::VectorXd u1 = sample_uniform_sphere(3, rng).vec();
    const Eigen::VectorXd u2 = sample_uniform_sphere(3, rng).vec();
    const auto smooth = [&](const Eigen::VectorXd& p) {
        const double a = p.dot(u1), b = p.dot(u2);
        return 0.7 * a + 0.4 * b * b + 0.2 * a * a * a;
    };
    const DiracOptimalityReport big = brute_force_dirac_optimality(grid, smooth, 1000, 9);
    CHECK(big.inequality_holds);
    CHECK(big.n_mixtures == 1000);

    const auto constant = [](const Eigen::VectorXd&) { return 1.25; };
    const DiracOptimalityReport tie = brute_force_dirac_optimality(grid, constant, 100, 2);
    CHECK(tie.degenerate_tie);
    CHECK(tie.dirac_argmin == 0);
    CHECK(tie.mixture_minimum == tie.dirac_minimum);
    CHECK(tie.inequality_holds);
}

TEST_CASE("cluster certificate", "[measures]") {
    const UnitVector xstar(e(3, 0));
    const auto L = [](const Eigen::VectorXd& p) { return -p[0]; };

    Eigen::MatrixXd same(3, 5);
    for (int j = 0; j < 5; ++j) same.col(j) = xstar.vec();
    const ClusterCertificate trivial = cluster_certificate(same, xstar, 1.0, 0.1, L);
    CHECK(trivial.mean_condition);
    CHECK(trivial.per_particle_condition);
    CHECK(trivial.inequality_holds);
    CHECK(trivial.mean_distance == 0.0);
    CHECK(trivial.max_particle_distance == 0.0);
    CHECK(trivial.energy == Catch::Approx(-1.0).margin(1e-15));

    Rng rng(64);
    for (int cloud = 0; cloud < 20; ++cloud) {
        const double eps = 0.05 + 0.01 * cloud;
        Eigen::MatrixXd parts(3, 40);
        for (int j = 0; j < 40; ++j)
            parts.col(j) = sample_geodesic_ball(xstar, eps, rng).vec();
        const ClusterCertificate cert = cluster_certificate(parts, xstar, 1.0, eps, L);
        CHECK(cert.per_particle_condition);
        CHECK(cert.inequality_holds);
    }

    // symmetric two-cluster cloud: the mean sits at xstar while every
    // particle is a full unit angle away, so the energy bound fails
    const Eigen::VectorXd w = e(3, 1);
    const double psi = 1.0;
    Eigen::MatrixXd split(3, 40);
    for (int j = 0; j < 40; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        split.col(j) = exp_map(TangentVector(xstar, sign * psi * w)).vec();
    }
    const ClusterCertificate adv = cluster_certificate(split, xstar, 1.0, 0.1, L);
    CHECK(adv.mean_condition);
    CHECK_FALSE(adv.per_particle_condition);
    CHECK_FALSE(adv.inequality_holds);
    CHECK(adv.energy == Catch::Approx(-std::cos(1.0)).margin(1e-12));

    Eigen::MatrixXd antipodal = two_columns(e(3, 0), -e(3, 0));
    CHECK_THROWS_AS(cluster_certificate(antipodal, xstar, 1.0, 0.1, L), ZeroMeanParticles);
    CHECK_THROWS_AS(cluster_certificate(same, xstar, 0.0, 0.1, L), InvalidArgument);
    CHECK_THROWS_AS(cluster_certificate(same, xstar, 1.0, -0.1, L), InvalidArgument);
}

TEST_CASE("lipschitz estimate", "[measures]") {
    Rng rng(65);
    const Eigen::VectorXd a = sample_uniform_sphere(4, rng).vec();
    const auto linear = [&](const Eigen::VectorXd& p) { return p.dot(a); };
    const double est = lipschitz_estimate(linear, 4, 10000, 11);
    CHECK(est >= 0.9);
    CHECK(est <= 1.0 + 1e-12);

    const auto constant = [](const Eigen::VectorXd&) { return 3.0; };
    CHECK(lipschitz_estimate(constant, 4, 200, 11) == 0.0);

    CHECK(lipschitz_estimate(linear, 4, 3000, 11) >= lipschitz_estimate(linear, 4, 300, 11));
    CHECK_THROWS_AS(lipschitz_estimate(linear, 4, 50, 11), InvalidArgument);
}

TEST_CASE("ball bound radius", "[measures]") {
    const double eps = 0.01;
    const double hand = std::sqrt(6.0 * eps / (3.0 * std::pow(std::sin(1.0), 2) * 0.5));
    CHECK(ball_bound_radius(eps, 1.0, 0.0, 3, 1.0, 0.0) == Catch::Approx(hand).margin(1e-12));
    CHECK(hand == Catch::Approx(0.2377).margin(5e-4));

    CHECK_THROWS_AS(ball_bound_radius(eps, 1.0, 0.0, 3, 1.0, 100.0), IllPosedBound);
    CHECK(ball_bound_radius(1e9, 1.0, 0.0, 3, 1.0, 0.0) == 1.0);
    CHECK_THROWS_AS(ball_bound_radius(eps, 1.0, 0.0, 1, 1.0, 0.0), DimensionMismatch);
    CHECK_THROWS_AS(ball_bound_radius(-1.0, 1.0, 0.0, 3, 1.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(ball_bound_radius(eps, 1.0, 0.0, 3, 4.0, 0.0), InvalidArgument);
}

TEST_CASE("third derivative bound estimate", "[measures]") {
    Rng rng(66);
    const Eigen::VectorXd u = sample_uniform_sphere(3, rng).vec();
    const auto quadratic = [&](const Eigen::VectorXd& p) {
        const double s = p.dot(u);
        return s * s;
    };
    CHECK(third_derivative_bound_estimate(quadratic, 3, 64, 4) <= 1e-6);

    const auto cubic = [&](const Eigen::VectorXd& p) {
        const double s = p.dot(u);
        return s * s * s;
    };
    const double est = third_derivative_bound_estimate(cubic, 3, 64, 4);
    CHECK(est >= 0.5);
    CHECK(est <= 6.5);
}

TEST_CASE("epsilon optimal set measure", "[measures]") {
    const Lagrangian sc = Lagrangian::strongly_convex(e(3, 0), 1.0);
    CHECK_THROWS_AS(epsilon_optimal_set_measure(Lagrangian::kinetic_potential(),
                                                BallBoundOptions{}),
                    InvalidArgument);

    BallBoundOptions huge;
    huge.epsilon = 100.0;
    huge.n_samples = 50;
    huge.refine_starts = 2;
    huge.dt = 0.05;
    const BallBoundReport all = epsilon_optimal_set_measure(sc, huge);
    CHECK(all.mc_area == unit_sphere_area(2));
    CHECK(all.mc_stderr == 0.0);
    CHECK(all.samples == 50);

    // the flow holds single-token probes still, so the action is exactly
    // mu T (1 - cos theta) and the eps-optimal set is a cap of area
    // 2 pi eps / (mu T)
    BallBoundOptions opt;
    opt.epsilon = 0.05;
    opt.n_samples = 2000;
    opt.refine_starts = 8;
    opt.dt = 0.02;
    opt.seed = 31;
    const BallBoundReport rep = epsilon_optimal_set_measure(sc, opt);
    CHECK(rep.inf_action <= 1e-6);
    const double cap_area = 2.0 * M_PI * opt.epsilon;
    CHECK(std::abs(rep.mc_area - cap_area) <= 3.5 * rep.mc_stderr);
    CHECK(rep.radius == ball_bound_radius(opt.epsilon, 1.0, 0.0, 3, 1.0, 0.0));
    CHECK(rep.bound_area == geodesic_ball_area(3, rep.radius));

    BallBoundOptions par = opt;
    par.n_samples = 200;
    par.refine_starts = 4;
    par.workers = 3;
    BallBoundOptions ser = par;
    ser.workers = 1;
    const BallBoundReport a = epsilon_optimal_set_measure(sc, par);
    const BallBoundReport b = epsilon_optimal_set_measure(sc, ser);
    CHECK(a.mc_area == b.mc_area);
    CHECK(a.mc_stderr == b.mc_stderr);
    CHECK(a.inf_action == b.inf_action);
    CHECK(a.workers == 3);
    CHECK(b.workers == 1);
}
