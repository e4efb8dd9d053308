#include <smal/sparse_solver.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace smal {
namespace {

Eigen::MatrixXd gaussian(long rows, long cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Six-dimensional features, four orthonormal templates in two sequences of two.
struct OrthonormalInstance {
    TemplateMatrix x;
    Eigen::MatrixXd y;
};

OrthonormalInstance orthonormal_instance() {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd q = gaussian(6, 4, rng).householderQr().householderQ() * Eigen::MatrixXd::Identity(6, 4);
    return {TemplateMatrix(q, 2), q.leftCols(2)};
}

TEST(L21Norm, Examples) {
    EXPECT_DOUBLE_EQ(l21_norm((Eigen::MatrixXd(2, 2) << 3, 4, 0, 0).finished()), 5.0);
    EXPECT_DOUBLE_EQ(l21_norm(Eigen::MatrixXd::Identity(2, 2)), 2.0);
    EXPECT_DOUBLE_EQ(l21_norm(Eigen::MatrixXd::Zero(3, 4)), 0.0);
}

TEST(S1Norm, GroupStructureMatters) {
    const Eigen::MatrixXd w = (Eigen::MatrixXd(2, 2) << 3, 0, 4, 0).finished();
    EXPECT_DOUBLE_EQ(s1_norm({w, 2}), 5.0);
    EXPECT_DOUBLE_EQ(s1_norm({w, 1}), 7.0);
    EXPECT_DOUBLE_EQ(s1_norm({Eigen::MatrixXd::Zero(4, 3), 2}), 0.0);
    EXPECT_THROW(s1_norm({Eigen::MatrixXd::Zero(3, 1), 2}), std::invalid_argument);
}

TEST(Objective, ZeroWeightsReduceToColumnNorms) {
    std::mt19937_64 rng(1);
    const TemplateMatrix x(gaussian(10, 6, rng), 3);
    const Eigen::MatrixXd y = gaussian(10, 3, rng);
    const double expected = y.colwise().norm().sum();
    EXPECT_NEAR(objective(x, y, {Eigen::MatrixXd::Zero(6, 3), 3}, {}), expected, 1e-12);
}

TEST(Objective, IdentityHandComputation) {
    const TemplateMatrix x(Eigen::MatrixXd::Identity(2, 2), 2);
    const Eigen::MatrixXd y = Eigen::MatrixXd::Identity(2, 2);
    SolverConfig cfg;
    cfg.lambda1 = cfg.lambda2 = 0.1;
    EXPECT_NEAR(objective(x, y, {Eigen::MatrixXd::Identity(2, 2), 2}, cfg), 0.4, 1e-15);
}

TEST(Objective, MatchesIndependentLoopOracle) {
    std::mt19937_64 rng(2);
    const TemplateMatrix x(gaussian(20, 12, rng), 3);
    const Eigen::MatrixXd y = gaussian(20, 3, rng);
    const Eigen::MatrixXd w = gaussian(12, 3, rng);
    SolverConfig cfg;
    cfg.lambda1 = 0.37;
    cfg.lambda2 = 0.61;
    EXPECT_NEAR(objective(x, y, {w, 3}, cfg), oracle::objective_loops(x.data, y, w, 3, 0.37, 0.61), 1e-12);
    EXPECT_NEAR(smoothed_objective(x, y, {w, 3}, cfg),
                oracle::objective_loops(x.data, y, w, 3, 0.37, 0.61, cfg.epsilon), 1e-12);
}

TEST(Objective, ShapeMismatchThrows) {
    std::mt19937_64 rng(3);
    const TemplateMatrix x(gaussian(10, 6, rng), 3);
    EXPECT_THROW(objective(x, gaussian(9, 3, rng), {gaussian(6, 3, rng), 3}, {}), std::invalid_argument);
    EXPECT_THROW(objective(x, gaussian(10, 3, rng), {gaussian(5, 3, rng), 3}, {}), std::invalid_argument);
    EXPECT_THROW(objective(x, gaussian(10, 2, rng), {gaussian(6, 2, rng), 3}, {}), std::invalid_argument);
}

TEST(Solve, ZeroQueryGivesZeroWeights) {
    std::mt19937_64 rng(5);
    const TemplateMatrix x(oracle::feature_like(30, 12, rng), 4);
    const Eigen::MatrixXd y = Eigen::MatrixXd::Zero(30, 4);
    SolverConfig cfg;
    const SolveResult r = solve(x, y, cfg);
    EXPECT_LE(r.weights.data.cwiseAbs().maxCoeff(), 1e-12);
    // Every smoothed norm sits at its floor eps/2.
    const double floor = (4 + cfg.lambda1 * 12 + cfg.lambda2 * 3 * 4) * cfg.epsilon / 2;
    EXPECT_LE(r.state.objective_trace.back(), floor * (1 + 1e-9));
    EXPECT_LE(objective(x, y, r.weights, cfg), 1e-10);
}

TEST(Solve, OrthonormalCopyConcentratesOnItsGroup) {
    const auto inst = orthonormal_instance();
    SolverConfig cfg;
    cfg.lambda1 = cfg.lambda2 = 0.01;
    const SolveResult r = solve(inst.x, inst.y, cfg);
    const double mass0 = r.weights.data.topRows(2).lpNorm<1>();
    const double mass1 = r.weights.data.bottomRows(2).lpNorm<1>();
    EXPECT_GT(mass0, mass1);

    const auto ref = oracle::projected_subgradient(inst.x.data, inst.y, 2, 0.01, 0.01, cfg.epsilon, 50000);
    EXPECT_NEAR(r.state.objective_trace.back(), ref.best, 1e-3);
    EXPECT_GT(ref.w.topRows(2).lpNorm<1>(), ref.w.bottomRows(2).lpNorm<1>());
}

TEST(Solve, RandomInstanceDescendsAndConverges) {
    std::mt19937_64 rng(6);
    const TemplateMatrix x(oracle::feature_like(40, 24, rng), 6);
    const Eigen::MatrixXd y = oracle::feature_like(40, 6, rng);
    const SolveResult r = solve(x, y, {});
    EXPECT_TRUE(r.state.converged);
    EXPECT_LE(r.state.iterations, 100);
    const auto& trace = r.state.objective_trace;
    ASSERT_EQ(trace.size(), static_cast<std::size_t>(r.state.iterations) + 1);
    for (std::size_t t = 1; t < trace.size(); ++t) EXPECT_LE(trace[t], trace[t - 1] + 1e-9) << "iteration " << t;
    // The trace is the smoothed objective of each iterate; check the last one independently.
    EXPECT_NEAR(trace.back(),
                oracle::objective_loops(x.data, y, r.weights.data, 6, 0.1, 0.1, SolverConfig{}.epsilon), 1e-10);
}

TEST(Solve, MonotoneDescentOnManySeeds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const TemplateMatrix x(oracle::feature_like(40, 24, rng), 6);
        const Eigen::MatrixXd y = oracle::feature_like(40, 6, rng);
        const auto trace = solve(x, y, {}).state.objective_trace;
        for (std::size_t t = 1; t < trace.size(); ++t)
            ASSERT_LE(trace[t], trace[t - 1] + 1e-9) << "seed " << seed << " iteration " << t;
    }
}

// ||a~|| - ||a~||^2 / (2||a||) <= ||a|| - ||a||^2 / (2||a||), i.e. -(||a~|| - ||a||)^2 / (2||a||) <= 0.
TEST(Lemma, ReweightingInequality) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = 1 + trial % 7;
        Eigen::VectorXd a(dim), b(dim);
        for (int i = 0; i < dim; ++i) {
            a[i] = n(rng) * (1 + trial % 5);
            b[i] = n(rng);
        }
        const double na = a.norm(), nb = b.norm();
        EXPECT_LE(nb - nb * nb / (2 * na), na - na * na / (2 * na) + 1e-12);
    }
}

TEST(Solve, AgreesWithSubgradientOracleOnSmallInstances) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        std::mt19937_64 rng(50 + seed);
        const TemplateMatrix x(oracle::feature_like(20, 12, rng), 3);
        const Eigen::MatrixXd y = oracle::feature_like(20, 3, rng);
        const SolverConfig cfg;
        const double irls = solve(x, y, cfg).state.objective_trace.back();
        const auto ref = oracle::projected_subgradient(x.data, y, 3, cfg.lambda1, cfg.lambda2, cfg.epsilon, 50000);
        EXPECT_LE(std::abs(irls - ref.best) / ref.best, 1e-3) << "seed " << seed;
    }
}

TEST(Solve, Deterministic) {
    std::mt19937_64 rng(8);
    const TemplateMatrix x(oracle::feature_like(40, 24, rng), 6);
    const Eigen::MatrixXd y = oracle::feature_like(40, 6, rng);
    const SolveResult a = solve(x, y, {});
    const SolveResult b = solve(x, y, {});
    EXPECT_EQ(a.weights.data, b.weights.data);
    EXPECT_EQ(a.state.objective_trace, b.state.objective_trace);
}

TEST(Solve, LargerGroupPenaltyDoesNotAddActiveGroups) {
    const auto inst = orthonormal_instance();
    auto active_groups = [&](double lambda2) {
        SolverConfig cfg;
        cfg.lambda1 = 0.01;
        cfg.lambda2 = lambda2;
        const SolveResult r = solve(inst.x, inst.y, cfg);
        const Eigen::Vector2d mass(r.weights.data.topRows(2).lpNorm<1>(), r.weights.data.bottomRows(2).lpNorm<1>());
        return (mass.array() > 0.05 * mass.maxCoeff()).count();
    };
    EXPECT_LE(active_groups(0.1), active_groups(0.01));
}

TEST(Solve, RejectsBadInput) {
    std::mt19937_64 rng(9);
    const TemplateMatrix x(gaussian(8, 4, rng), 2);
    Eigen::MatrixXd y = gaussian(8, 2, rng);
    SolverConfig none;
    none.lambda1 = none.lambda2 = 0.0;
    EXPECT_THROW(solve(x, y, none), std::invalid_argument);
    y(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(solve(x, y, {}), std::invalid_argument);
    EXPECT_THROW(solve(TemplateMatrix{}, gaussian(8, 2, rng), {}), std::invalid_argument);
}

TEST(Solve, OverflowingWeightsReportIteration) {
    std::mt19937_64 rng(10);
    const TemplateMatrix x(gaussian(8, 4, rng), 2);
    SolverConfig cfg;
    cfg.lambda1 = 1e308;
    cfg.epsilon = 1e-300;
    try {
        solve(x, gaussian(8, 2, rng), cfg);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_EQ(e.iteration(), 1);
    }
}

TEST(TemplateMatrix, AppendKeepsSequencesContiguous) {
    TemplateMatrix t;
    t.seq_len = 2;
    t.append_sequence(Eigen::MatrixXd::Constant(3, 2, 1.0));
    t.append_sequence(Eigen::MatrixXd::Constant(3, 2, 2.0));
    EXPECT_EQ(t.num_seqs(), 2);
    EXPECT_EQ(t.seq_of_column(3), 1);
    EXPECT_EQ(t.sequence(1), Eigen::MatrixXd::Constant(3, 2, 2.0));
    EXPECT_THROW(t.append_sequence(Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);
    EXPECT_THROW(TemplateMatrix(Eigen::MatrixXd::Zero(3, 5), 2), std::invalid_argument);
}

}  // namespace
}  // namespace smal
