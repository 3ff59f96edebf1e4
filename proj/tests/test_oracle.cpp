#include <cmath>

#include <gtest/gtest.h>

#include "omtp/dynsys.hpp"
#include "omtp/oracle.hpp"
#include "omtp/verify.hpp"

using namespace omtp;

TEST(AnalyticPath, ValueAtMidpoint) {
    const auto path = oracle::analytic_linear_path(0.0, 2.0, 1.0);
    // The published figure 0.88688 is off in the fifth digit; 0.886819 is exact.
    EXPECT_NEAR(path(0.5), 0.88688, 1e-4);
    EXPECT_NEAR(path(0.5), 0.886819, 1e-6);
    EXPECT_NEAR(path(0.5), 2.0 * std::sinh(0.5) / std::sinh(1.0), 1e-15);
}

TEST(AnalyticPath, BoundaryValues) {
    for (auto [x0, x1, t] : {std::tuple{0.0, 2.0, 1.0}, std::tuple{0.0, 6.0, 1.5}, std::tuple{-1.0, 3.0, 2.0}}) {
        const auto path = oracle::analytic_linear_path(x0, x1, t);
        EXPECT_NEAR(path(0.0), x0, 1e-13);
        EXPECT_NEAR(path(t), x1, 1e-13);
    }
}

TEST(AnalyticPath, EulerLagrangeResidual) {
    const auto path = oracle::analytic_linear_path(0.0, 2.0, 1.0);
    EXPECT_LE(oracle::el_residual(path, 101), 1e-6);
    EXPECT_LE(oracle::el_residual(oracle::analytic_linear_path(0.0, 6.0, 1.5), 101), 1e-5);
}

TEST(AnalyticPath, ResidualDetectsWrongPath) {
    // x(t) = 2t satisfies the boundary conditions but not x'' = x.
    auto line = [](double t) { return 2.0 * t; };
    EXPECT_GT(oracle::el_residual(line, 1.0, 11), 0.1);
}

TEST(AnalyticPath, RejectsNonPositiveHorizon) {
    EXPECT_THROW(oracle::analytic_linear_path(0.0, 2.0, 0.0), DomainError);
}

TEST(AnalyticAction, ClosedForm) {
    const double exact = (std::exp(2.0) - 1.0) / std::pow(std::sinh(1.0), 2) - 0.5;
    EXPECT_NEAR(exact, 4.126, 1e-3);
    EXPECT_NEAR(oracle::action_of_analytic(0.0, 2.0, 1.0, 10000), exact, 1e-6);
    EXPECT_NEAR(oracle::action_of_analytic(0.0, 2.0, 1.0, 20), exact, 5e-3);
}

TEST(AnalyticAction, MatchesDiscreteActionOfSampledPath) {
    const int n = 4000;
    const auto spec = make_linear_potential(0.0, 2.0, 1.0, n, 10.0);
    const auto states = oracle::analytic_linear_path(0.0, 2.0, 1.0).sample(n);
    EXPECT_NEAR(om_action(spec, implied_path(spec, states)), oracle::action_of_analytic(0.0, 2.0, 1.0, n), 2e-3);
}

TEST(AnalyticAction, MinimalAgainstPerturbations) {
    EXPECT_GT(verify::minimality_margin(1000), 0.0);
}

TEST(FixedPoint, ResidualZeroAtMaierSteinPoints) {
    const auto spec = make_maier_stein(1.0, 0.15, 5.0, 50, 10.0);
    EXPECT_EQ(oracle::fixed_point_residual(spec, State{-1.0, 0.0}), 0.0);
    EXPECT_EQ(oracle::fixed_point_residual(spec, State{1.0, 0.0}), 0.0);
    EXPECT_GT(oracle::fixed_point_residual(spec, State{0.5, 0.5}), 0.1);
}
