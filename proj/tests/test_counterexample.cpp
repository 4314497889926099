#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "kamforge/counterexample.hpp"

using namespace kamforge;

namespace {

counterexample_config base(int sigma = 1, int ell = 1) {
    counterexample_config c;
    c.sigma_exp = sigma;
    c.ell_exp = ell;
    c.eps_grid = reciprocal_grid(1e-3, 1e-1, 4000);
    return c;
}

}  // namespace

TEST(Counterexample, PiecewiseGradientValues) {
    for (int sigma : {1, 2, 3}) {
        auto m = build(base(sigma));
        EXPECT_EQ(m.grad_g1(0.0), 0.0);
        EXPECT_EQ(m.grad_g1(1.5), std::pow(0.5, sigma));
        EXPECT_EQ(m.grad_g1(-1.5), -std::pow(0.5, sigma));
        EXPECT_EQ(m.grad_g1(1.0), 0.0);
        EXPECT_EQ(m.grad_g1(-1.0), 0.0);
    }
}

TEST(Counterexample, FieldIsOdd) {
    auto m = build(base(3));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    for (int t = 0; t < 200; ++t) {
        vec z(2);
        z << U(rng), U(rng);
        EXPECT_EQ(m.grad_g(-z), -m.grad_g(z));
    }
}

TEST(Counterexample, PerturbationVanishesAtReciprocalMultiplesOfPi) {
    auto m = build(base(1, 2));
    EXPECT_EQ(m.P0(0.0), 0.0);
    for (int k = 1; k <= 50; ++k) EXPECT_NEAR(m.P0(1.0 / (k * std::numbers::pi)), 0.0, 1e-15 / k);
    EXPECT_DOUBLE_EQ(m.P0(0.25), 0.0625 * std::sin(4.0));
}

TEST(Counterexample, RejectsInvalidConfig) {
    auto c = base();
    c.sigma_exp = 0;
    EXPECT_THROW(build(c), kam_error);
    c = base();
    c.ell_exp = 0;
    EXPECT_THROW(build(c), kam_error);
    c = base();
    c.eps_grid = {0.2, 0.6};
    EXPECT_THROW(build(c), kam_error);
    c.eps_grid = {0.01, 0.02};
    EXPECT_THROW(build(c), kam_error);
}

TEST(Counterexample, DegreeHoldsAndWeakConvexityFails) {
    for (int sigma : {1, 2}) {
        auto r = verify_A0_split(base(sigma));
        EXPECT_TRUE(r.degree_nonzero);
        EXPECT_TRUE(r.degree_odd);
        EXPECT_EQ(r.degree, r.degree_fine);
        EXPECT_EQ(r.degree, 1);
        EXPECT_EQ(r.witness_grad_gap, 0.0);
        EXPECT_NEAR(r.witness_distance, 0.3, 1e-15);
        EXPECT_TRUE(r.convexity_fails);
        EXPECT_EQ(r.sampled_min_ratio, 0.0);
        EXPECT_DOUBLE_EQ(r.linear_part_ratio, 1.0);
    }
}

TEST(Counterexample, DegreeStableAcrossResolutions) {
    auto m = build(base(2));
    degree_problem prob{m.field(), counterexample_box(), vec(), 1e-9};
    for (int res : {4, 8, 16, 32}) EXPECT_EQ(degree_at_resolution(prob, res), 1) << res;
}

TEST(Counterexample, EquilibriumAlternatesAtOddHalfPiPoints) {
    counterexample_config c = base(1, 2);
    c.eps_grid.clear();
    for (int k = 3; k <= 400; ++k) c.eps_grid.push_back(2.0 / ((2 * k + 1) * std::numbers::pi));
    auto rep = equilibrium_oscillation(c);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        int k = static_cast<int>(i) + 3;
        double e = c.eps_grid[i];
        double expect = (k % 2 == 0 ? -1.0 : 1.0) * e * e;
        EXPECT_NEAR(rep.rows[i].wb0, expect, 1e-15 * e * e);
        if (i > 0) EXPECT_EQ(rep.rows[i].sign, -rep.rows[i - 1].sign);
    }
    EXPECT_EQ(rep.sign_changes, static_cast<int>(rep.rows.size()) - 1);
}

TEST(Counterexample, EquilibriumVanishesAtReciprocalMultiplesOfPi) {
    counterexample_config c = base(1, 1);
    c.eps_grid.clear();
    for (int k = 1; k <= 300; ++k) {
        double e = 1.0 / (k * std::numbers::pi);
        if (e < 0.5) c.eps_grid.push_back(e);
    }
    auto rep = equilibrium_oscillation(c);
    for (const auto& r : rep.rows) EXPECT_LT(std::abs(r.wb0), 1e-15);
}

TEST(Counterexample, OscillationOnDenseGrid) {
    auto t0 = std::chrono::steady_clock::now();
    auto rep = equilibrium_oscillation(base(2, 1));
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // 1/eps sweeps (10, 1000): floor(1000/pi) - floor(10/pi) = 318 - 3 zeros of sin(1/eps)
    EXPECT_EQ(rep.sign_changes, 315);
    EXPECT_GE(rep.sign_changes, 10);
    EXPECT_EQ(rep.side_alternations, 315);
    EXPECT_LT(rep.max_identity_error, 1e-12);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.residual, 0.0);
        EXPECT_DOUBLE_EQ(r.ratio, -std::sin(1 / r.eps));
    }
    EXPECT_FALSE(rep.cauchy);
    EXPECT_GT(rep.tail_ratio_spread, 1.9);
    EXPECT_LT(secs, 5.0);
}

TEST(Counterexample, W0PreimageSidesFollowForcingSign) {
    auto rep = equilibrium_oscillation(base(2, 1));
    for (const auto& r : rep.rows) {
        if (r.w0_side > 0) {
            EXPECT_GT(r.w0_preimage, 1.0);
            EXPECT_LT(r.w0_preimage, 2.0);
        } else if (r.w0_side < 0) {
            EXPECT_LT(r.w0_preimage, -1.0);
            EXPECT_GT(r.w0_preimage, -2.0);
        }
        EXPECT_EQ(r.w0_side, r.sign);
    }
}

TEST(Counterexample, GridMustSpanTwoDecades) {
    auto c = base();
    c.eps_grid = {0.1, 0.05, 0.02};
    EXPECT_THROW(equilibrium_oscillation(c), kam_error);
}

TEST(Counterexample, CsvLayout) {
    counterexample_config c = base();
    c.eps_grid = {0.3, 0.001};
    std::ostringstream os;
    write_oscillation_csv(os, equilibrium_oscillation(c));
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "epsilon,equilibrium,sign");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 2);
}
