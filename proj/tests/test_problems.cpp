// Copyright 2026 The qclkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qcl/problems.hpp"

namespace qcl {
namespace {

OptimizerConfig quasi_newton(std::size_t evals) {
    OptimizerConfig c;
    c.kind = OptimizerKind::QuasiNewton;
    c.max_evals = evals;
    return c;
}

QclModel random_model(Encoding enc, const Ansatz &a, std::vector<std::uint32_t> obs,
                      std::uint64_t seed) {
    std::vector<double> post;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        post.push_back(0.5 + static_cast<double>(i));
    }
    return QclModel(enc, a, std::move(obs), random_angles(a.n_theta(), seed), std::move(post));
}

double exact_fd1(const QclModel &m, double x, std::size_t o, double h = 1e-5) {
    return (eval_exact(m, x + h)[o] - eval_exact(m, x - h)[o]) / (2 * h);
}

double exact_fd2(const QclModel &m, double x, std::size_t o, double h = 1e-4) {
    return (eval_exact(m, x + h)[o] - 2 * eval_exact(m, x)[o] + eval_exact(m, x - h)[o]) / (h * h);
}

TEST(Grid, Linspace) {
    const auto g = linspace(-1, 1, 5);
    EXPECT_EQ(g, (std::vector<double>{-1, -0.5, 0, 0.5, 1}));
    EXPECT_EQ(linspace(0.3, 2, 1), std::vector<double>{0.3});
    EXPECT_THROW(linspace(0, 1, 0), ConfigError);
}

TEST(Targets, Builtins) {
    EXPECT_EQ(builtin_target("x3").f(0.5), 0.125);
    EXPECT_EQ(builtin_target("x3-x2+1").f(2.0), 5.0);
    EXPECT_EQ(builtin_target("sin2x").f(0.3), std::sin(0.6));
    const auto c = random_polynomial(6, 12);
    EXPECT_EQ(builtin_target("random-poly(12)").f(0.7), poly_eval(c, 0.7));
    EXPECT_THROW(builtin_target("x4"), ConfigError);
    EXPECT_THROW(builtin_target("random-poly(x)"), ConfigError);
    EXPECT_THROW(builtin_target("random-poly()"), ConfigError);
}

TEST(RandomPolynomial, InsideUnitBall) {
    std::vector<double> mean(7, 0.0);
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) {
        const auto c = random_polynomial(6, static_cast<std::uint64_t>(s));
        ASSERT_EQ(c.size(), 7U);
        double n2 = 0;
        for (std::size_t i = 0; i < 7; ++i) {
            n2 += c[i] * c[i];
            mean[i] += c[i] / draws;
        }
        ASSERT_LE(n2, 1.0);
    }
    for (double m : mean) {
        EXPECT_LT(std::abs(m), 0.02);
    }
    EXPECT_EQ(random_polynomial(6, 3), random_polynomial(6, 3));
    EXPECT_NE(random_polynomial(6, 3), random_polynomial(6, 4));
}

TEST(RandomPolynomial, RadiusIsUniformInVolume) {
    // P(|c| <= r) = r^7 for the uniform ball
    int inside = 0;
    const int draws = 20000;
    for (int s = 0; s < draws; ++s) {
        const auto c = random_polynomial(6, static_cast<std::uint64_t>(s) + 100000);
        double n2 = 0;
        for (double v : c) {
            n2 += v * v;
        }
        inside += n2 <= 0.81 ? 1 : 0;
    }
    const double p = std::pow(0.9, 7);
    EXPECT_NEAR(static_cast<double>(inside) / draws, p, 4 * std::sqrt(p * (1 - p) / draws));
}

TEST(Layout, PackApplyRoundTrip) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{3, 2}, {0, 2}, 5);
    const auto with = layout_for(m);
    EXPECT_EQ(with.size(), 11U);
    const auto p = with.pack(m);
    const auto back = with.apply(m, p);
    EXPECT_EQ(std::vector<double>(back.theta().begin(), back.theta().end()),
              std::vector<double>(m.theta().begin(), m.theta().end()));
    EXPECT_EQ(back.post()[1], 1.5);

    const auto without = layout_for(m, false);
    EXPECT_EQ(without.size(), 9U);
    EXPECT_EQ(without.apply(m, std::vector<double>(9, 0.0)).post()[1], 1.5);
    EXPECT_THROW(without.apply(m, std::vector<double>(10, 0.0)), StructuralError);

    const auto start = with.random_start(3);
    EXPECT_EQ(start[9], 1.0);
    EXPECT_EQ(start[10], 1.0);
    EXPECT_EQ(std::vector<double>(start.begin(), start.begin() + 9), random_angles(9, 3));
}

TEST(FitCost, MatchesDirectSum) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{3, 2}, {0, 1}, 8);
    const FitProblem prob{{builtin_target("x3").f, builtin_target("sin2x").f}, linspace(-1, 1, 7)};
    const auto cost = fit_cost(m, prob);
    double expected = 0;
    for (double x : prob.grid) {
        const auto v = eval_exact(m, x);
        expected += std::pow(x * x * x - v[0], 2) + std::pow(std::sin(2 * x) - v[1], 2);
    }
    EXPECT_NEAR(cost(layout_for(m).pack(m)), expected, 1e-12);
}

TEST(FitCost, SelfTargetIsZero) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{3, 3}, {0}, 2);
    const FitProblem prob{{[&](double x) { return eval_exact(m, x)[0]; }}, linspace(-1, 1, 20)};
    const auto cost = fit_cost(m, prob);
    EXPECT_NEAR(cost(layout_for(m).pack(m)), 0.0, 1e-24);
}

TEST(FitCost, TwoTargetsAreAdditive) {
    const Ansatz a{3, 2};
    const auto theta = random_angles(a.n_theta(), 4);
    const QclModel both(Encoding::Arcsin, a, {0, 1}, theta, {1.2, 0.8});
    const QclModel first(Encoding::Arcsin, a, {0}, theta, {1.2});
    const QclModel second(Encoding::Arcsin, a, {1}, theta, {0.8});
    const auto grid = linspace(-1, 1, 10);
    const auto f = builtin_target("x3").f;
    const auto g = builtin_target("x3-x2+1").f;
    const double total = fit_cost(both, {{f, g}, grid})(layout_for(both).pack(both));
    const double a1 = fit_cost(first, {{f}, grid})(layout_for(first).pack(first));
    const double a2 = fit_cost(second, {{g}, grid})(layout_for(second).pack(second));
    EXPECT_NEAR(total, a1 + a2, 1e-12);
}

TEST(FitCost, Validation) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{2, 1}, {0}, 1);
    EXPECT_THROW(fit_cost(m, {{}, linspace(-1, 1, 3)}), ConfigError);
    EXPECT_THROW(fit_cost(m, {{builtin_target("x3").f}, {}}), ConfigError);
    EXPECT_THROW(fit_cost(m, {{builtin_target("x3").f}, linspace(-2, 2, 3)}), DomainError);
}

TEST(FitCost, SampledCallsUseFreshStreams) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{2, 1}, {0}, 1);
    CostOptions opt;
    opt.evaluator = Evaluator::sampled(200, NoiseModel::shot_only(), 9);
    const auto p = layout_for(m).pack(m);
    const auto c1 = fit_cost(m, {{builtin_target("x3").f}, linspace(-1, 1, 5)}, opt);
    const auto c2 = fit_cost(m, {{builtin_target("x3").f}, linspace(-1, 1, 5)}, opt);
    const double a = c1(p);
    const double b = c1(p);
    EXPECT_NE(a, b);
    EXPECT_EQ(c2(p), a);
    EXPECT_EQ(c2(p), b);
}

TEST(FitCost, ThreadCountDoesNotChangeValue) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{3, 2}, {0}, 6);
    const FitProblem prob{{builtin_target("x3").f}, linspace(-1, 1, 20)};
    for (const auto &ev : {Evaluator::exact(),
                           Evaluator::sampled(300, NoiseModel::pauli(kEhningenMedianPauli), 2)}) {
        CostOptions one{ev, true, 1};
        CostOptions four{ev, true, 4};
        const auto p = layout_for(m).pack(m);
        EXPECT_EQ(fit_cost(m, prob, one)(p), fit_cost(m, prob, four)(p));
    }
}

TEST(Train, OptimalStartStaysPut) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{3, 3}, {0}, 2);
    const FitProblem prob{{[&](double x) { return eval_exact(m, x)[0]; }}, linspace(-1, 1, 20)};
    const auto cost = fit_cost(m, prob);
    const auto p0 = layout_for(m).pack(m);
    const auto r = train(cost, quasi_newton(50), 1, p0);
    ASSERT_GE(r.trace.size(), 1U);
    EXPECT_NEAR(r.trace[0].cost, 0.0, 1e-24);
    EXPECT_EQ(r.parameters, p0);
}

TEST(Train, NoiselessCubicFit) {
    const auto m = QclModel::zeros(Encoding::Arcsin, Ansatz{3, 3});
    const FitProblem prob{{builtin_target("x3").f}, linspace(-1, 1, 20)};
    const auto cost = fit_cost(m, prob);
    double best = 1e300;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = train(cost, quasi_newton(3000), seed);
        EXPECT_LT(r.cost, r.trace.front().cost);
        EXPECT_NEAR(r.cost, cost(r.parameters), 1e-15);
        best = std::min(best, r.cost);
    }
    EXPECT_LT(best, 1e-2);
}

TEST(Train, FinalModelCarriesParameters) {
    const auto m = QclModel::zeros(Encoding::Arcsin, Ansatz{2, 2});
    const FitProblem prob{{builtin_target("x3-x2+1").f}, linspace(-1, 1, 10)};
    const auto r = train(fit_cost(m, prob), quasi_newton(300), 3);
    EXPECT_EQ(layout_for(m).pack(r.model), r.parameters);
}

TEST(OdeCost, MatchesFiniteDifferenceOracle) {
    const auto m = random_model(Encoding::Arcsin, Ansatz{3, 2}, {0}, 3);
    const OdeProblem prob{[](double x) { return 3 * x * x; }, 0.0, 0.0, 10.0, linspace(-0.9, 0.9, 10)};
    double expected = 0;
    for (double x : prob.grid) {
        expected += std::pow(exact_fd1(m, x, 0) - 3 * x * x, 2);
    }
    const double residual_only = expected;
    expected += 10.0 * std::pow(eval_exact(m, 0.0)[0], 2);
    const auto p = layout_for(m).pack(m);
    EXPECT_NEAR(ode_cost(m, prob)(p), expected, 1e-7);
    auto no_ic = prob;
    no_ic.mu = 0.0;
    EXPECT_NEAR(ode_cost(m, no_ic)(p), residual_only, 1e-7);
}

TEST(OdeCost, PerfectCubicHasZeroCost) {
    const auto m = QclModel::zeros(Encoding::Arcsin, Ansatz{3, 3});
    const auto fit = fit_cost(m, {{builtin_target("x3").f}, linspace(-1, 1, 20)});
    TrainResult best = train(fit, quasi_newton(3000), 1);
    ASSERT_LT(best.cost, 1e-12);
    const OdeProblem prob{[](double x) { return 3 * x * x; }, 0.0, 0.0, 10.0, linspace(-0.9, 0.9, 10)};
    EXPECT_LT(ode_cost(m, prob)(best.parameters), 1e-9);
}

TEST(OdeCost, DomainAndShape) {
    const auto m = QclModel::zeros(Encoding::Arcsin, Ansatz{2, 1});
    OdeProblem prob{[](double) { return 0.0; }, 0.0, 0.0, 1.0, linspace(-1, 1, 5)};
    EXPECT_THROW(ode_cost(m, prob), DomainError);
    prob.grid = linspace(-0.9, 0.9, 5);
    EXPECT_THROW(ode_cost(QclModel::zeros(Encoding::Arcsin, Ansatz{2, 1}, {0, 1}), prob),
                 ConfigError);
    EXPECT_NO_THROW(ode_cost(m, prob));
}

TEST(OdeCost, LargerMuTightensInitialCondition) {
    // f' = 4 cos(4x) cannot be matched by a two-qubit arcsin model, so the
    // residual competes with f(0) = 0.5.
    const auto m = QclModel::zeros(Encoding::Arcsin, Ansatz{2, 2});
    std::vector<double> ic_error;
    for (double mu : {1.0, 10.0, 100.0, 1000.0}) {
        const OdeProblem prob{[](double x) { return 4 * std::cos(4 * x); }, 0.0, 0.5, mu,
                              linspace(-0.9, 0.9, 10)};
        const auto cost = ode_cost(m, prob);
        double best_cost = 1e300;
        double err = 0;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto r = train(cost, quasi_newton(2000), seed);
            if (r.cost < best_cost) {
                best_cost = r.cost;
                err = std::abs(eval_exact(r.model, 0.0)[0] - 0.5);
            }
        }
        ic_error.push_back(err);
    }
    for (std::size_t i = 1; i < ic_error.size(); ++i) {
        EXPECT_LE(ic_error[i], ic_error[i - 1] + 1e-9) << "mu index " << i;
    }
    EXPECT_LT(ic_error.back(), ic_error.front());
}

TEST(Coupled, AnalyticSolution) {
    CoupledOscillatorProblem prob;
    prob.stiffness = CoupledOscillatorProblem::stiffness_from_frequencies(1.0, 16.0);
    EXPECT_NEAR(prob.stiffness(0, 0), -8.5, 1e-15);
    EXPECT_NEAR(prob.stiffness(0, 1), 7.5, 1e-15);
    for (double x : {-1.0, -0.3, 0.0, 0.6}) {
        const auto f = prob.analytic(x);
        EXPECT_NEAR(f(0), 0.5 * (std::cos(x) + std::cos(4 * x)), 1e-12);
        EXPECT_NEAR(f(1), 0.5 * (std::cos(x) - std::cos(4 * x)), 1e-12);
        const double h = 1e-4;
        const Eigen::Vector2d f2 = (prob.analytic(x + h) - 2 * f + prob.analytic(x - h)) / (h * h);
        const Eigen::Vector2d sf = prob.stiffness * f;
        EXPECT_NEAR(f2(0), sf(0), 1e-5);
        EXPECT_NEAR(f2(1), sf(1), 1e-5);
    }
    prob.v0 = Eigen::Vector2d(0.3, -0.2);
    const double h = 1e-6;
    const Eigen::Vector2d v = (prob.analytic(h) - prob.analytic(-h)) / (2 * h);
    EXPECT_NEAR(v(0), 0.3, 1e-8);
    EXPECT_NEAR(v(1), -0.2, 1e-8);
}

TEST(Coupled, CostMatchesFiniteDifferenceOracle) {
    const auto m = random_model(Encoding::Identity,
                                Ansatz{3, 2, Entanglement::Circular, ParamTying::Fresh}, {0, 1}, 6);
    CoupledOscillatorProblem prob;
    prob.stiffness = CoupledOscillatorProblem::stiffness_from_frequencies(1.0, 16.0);
    prob.v0 = Eigen::Vector2d(0.1, 0.2);
    prob.grid = linspace(-1, 1, 6);
    double expected = 0;
    for (double x : prob.grid) {
        const auto f = eval_exact(m, x);
        const Eigen::Vector2d sf = prob.stiffness * Eigen::Vector2d(f[0], f[1]);
        for (std::size_t o = 0; o < 2; ++o) {
            expected += std::pow(exact_fd2(m, x, o) - sf(static_cast<Eigen::Index>(o)), 2);
        }
    }
    const auto f0 = eval_exact(m, 0.0);
    for (std::size_t o = 0; o < 2; ++o) {
        const auto k = static_cast<Eigen::Index>(o);
        expected += prob.mu * (std::pow(exact_fd1(m, 0.0, o) - prob.v0(k), 2) +
                               std::pow(f0[o] - prob.f0(k), 2));
    }
    EXPECT_NEAR(coupled_cost(m, prob)(layout_for(m).pack(m)), expected, 1e-4 * expected);
}

TEST(Coupled, NeedsTwoObservables) {
    CoupledOscillatorProblem prob;
    prob.grid = linspace(-1, 1, 3);
    EXPECT_THROW(coupled_cost(QclModel::zeros(Encoding::Identity, Ansatz{2, 1}), prob),
                 ConfigError);
    prob.stiffness(0, 1) = 1.0;
    EXPECT_THROW(coupled_cost(QclModel::zeros(Encoding::Identity, Ansatz{2, 1}, {0, 1}), prob),
                 ConfigError);
}

TEST(Coupled, DecoupledLimitLearnsCosine) {
    CoupledOscillatorProblem prob;
    prob.stiffness = CoupledOscillatorProblem::stiffness_from_frequencies(1.0, 1.0);
    EXPECT_EQ(prob.stiffness(0, 1), 0.0);
    prob.f0 = Eigen::Vector2d(1.0, 1.0);
    prob.grid = linspace(-1, 1, 10);
    const auto m = QclModel::zeros(Encoding::Identity,
                                   Ansatz{2, 2, Entanglement::Circular, ParamTying::Fresh}, {0, 1});
    const auto cost = coupled_cost(m, prob);
    double best_err = 1e300;
    for (std::uint64_t seed = 0; seed < 3 && best_err >= 0.05; ++seed) {
        const auto r = train(cost, quasi_newton(4000), seed);
        double err = 0;
        for (double x : prob.grid) {
            const auto v = eval_exact(r.model, x);
            err = std::max({err, std::abs(v[0] - std::cos(x)), std::abs(v[1] - std::cos(x))});
        }
        best_err = std::min(best_err, err);
    }
    EXPECT_LT(best_err, 0.05);
}

TEST(Properties, CostsAreNonNegative) {
    CoupledOscillatorProblem cp;
    cp.stiffness = CoupledOscillatorProblem::stiffness_from_frequencies(1.0, 16.0);
    cp.grid = linspace(-1, 1, 5);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m1 = random_model(Encoding::Arcsin, Ansatz{2, 2}, {0}, seed);
        const auto m2 = random_model(Encoding::Identity, Ansatz{2, 2}, {0, 1}, seed);
        EXPECT_GE(fit_cost(m1, {{builtin_target("sin2x").f}, linspace(-1, 1, 5)})(layout_for(m1).pack(m1)), 0.0);
        EXPECT_GE(ode_cost(m1, {builtin_target("sin2x").f, 0, 0, 1, linspace(-0.9, 0.9, 5)})(layout_for(m1).pack(m1)), 0.0);
        EXPECT_GE(coupled_cost(m2, cp)(layout_for(m2).pack(m2)), 0.0);
    }
}

TEST(Properties, GridRefinementConsistency) {
    const auto m = QclModel::zeros(Encoding::Arcsin, Ansatz{3, 3});
    const auto target = builtin_target("sin2x").f;
    const auto r = train(fit_cost(m, {{target}, linspace(-1, 1, 10)}), quasi_newton(1500), 2);
    const auto mae_on = [&](std::size_t n) {
        const auto g = linspace(-1, 1, n);
        std::vector<double> t;
        std::vector<double> v;
        for (double x : g) {
            t.push_back(target(x));
            v.push_back(eval_exact(r.model, x)[0]);
        }
        return mae(t, v);
    };
    // slope of the error |target - model| bounded through finite differences
    double max_slope = 0;
    const auto fine = linspace(-1, 1, 2001);
    for (std::size_t i = 1; i < fine.size(); ++i) {
        const double e1 = target(fine[i]) - eval_exact(r.model, fine[i])[0];
        const double e0 = target(fine[i - 1]) - eval_exact(r.model, fine[i - 1])[0];
        max_slope = std::max(max_slope, std::abs(e1 - e0) / (fine[i] - fine[i - 1]));
    }
    const double spacing = 2.0 / 9.0;
    EXPECT_LT(std::abs(mae_on(19) - mae_on(10)), max_slope * spacing);
}

} // namespace
} // namespace qcl
