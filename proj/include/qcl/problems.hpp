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

/**
 * @file problems.hpp
 * Cost functions and training drivers: function fitting, first-order ODEs
 * and the coupled harmonic oscillator.
 */
#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "model.hpp"
#include "optimize.hpp"
#include "parallel.hpp"
#include "psr.hpp"
#include "rng.hpp"

namespace qcl {

using RealFn = std::function<double(double)>;

/// n equidistant points on [lo, hi], endpoints included.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n == 0) {
        throw ConfigError("grid needs at least one point");
    }
    std::vector<double> g(n, lo);
    for (std::size_t i = 1; i < n; ++i) {
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return g;
}

/// sum_i c_i x^i
inline double poly_eval(std::span<const double> c, double x) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        acc = acc * x + *it;
    }
    return acc;
}

/// Coefficients c_0..c_degree drawn uniformly from the unit ball.
inline std::vector<double> random_polynomial(std::size_t degree, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x9017}));
    const std::size_t dim = degree + 1;
    std::vector<double> c(dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (std::size_t i = 0; i < dim; i += 2) {
            // Box-Muller keeps the stream identical across standard libraries.
            const double u1 = 1.0 - rng.uniform();
            const double u2 = rng.uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            c[i] = r * std::cos(2 * std::numbers::pi * u2);
            if (i + 1 < dim) {
                c[i + 1] = r * std::sin(2 * std::numbers::pi * u2);
            }
        }
        for (double v : c) {
            norm2 += v * v;
        }
    } while (norm2 == 0.0);
    const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    const double scale = radius / std::sqrt(norm2);
    for (auto &v : c) {
        v *= scale;
    }
    return c;
}

struct Target {
    std::string name;
    RealFn f;
};

/// x3, x3-x2+1, sin2x, or random-poly(<seed>).
inline Target builtin_target(std::string_view name) {
    if (name == "x3") {
        return {"x3", [](double x) { return x * x * x; }};
    }
    if (name == "x3-x2+1") {
        return {"x3-x2+1", [](double x) { return x * x * x - x * x + 1.0; }};
    }
    if (name == "sin2x") {
        return {"sin2x", [](double x) { return std::sin(2 * x); }};
    }
    constexpr std::string_view prefix = "random-poly(";
    if (name.starts_with(prefix) && name.ends_with(")")) {
        const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - 1);
        std::uint64_t seed = 0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty()) {
            auto c = random_polynomial(6, seed);
            return {std::string(name), [c = std::move(c)](double x) { return poly_eval(c, x); }};
        }
    }
    throw ConfigError("unknown target '" + std::string(name) + "'");
}

struct FitProblem {
    std::vector<RealFn> targets; ///< one per observable
    std::vector<double> grid;
};

/// f'(x) = rhs(x) with f(x0) = f0.
struct OdeProblem {
    RealFn rhs;
    double x0 = 0.0;
    double f0 = 0.0;
    double mu = 10.0;
    std::vector<double> grid;
};

/// f''(x) = S f(x) with f(x0) = f0 and f'(x0) = v0.
struct CoupledOscillatorProblem {
    Eigen::Matrix2d stiffness = Eigen::Matrix2d::Zero();
    Eigen::Vector2d f0 = Eigen::Vector2d(1.0, 0.0);
    Eigen::Vector2d v0 = Eigen::Vector2d::Zero();
    double x0 = 0.0;
    double mu = 20.0;
    std::vector<double> grid;

    /// Two equal masses with springs: omega0^2 = k/m, omega1^2 = (k + 2s)/m.
    static Eigen::Matrix2d stiffness_from_frequencies(double omega0_sq, double omega1_sq) {
        const double s = (omega1_sq - omega0_sq) / 2;
        Eigen::Matrix2d m;
        m << -(omega0_sq + s), s, s, -(omega0_sq + s);
        return m;
    }

    void validate() const {
        if (std::abs(stiffness(0, 1) - stiffness(1, 0)) > 1e-12) {
            throw ConfigError("stiffness matrix must be symmetric");
        }
        if (!(mu >= 0)) {
            throw ConfigError("mu must be non-negative");
        }
    }

    /// Closed-form solution through the normal modes of S.
    [[nodiscard]] Eigen::Vector2d analytic(double x) const {
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(stiffness);
        const Eigen::Matrix2d q = eig.eigenvectors();
        const Eigen::Vector2d u0 = q.transpose() * f0;
        const Eigen::Vector2d w0 = q.transpose() * v0;
        const double t = x - x0;
        Eigen::Vector2d u;
        for (Eigen::Index j = 0; j < 2; ++j) {
            const double lambda = eig.eigenvalues()(j);
            const double w = std::sqrt(std::abs(lambda));
            if (w < 1e-12) {
                u(j) = u0(j) + w0(j) * t;
            } else if (lambda < 0) {
                u(j) = u0(j) * std::cos(w * t) + w0(j) / w * std::sin(w * t);
            } else {
                u(j) = u0(j) * std::cosh(w * t) + w0(j) / w * std::sinh(w * t);
            }
        }
        return q * u;
    }
};

/// How an optimizer parameter vector maps onto a model: [theta..., post...].
struct ParameterLayout {
    std::size_t n_theta = 0;
    std::size_t n_post = 0;
    bool train_post = true;

    [[nodiscard]] std::size_t size() const noexcept {
        return n_theta + (train_post ? n_post : 0);
    }

    [[nodiscard]] QclModel apply(const QclModel &model, std::span<const double> p) const {
        if (p.size() != size()) {
            throw StructuralError("parameter vector has " + std::to_string(p.size()) +
                                  " entries, expected " + std::to_string(size()));
        }
        std::vector<double> theta(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n_theta));
        std::vector<double> post = train_post
                                       ? std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(n_theta), p.end())
                                       : std::vector<double>(model.post().begin(), model.post().end());
        return model.with_parameters(std::move(theta), std::move(post));
    }

    [[nodiscard]] std::vector<double> pack(const QclModel &model) const {
        std::vector<double> p(model.theta().begin(), model.theta().end());
        if (train_post) {
            p.insert(p.end(), model.post().begin(), model.post().end());
        }
        return p;
    }

    /// theta uniform on [0, 2 pi), post = 1.
    [[nodiscard]] std::vector<double> random_start(std::uint64_t seed) const {
        auto p = random_angles(n_theta, seed);
        if (train_post) {
            p.insert(p.end(), n_post, 1.0);
        }
        return p;
    }
};

inline ParameterLayout layout_for(const QclModel &model, bool train_post = true) {
    return {model.ansatz().n_theta(), model.observables().size(), train_post};
}

struct CostOptions {
    Evaluator evaluator = Evaluator::exact();
    bool train_post = true;
    std::size_t threads = 1;
};

/// A cost closure together with the model it parametrizes.
struct ModelCost {
    QclModel model;
    ParameterLayout layout;
    CostFn fn;

    double operator()(std::span<const double> p) const { return fn(p); }
};

namespace detail {

/**
 * Model outputs and x-derivatives for one parameter vector. Sampled
 * evaluators give every (cost call, grid point, purpose) its own stream.
 */
class Probe {
  public:
    Probe(const QclModel &model, const Evaluator &ev, std::uint64_t call)
        : model_(model), fn_(make_expectation_fn(model, rebase(ev, call))) {}

    [[nodiscard]] std::vector<double> values(double x, std::uint64_t point) const {
        const double phi = inner_function(model_.encoding(), x).value;
        auto v = fn_(std::vector<double>(model_.n_qubits(), phi), derive_seed(point, {0}));
        for (std::size_t o = 0; o < v.size(); ++o) {
            v[o] *= model_.post()[o];
        }
        return v;
    }

    [[nodiscard]] std::vector<double> derivative(double x, int order, std::uint64_t point) const {
        return derivative_with(model_, x, order, fn_, derive_seed(point, {1}));
    }

  private:
    static Evaluator rebase(Evaluator ev, std::uint64_t call) {
        ev.seed = derive_seed(ev.seed, {call});
        return ev;
    }

    const QclModel &model_;
    ExpectationFn fn_;
};

/// Assembles a ModelCost whose closure sums `point_cost` over `n_points` work items.
template <class PointCost>
ModelCost make_cost(const QclModel &model, const CostOptions &opt, std::size_t n_points,
                    PointCost point_cost) {
    const auto layout = layout_for(model, opt.train_post);
    auto calls = std::make_shared<std::atomic<std::uint64_t>>(0);
    CostFn fn = [model, layout, opt, n_points, calls, point_cost](std::span<const double> p) {
        const QclModel m = layout.apply(model, p);
        const Probe probe(m, opt.evaluator, calls->fetch_add(1));
        std::vector<double> terms(n_points, 0.0);
        parallel_for(n_points, opt.threads,
                     [&](std::size_t i) { terms[i] = point_cost(probe, m, i); });
        double total = 0.0;
        for (double t : terms) {
            total += t;
        }
        return total;
    };
    return {model, layout, std::move(fn)};
}

} // namespace detail

/// sum_i sum_q |target_q(x_i) - post_q <Z_q>(x_i)|^2
inline ModelCost fit_cost(const QclModel &model, const FitProblem &problem,
                          const CostOptions &opt = {}) {
    if (problem.targets.size() != model.observables().size()) {
        throw ConfigError("fit needs one target per observable");
    }
    if (problem.grid.empty()) {
        throw ConfigError("fit grid is empty");
    }
    for (double x : problem.grid) {
        check_domain(model.encoding(), x);
    }
    return detail::make_cost(
        model, opt, problem.grid.size(),
        [problem](const detail::Probe &probe, const QclModel &, std::size_t i) {
            const double x = problem.grid[i];
            const auto v = probe.values(x, i);
            double acc = 0.0;
            for (std::size_t o = 0; o < v.size(); ++o) {
                const double r = problem.targets[o](x) - v[o];
                acc += r * r;
            }
            return acc;
        });
}

/// sum_i |f'(x_i) - rhs(x_i)|^2 + mu |f(x0) - f0|^2 with f' from the shift rule.
inline ModelCost ode_cost(const QclModel &model, const OdeProblem &problem,
                          const CostOptions &opt = {}) {
    if (model.observables().size() != 1) {
        throw ConfigError("ODE model needs exactly one observable");
    }
    if (problem.grid.empty()) {
        throw ConfigError("ODE grid is empty");
    }
    if (!(problem.mu >= 0)) {
        throw ConfigError("mu must be non-negative");
    }
    check_domain(model.encoding(), problem.x0);
    for (double x : problem.grid) {
        if (model.encoding() == Encoding::Arcsin && !(std::abs(x) < 1.0)) {
            throw DomainError("arcsin-encoded ODE grid needs |x| < 1");
        }
    }
    const std::size_t n = problem.grid.size();
    return detail::make_cost(
        model, opt, n + (problem.mu > 0 ? 1 : 0),
        [problem, n](const detail::Probe &probe, const QclModel &, std::size_t i) {
            if (i == n) {
                const double r = probe.values(problem.x0, i)[0] - problem.f0;
                return problem.mu * r * r;
            }
            const double x = problem.grid[i];
            const double r = probe.derivative(x, 1, i)[0] - problem.rhs(x);
            return r * r;
        });
}

/**
 * sum_i ||f''(x_i) - S f(x_i)||^2 + mu ||f'(x0) - v0||^2 + mu ||f(x0) - f0||^2
 * with f'' and f'(x0) from the shift rule.
 */
inline ModelCost coupled_cost(const QclModel &model, const CoupledOscillatorProblem &problem,
                              const CostOptions &opt = {}) {
    if (model.observables().size() != 2) {
        throw ConfigError("coupled oscillator model needs exactly two observables");
    }
    if (problem.grid.empty()) {
        throw ConfigError("coupled oscillator grid is empty");
    }
    problem.validate();
    const std::size_t n = problem.grid.size();
    return detail::make_cost(
        model, opt, n + 1,
        [problem, n](const detail::Probe &probe, const QclModel &, std::size_t i) {
            if (i == n) {
                const auto f = probe.values(problem.x0, i);
                const auto v = probe.derivative(problem.x0, 1, i);
                double acc = 0.0;
                for (Eigen::Index o = 0; o < 2; ++o) {
                    const auto k = static_cast<std::size_t>(o);
                    acc += std::pow(v[k] - problem.v0(o), 2) + std::pow(f[k] - problem.f0(o), 2);
                }
                return problem.mu * acc;
            }
            const double x = problem.grid[i];
            const auto f = probe.values(x, i);
            const auto f2 = probe.derivative(x, 2, i);
            const Eigen::Vector2d sf = problem.stiffness * Eigen::Vector2d(f[0], f[1]);
            return std::pow(f2[0] - sf(0), 2) + std::pow(f2[1] - sf(1), 2);
        });
}

struct TrainResult {
    std::vector<double> parameters; ///< best parameter vector, layout of the cost
    std::vector<TrainRecord> trace;
    QclModel model;                 ///< model with the trained theta and post installed
    double cost = 0.0;              ///< best cost seen during training
    bool aborted = false;
    std::string message;
};

/// Minimizes `cost` from `start` (default: random theta, post = 1).
inline TrainResult train(const ModelCost &cost, const OptimizerConfig &optimizer,
                         std::uint64_t seed, std::optional<std::vector<double>> start = {}) {
    const auto p0 = start ? std::move(*start) : cost.layout.random_start(seed);
    if (p0.size() != cost.layout.size()) {
        throw StructuralError("start vector does not match the parameter layout");
    }
    auto r = minimize(cost.fn, p0, optimizer, seed);
    QclModel trained = cost.layout.apply(cost.model, r.theta);
    return {std::move(r.theta), std::move(r.trace), std::move(trained), r.cost, r.aborted,
            std::move(r.message)};
}

} // namespace qcl
