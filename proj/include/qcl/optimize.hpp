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
 * @file optimize.hpp
 * Classical optimizers for the variational loop.
 *
 *  - COBYLA: derivative-free; a linear interpolation model on an (n+1)-point
 *    simplex is minimized inside a trust region of radius rho, which shrinks
 *    from rho_begin to rho_end.
 *  - SPSA: simultaneous-perturbation stochastic approximation with
 *    a_k = a / (k + 1 + A)^alpha and c_k = c / (k + 1)^gamma.
 *  - QuasiNewton: BFGS with central finite-difference gradients and an
 *    Armijo backtracking line search. Used where a gradient method is wanted
 *    on unconstrained problems.
 *
 * Every cost evaluation is recorded in the trace; the budget `max_evals`
 * counts all of them (including finite-difference probes).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "error.hpp"
#include "rng.hpp"

namespace qcl {

using CostFn = std::function<double(std::span<const double>)>;

enum class OptimizerKind : std::uint8_t { Cobyla, Spsa, QuasiNewton };

struct CobylaOptions {
    double rho_begin = 0.5;
    double rho_end = 1e-4;
};

struct SpsaOptions {
    double a = 0.0; ///< <= 0 means calibrate so the first step is ~target_step
    double c = 0.2;
    double alpha = 0.602;
    double gamma = 0.101;
    double stability = -1.0; ///< A; < 0 means 0.1 * max_evals
    double target_step = 0.1;
    std::size_t calibration_samples = 5;
};

struct QuasiNewtonOptions {
    double fd_step = 1e-6;
    double armijo = 1e-4;
    double max_step = 1.0;
    double gradient_tol = 1e-9;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Cobyla;
    std::size_t max_evals = 1000;
    double tolerance = 1e-12;
    CobylaOptions cobyla{};
    SpsaOptions spsa{};
    QuasiNewtonOptions quasi_newton{};

    void validate() const {
        if (max_evals < 1) {
            throw ConfigError("max_evals must be >= 1");
        }
        if (!(cobyla.rho_begin > 0 && cobyla.rho_end > 0 && cobyla.rho_end <= cobyla.rho_begin)) {
            throw ConfigError("COBYLA needs 0 < rho_end <= rho_begin");
        }
        if (!(spsa.c > 0 && spsa.alpha > 0 && spsa.gamma > 0 && spsa.target_step > 0)) {
            throw ConfigError("SPSA schedules must be positive");
        }
        if (!(quasi_newton.fd_step > 0 && quasi_newton.max_step > 0)) {
            throw ConfigError("quasi-Newton steps must be positive");
        }
    }
};

inline std::string to_string(OptimizerKind k) {
    switch (k) {
    case OptimizerKind::Cobyla:
        return "cobyla";
    case OptimizerKind::Spsa:
        return "spsa";
    case OptimizerKind::QuasiNewton:
        return "quasi-newton";
    }
    return "?";
}

struct TrainRecord {
    std::size_t eval_index = 0;
    double cost = 0.0;
    std::vector<double> theta;
    std::uint64_t seed = 0;
};

struct MinimizeResult {
    std::vector<double> theta; ///< best parameters seen
    double cost = std::numeric_limits<double>::infinity();
    std::vector<TrainRecord> trace;
    bool aborted = false; ///< a non-finite cost stopped the run
    std::string message;
};

namespace detail {

struct BudgetExhausted {};
struct NonFiniteCost {};

/// Counts evaluations, keeps the trace and the best point.
class Tracker {
  public:
    Tracker(const CostFn &cost, std::size_t budget, std::uint64_t seed)
        : cost_(cost), budget_(budget), seed_(seed) {}

    double operator()(std::span<const double> theta) {
        if (trace_.size() >= budget_) {
            throw BudgetExhausted{};
        }
        const double f = cost_(theta);
        trace_.push_back({trace_.size(), f, {theta.begin(), theta.end()}, seed_});
        if (!std::isfinite(f)) {
            throw NonFiniteCost{};
        }
        if (f < best_) {
            best_ = f;
            best_theta_.assign(theta.begin(), theta.end());
        }
        return f;
    }

    double operator()(const Eigen::VectorXd &theta) {
        return (*this)(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
    }

    [[nodiscard]] std::size_t used() const noexcept { return trace_.size(); }
    [[nodiscard]] std::size_t remaining() const noexcept { return budget_ - trace_.size(); }

    MinimizeResult finish(bool aborted, std::string message) && {
        MinimizeResult r;
        r.theta = std::move(best_theta_);
        r.cost = best_;
        r.trace = std::move(trace_);
        r.aborted = aborted;
        r.message = std::move(message);
        return r;
    }

  private:
    const CostFn &cost_;
    std::size_t budget_;
    std::uint64_t seed_;
    std::vector<TrainRecord> trace_;
    double best_ = std::numeric_limits<double>::infinity();
    std::vector<double> best_theta_;
};

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Unconstrained COBYLA. Returns when rho reaches rho_end (or the budget ends).
inline void run_cobyla(Tracker &f, const Eigen::VectorXd &x0, const CobylaOptions &opt) {
    constexpr double kAlpha = 0.25; // min acceptable vertex "height" / rho
    constexpr double kBeta = 2.1;   // max acceptable edge length / rho
    constexpr double kGamma = 0.5;  // geometry step length / rho
    constexpr double kDelta = 1.1;  // distance scale when choosing the vertex to drop

    const auto n = x0.size();
    double rho = opt.rho_begin;

    // Vertex 0 is the best point; columns of d are offsets of the other vertices.
    Eigen::VectorXd best = x0;
    double f_best = f(best);
    if (n == 0) {
        return;
    }
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(n, n) * rho;
    Eigen::VectorXd fv(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        fv(j) = f(Eigen::VectorXd(best + d.col(j)));
    }

    bool poor_step = false;
    while (true) {
        // Move the lowest vertex to the origin of the simplex.
        Eigen::Index jmin = 0;
        if (fv.minCoeff(&jmin) < f_best) {
            const Eigen::VectorXd shift = d.col(jmin);
            best += shift;
            std::swap(f_best, fv(jmin));
            for (Eigen::Index j = 0; j < n; ++j) {
                d.col(j) -= shift;
            }
            d.col(jmin) = -shift;
        }

        const Eigen::MatrixXd dinv = d.inverse(); // rows r_j with r_j . d_k = delta_jk
        const Eigen::VectorXd g = dinv.transpose() * (fv.array() - f_best).matrix();

        if (poor_step) {
            poor_step = false;
            Eigen::Index worst_edge = 0;
            Eigen::Index worst_height = 0;
            const Eigen::VectorXd edges = d.colwise().norm().transpose();
            const Eigen::VectorXd heights = dinv.rowwise().norm().cwiseInverse();
            const double max_edge = edges.maxCoeff(&worst_edge);
            const double min_height = heights.minCoeff(&worst_height);
            if (max_edge > kBeta * rho || min_height < kAlpha * rho) {
                // Geometry step: replace the vertex that spoils the simplex.
                const Eigen::Index l = max_edge > kBeta * rho ? worst_edge : worst_height;
                Eigen::VectorXd dir = dinv.row(l).transpose();
                dir *= kGamma * rho / dir.norm();
                if (g.dot(dir) > 0) {
                    dir = -dir;
                }
                d.col(l) = dir;
                fv(l) = f(Eigen::VectorXd(best + dir));
                continue;
            }
            if (rho <= opt.rho_end) {
                return;
            }
            rho *= 0.5;
            if (rho <= 1.5 * opt.rho_end) {
                rho = opt.rho_end;
            }
            continue;
        }

        const double gnorm = g.norm();
        if (!(gnorm > 0.0) || !std::isfinite(gnorm)) {
            poor_step = true;
            continue;
        }
        const Eigen::VectorXd step = -rho * g / gnorm;
        const double f_trial = f(Eigen::VectorXd(best + step));
        const double predicted = rho * gnorm;
        const double actual = f_best - f_trial;

        // Drop the vertex with the largest barycentric weight, boosted for distant vertices.
        // A failed step only replaces a vertex when that improves the simplex.
        const Eigen::VectorXd lambda = dinv * step;
        Eigen::Index drop = -1;
        double score_max = actual > 0 ? 0.0 : 1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dist = (d.col(j) - step).norm();
            const double score =
                std::abs(lambda(j)) * std::max(1.0, std::pow(dist / (kDelta * rho), 2));
            if (score > score_max) {
                score_max = score;
                drop = j;
            }
        }
        if (drop >= 0) {
            d.col(drop) = step;
            fv(drop) = f_trial;
        }
        poor_step = actual < 0.1 * predicted;
    }
}

inline Eigen::VectorXd central_gradient(Tracker &f, const Eigen::VectorXd &x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double fp = f(probe);
        probe(i) = x(i) - h;
        const double fm = f(probe);
        probe(i) = x(i);
        g(i) = (fp - fm) / (2 * h);
    }
    return g;
}

inline void run_quasi_newton(Tracker &f, const Eigen::VectorXd &x0, const QuasiNewtonOptions &opt,
                             double tolerance) {
    const auto n = x0.size();
    Eigen::VectorXd x = x0;
    double fx = f(x);
    Eigen::VectorXd g = central_gradient(f, x, opt.fd_step);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    int stalls = 0;

    while (g.lpNorm<Eigen::Infinity>() > opt.gradient_tol) {
        Eigen::VectorXd p = -h * g;
        if (g.dot(p) >= 0) {
            h.setIdentity();
            p = -g;
        }
        if (p.norm() > opt.max_step) {
            p *= opt.max_step / p.norm();
        }
        const double slope = g.dot(p);
        double t = 1.0;
        double ft = f(Eigen::VectorXd(x + t * p));
        while (ft > fx + opt.armijo * t * slope && t > 1e-10) {
            t *= 0.5;
            ft = f(Eigen::VectorXd(x + t * p));
        }
        if (ft > fx + opt.armijo * t * slope) {
            if (++stalls >= 2) {
                return;
            }
            h.setIdentity();
            continue;
        }
        const Eigen::VectorXd s = t * p;
        x += s;
        const double f_prev = fx;
        fx = ft;
        const Eigen::VectorXd g_new = central_gradient(f, x, opt.fd_step);
        const Eigen::VectorXd y = g_new - g;
        g = g_new;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                h = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
            h = v * h * v.transpose() + rho * s * s.transpose();
        }
        if (std::abs(f_prev - fx) <= tolerance * std::max(1.0, std::abs(fx))) {
            if (++stalls >= 2) {
                return;
            }
        } else {
            stalls = 0;
        }
    }
}

} // namespace detail

/**
 * Two-evaluation SPSA gradient estimate with Rademacher directions drawn from `seed`:
 * g = (f(theta + c delta) - f(theta - c delta)) / (2c) * delta.
 */
template <class Cost>
std::vector<double> spsa_gradient_estimate(Cost &&cost, std::span<const double> theta, double c_k,
                                           std::uint64_t seed) {
    if (!(c_k > 0)) {
        throw ConfigError("SPSA perturbation c_k must be positive");
    }
    Rng rng(seed);
    std::vector<double> delta(theta.size());
    for (auto &d : delta) {
        d = (rng() >> 63) ? 1.0 : -1.0;
    }
    std::vector<double> plus(theta.begin(), theta.end());
    std::vector<double> minus(theta.begin(), theta.end());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        plus[i] += c_k * delta[i];
        minus[i] -= c_k * delta[i];
    }
    const double diff = (cost(std::span<const double>(plus)) - cost(std::span<const double>(minus))) / (2 * c_k);
    for (auto &d : delta) {
        d *= diff;
    }
    return delta;
}

namespace detail {

inline void run_spsa(Tracker &f, const Eigen::VectorXd &x0, const SpsaOptions &opt,
                     std::size_t max_evals, std::uint64_t seed) {
    const double big_a = opt.stability >= 0 ? opt.stability : 0.1 * static_cast<double>(max_evals);
    const auto cost = [&f](std::span<const double> t) { return f(t); };
    std::vector<double> x(x0.data(), x0.data() + x0.size());
    f(x);

    double a = opt.a;
    if (a <= 0) {
        double magnitude = 0.0;
        for (std::size_t s = 0; s < opt.calibration_samples; ++s) {
            const auto g = spsa_gradient_estimate(cost, x, opt.c, derive_seed(seed, {1, s}));
            magnitude += std::abs(g.empty() ? 0.0 : g[0]); // |g_i| is identical for every i
        }
        magnitude /= static_cast<double>(std::max<std::size_t>(1, opt.calibration_samples));
        a = magnitude > 0 ? opt.target_step * std::pow(big_a + 1, opt.alpha) / magnitude : opt.target_step;
    }
    for (std::size_t k = 0;; ++k) {
        const double kk = static_cast<double>(k);
        const double a_k = a / std::pow(kk + 1 + big_a, opt.alpha);
        const double c_k = opt.c / std::pow(kk + 1, opt.gamma);
        const auto g = spsa_gradient_estimate(cost, x, c_k, derive_seed(seed, {2, k}));
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] -= a_k * g[i];
        }
        f(x);
    }
}

} // namespace detail

namespace detail {

inline MinimizeResult with_start(MinimizeResult r, std::span<const double> theta0) {
    if (r.theta.empty()) {
        r.theta.assign(theta0.begin(), theta0.end());
    }
    return r;
}

} // namespace detail

/**
 * Minimizes `cost` from `theta0`. The trace holds one record per cost
 * evaluation (at most `max_evals`); the returned theta is the best seen.
 * A non-finite cost stops the run with `aborted` set and the offending
 * evaluation as the last trace record.
 */
inline MinimizeResult minimize(const CostFn &cost, std::span<const double> theta0,
                               const OptimizerConfig &config, std::uint64_t seed) {
    config.validate();
    detail::Tracker tracker(cost, config.max_evals, seed);
    const Eigen::VectorXd x0 = detail::to_eigen(theta0);
    try {
        switch (config.kind) {
        case OptimizerKind::Cobyla:
            detail::run_cobyla(tracker, x0, config.cobyla);
            break;
        case OptimizerKind::Spsa:
            detail::run_spsa(tracker, x0, config.spsa, config.max_evals, seed);
            break;
        case OptimizerKind::QuasiNewton:
            detail::run_quasi_newton(tracker, x0, config.quasi_newton, config.tolerance);
            break;
        }
    } catch (const detail::BudgetExhausted &) {
        return detail::with_start(std::move(tracker).finish(false, "evaluation budget exhausted"), theta0);
    } catch (const detail::NonFiniteCost &) {
        return detail::with_start(std::move(tracker).finish(true, "cost returned a non-finite value"),
                          theta0);
    }
    return detail::with_start(std::move(tracker).finish(false, "converged"), theta0);
}

/// Best-so-far cost after each evaluation.
inline std::vector<double> best_so_far(std::span<const TrainRecord> trace) {
    std::vector<double> out;
    out.reserve(trace.size());
    double best = std::numeric_limits<double>::infinity();
    for (const auto &r : trace) {
        best = std::min(best, r.cost);
        out.push_back(best);
    }
    return out;
}

/// eval_index,cost,theta_0,...,theta_{n-1}
inline void write_trace_csv(std::ostream &out, std::span<const TrainRecord> trace) {
    const std::size_t n = trace.empty() ? 0 : trace.front().theta.size();
    out << "eval_index,cost";
    for (std::size_t i = 0; i < n; ++i) {
        out << ",theta_" << i;
    }
    out << '\n';
    for (const auto &r : trace) {
        out << r.eval_index << ',' << fmt::format("{:.17g}", r.cost);
        for (double t : r.theta) {
            out << ',' << fmt::format("{:.17g}", t);
        }
        out << '\n';
    }
}

} // namespace qcl
