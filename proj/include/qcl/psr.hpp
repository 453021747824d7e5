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
 * @file psr.hpp
 * Derivatives of model functions with respect to x by the parameter shift
 * rule on the encoding gates.
 *
 * Every encoding gate k carries the same angle phi(x). With
 * D_k f = (f(phi_k + pi/2) - f(phi_k - pi/2)) / 2 the exact derivatives are
 *
 *     df/dphi    = sum_k D_k f                          (2N circuits)
 *     d2f/dphi2  = sum_{k != l} D_k D_l f + sum_k D_k^2 f
 *
 * D_k D_l (k != l) needs the four (+-, +-) double shifts. On the diagonal
 * D_k^2 f = (f(phi_k + pi) - 2 f + f(phi_k - pi)) / 4 and the +pi and -pi
 * circuits agree up to a global phase, so each diagonal term costs two
 * circuits: f(phi_k + pi) and the unshifted f. Total: 4N(N-1) + 2N = 4N^2 - 2N.
 * The chain rule then gives d/dx = phi' d/dphi and
 * d2/dx2 = phi'' d/dphi + phi'^2 d2/dphi2.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "rng.hpp"

namespace qcl {

/// Raw <Z_q> per observable for explicit encoding-slot angles. `stream` names
/// the circuit execution so sampled evaluators can give it its own RNG stream.
using ExpectationFn =
    std::function<std::vector<double>(std::span<const double> slot_angles, std::uint64_t stream)>;

struct ShiftTerm {
    std::vector<std::pair<std::size_t, double>> shifts; ///< (encoding slot, angle offset)
    double weight = 0.0;
};

struct ShiftPlan {
    std::vector<double> base_angles;
    std::vector<ShiftTerm> terms;
    int order = 1;
};

inline std::size_t evaluation_budget(std::size_t n_qubits, int order) {
    if (n_qubits < 1) {
        throw StructuralError("evaluation budget needs N >= 1");
    }
    switch (order) {
    case 1:
        return 2 * n_qubits;
    case 2:
        return 4 * n_qubits * n_qubits - 2 * n_qubits;
    default:
        throw UnsupportedError("only first and second derivatives are supported");
    }
}

/// Shift plan for d^order f / dphi^order with all N slots at angle phi.
inline ShiftPlan make_shift_plan(std::size_t n_slots, double phi, int order) {
    constexpr double half = std::numbers::pi / 2;
    ShiftPlan plan{std::vector<double>(n_slots, phi), {}, order};
    plan.terms.reserve(evaluation_budget(n_slots, order));
    if (order == 1) {
        for (std::size_t k = 0; k < n_slots; ++k) {
            plan.terms.push_back({{{k, +half}}, +0.5});
            plan.terms.push_back({{{k, -half}}, -0.5});
        }
        return plan;
    }
    for (std::size_t k = 0; k < n_slots; ++k) {
        for (std::size_t l = 0; l < n_slots; ++l) {
            if (k == l) {
                plan.terms.push_back({{{k, std::numbers::pi}}, +0.5});
                plan.terms.push_back({{}, -0.5});
                continue;
            }
            for (double sk : {+half, -half}) {
                for (double sl : {+half, -half}) {
                    plan.terms.push_back({{{k, sk}, {l, sl}}, sk * sl > 0 ? 0.25 : -0.25});
                }
            }
        }
    }
    return plan;
}

/// Weighted sum over the plan; one `fn` call per term, in plan order.
inline std::vector<double> execute_plan(const ShiftPlan &plan, const ExpectationFn &fn,
                                        std::uint64_t stream_base = 0) {
    std::vector<double> acc;
    std::vector<double> angles;
    for (std::size_t t = 0; t < plan.terms.size(); ++t) {
        const auto &term = plan.terms[t];
        angles = plan.base_angles;
        for (const auto &[slot, shift] : term.shifts) {
            angles[slot] += shift;
        }
        const auto values = fn(angles, derive_seed(stream_base, {static_cast<std::uint64_t>(plan.order), t}));
        if (acc.empty()) {
            acc.assign(values.size(), 0.0);
        }
        for (std::size_t o = 0; o < values.size(); ++o) {
            acc[o] += term.weight * values[o];
        }
    }
    return acc;
}

/// How circuits are executed when a derivative needs them.
struct Evaluator {
    enum class Kind : std::uint8_t { Exact, Sampled };
    Kind kind = Kind::Exact;
    std::size_t shots = 2000;
    NoiseModel noise{};
    std::uint64_t seed = 0;

    static Evaluator exact() { return {}; }
    static Evaluator sampled(std::size_t shots, NoiseModel noise, std::uint64_t seed) {
        return {Kind::Sampled, shots, std::move(noise), seed};
    }
};

/// Expectation function for a fixed parameter vector of `model`.
inline ExpectationFn make_expectation_fn(const QclModel &model, const Evaluator &ev) {
    if (ev.kind == Evaluator::Kind::Exact) {
        auto cache = std::make_shared<const ObservableCache>(model);
        return [cache](std::span<const double> angles, std::uint64_t) {
            return cache->expectations(angles);
        };
    }
    return [model, ev](std::span<const double> angles, std::uint64_t stream) {
        const Bindings b{std::vector<double>(angles.begin(), angles.end()),
                         std::vector<double>(model.theta().begin(), model.theta().end())};
        const auto counts =
            run_noisy(model.circuit(), b, ev.noise, ev.shots, derive_seed(ev.seed, {stream}));
        std::vector<double> out;
        for (auto q : model.observables()) {
            out.push_back(counts.expect_z(q));
        }
        return out;
    };
}

/// Raw d^order <Z_q> / dphi^order per observable (no post-processing, no chain rule).
inline std::vector<double> phi_derivative(std::size_t n_qubits, double phi, int order,
                                          const ExpectationFn &fn, std::uint64_t stream_base = 0) {
    evaluation_budget(n_qubits, order);
    return execute_plan(make_shift_plan(n_qubits, phi, order), fn, stream_base);
}

/**
 * d^order/dx^order of post_q * <Z_q>(x) using an existing expectation function.
 * Throws DomainError for |x| >= 1 under arcsin encoding.
 */
inline std::vector<double> derivative_with(const QclModel &model, double x, int order,
                                           const ExpectationFn &fn, std::uint64_t stream_base = 0) {
    if (order != 1 && order != 2) {
        throw UnsupportedError("only first and second derivatives are supported");
    }
    if (model.encoding() == Encoding::Arcsin && !(std::abs(x) < 1.0)) {
        throw DomainError("arcsin-encoded derivatives need |x| < 1, got x = " +
                          std::to_string(x));
    }
    const auto inner = inner_function(model.encoding(), x);
    const auto n = model.n_qubits();
    std::vector<double> out;
    if (order == 1) {
        out = phi_derivative(n, inner.value, 1, fn, stream_base);
        for (auto &v : out) {
            v *= inner.d1;
        }
    } else {
        out = phi_derivative(n, inner.value, 2, fn, stream_base);
        for (auto &v : out) {
            v *= inner.d1 * inner.d1;
        }
        if (inner.d2 != 0.0) {
            const auto first = phi_derivative(n, inner.value, 1, fn, stream_base);
            for (std::size_t o = 0; o < out.size(); ++o) {
                out[o] += inner.d2 * first[o];
            }
        }
    }
    for (std::size_t o = 0; o < out.size(); ++o) {
        out[o] *= model.post()[o];
    }
    return out;
}

inline std::vector<double> derivative(const QclModel &model, double x, int order,
                                      const Evaluator &evaluator = Evaluator::exact()) {
    return derivative_with(model, x, order, make_expectation_fn(model, evaluator));
}

} // namespace qcl
