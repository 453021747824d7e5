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
 * @file statevector.hpp
 * Dense N-qubit statevector with the RX/RY/RZ/CNOT gate set.
 *
 * Qubit q is bit q of the basis index (qubit 0 is the least-significant bit).
 * Bitstrings are printed with qubit N-1 leftmost.
 */
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "gates.hpp"
#include "rng.hpp"

namespace qcl {

inline constexpr std::size_t kMaxQubits = 24;

class Statevector {
  public:
    /// |0...0> on n qubits.
    explicit Statevector(std::size_t n_qubits) : n_qubits_(n_qubits) {
        if (n_qubits < 1 || n_qubits > kMaxQubits) {
            throw StructuralError("statevector needs 1 <= N <= 24 qubits, got " +
                                  std::to_string(n_qubits));
        }
        amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
        amps_[0] = 1.0;
    }

    static Statevector from_amplitudes(std::vector<Complex> amps) {
        const auto dim = amps.size();
        if (dim < 2 || (dim & (dim - 1)) != 0) {
            throw StructuralError("amplitude count must be a power of two >= 2");
        }
        Statevector s(static_cast<std::size_t>(std::countr_zero(dim)));
        s.amps_ = std::move(amps);
        return s;
    }

    [[nodiscard]] std::size_t n_qubits() const noexcept { return n_qubits_; }
    [[nodiscard]] std::size_t dim() const noexcept { return amps_.size(); }
    [[nodiscard]] std::span<const Complex> amplitudes() const noexcept { return amps_; }
    [[nodiscard]] const Complex &operator[](std::size_t i) const { return amps_[i]; }

    [[nodiscard]] double norm_squared() const noexcept {
        double acc = 0.0;
        for (const auto &a : amps_) {
            acc += std::norm(a);
        }
        return acc;
    }

    /// Applies a gate in place. The op's angle must be bound.
    void apply(const GateOp &op) {
        check_op(op);
        switch (op.kind) {
        case GateKind::RX: {
            const double c = std::cos(op.angle() / 2);
            const double s = std::sin(op.angle() / 2);
            apply_1q(op.target, {c, 0.0}, {0.0, -s}, {0.0, -s}, {c, 0.0});
            break;
        }
        case GateKind::RY: {
            const double c = std::cos(op.angle() / 2);
            const double s = std::sin(op.angle() / 2);
            apply_1q(op.target, {c, 0.0}, {-s, 0.0}, {s, 0.0}, {c, 0.0});
            break;
        }
        case GateKind::RZ: {
            const Complex e0 = std::polar(1.0, -op.angle() / 2);
            apply_diag(op.target, e0, std::conj(e0));
            break;
        }
        case GateKind::CNOT:
            apply_cnot(op.control, op.target);
            break;
        }
    }

    void apply_pauli(std::uint32_t q, Pauli p) {
        check_qubit(q);
        switch (p) {
        case Pauli::I:
            break;
        case Pauli::X:
            apply_1q(q, {0, 0}, {1, 0}, {1, 0}, {0, 0});
            break;
        case Pauli::Y:
            apply_1q(q, {0, 0}, {0, -1}, {0, 1}, {0, 0});
            break;
        case Pauli::Z:
            apply_diag(q, {1, 0}, {-1, 0});
            break;
        }
    }

    /// Exact <Z_q>.
    [[nodiscard]] double expect_z(std::uint32_t q) const {
        check_qubit(q);
        const std::size_t mask = std::size_t{1} << q;
        double acc = 0.0;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            acc += (i & mask) ? -std::norm(amps_[i]) : std::norm(amps_[i]);
        }
        return acc;
    }

    [[nodiscard]] std::vector<double> probabilities() const {
        std::vector<double> p(amps_.size());
        std::transform(amps_.begin(), amps_.end(), p.begin(),
                       [](const Complex &a) { return std::norm(a); });
        return p;
    }

  private:
    void check_qubit(std::uint32_t q) const {
        if (q >= n_qubits_) {
            throw StructuralError("qubit index " + std::to_string(q) + " out of range for " +
                                  std::to_string(n_qubits_) + " qubits");
        }
    }

    void check_op(const GateOp &op) const {
        check_qubit(op.target);
        if (op.kind == GateKind::CNOT) {
            check_qubit(op.control);
            if (op.control == op.target) {
                throw StructuralError("CNOT control and target must differ");
            }
        } else if (!op.param.is_bound()) {
            throw BindingError(std::string(to_string(op.kind)) +
                               " applied with an unbound parameter slot");
        }
    }

    void apply_1q(std::uint32_t q, Complex m00, Complex m01, Complex m10, Complex m11) {
        const std::size_t stride = std::size_t{1} << q;
        const std::size_t dim = amps_.size();
        for (std::size_t base = 0; base < dim; base += 2 * stride) {
            for (std::size_t k = base; k < base + stride; ++k) {
                const Complex a0 = amps_[k];
                const Complex a1 = amps_[k + stride];
                amps_[k] = m00 * a0 + m01 * a1;
                amps_[k + stride] = m10 * a0 + m11 * a1;
            }
        }
    }

    void apply_diag(std::uint32_t q, Complex d0, Complex d1) {
        const std::size_t mask = std::size_t{1} << q;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            amps_[i] *= (i & mask) ? d1 : d0;
        }
    }

    void apply_cnot(std::uint32_t control, std::uint32_t target) {
        const std::size_t cmask = std::size_t{1} << control;
        const std::size_t tmask = std::size_t{1} << target;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            if ((i & cmask) && !(i & tmask)) {
                std::swap(amps_[i], amps_[i | tmask]);
            }
        }
    }

    std::size_t n_qubits_;
    std::vector<Complex> amps_;
};

/// Value-semantics gate application.
inline Statevector apply_gate(Statevector state, const GateOp &op) {
    state.apply(op);
    return state;
}

inline double expect_z(const Statevector &state, std::uint32_t qubit) {
    return state.expect_z(qubit);
}

/**
 * Max abs amplitude difference after removing global phase: both states are
 * rotated so that the amplitude at a's largest-magnitude index is real positive.
 */
inline double phase_aligned_distance(const Statevector &a, const Statevector &b) {
    if (a.dim() != b.dim()) {
        throw StructuralError("state dimensions differ");
    }
    const auto aa = a.amplitudes();
    const auto bb = b.amplitudes();
    const auto pivot = static_cast<std::size_t>(std::distance(
        aa.begin(), std::max_element(aa.begin(), aa.end(), [](const Complex &x, const Complex &y) {
            return std::norm(x) < std::norm(y);
        })));
    const Complex pa = std::abs(aa[pivot]) > 0 ? std::conj(aa[pivot]) / std::abs(aa[pivot]) : 1.0;
    const Complex pb = std::abs(bb[pivot]) > 0 ? std::conj(bb[pivot]) / std::abs(bb[pivot]) : 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < aa.size(); ++i) {
        worst = std::max(worst, std::abs(aa[i] * pa - bb[i] * pb));
    }
    return worst;
}

/// Measurement histogram keyed by basis index.
struct Counts {
    std::size_t n_qubits = 0;
    std::map<std::uint32_t, std::size_t> by_index;

    [[nodiscard]] std::size_t total() const noexcept {
        std::size_t t = 0;
        for (const auto &[k, v] : by_index) {
            t += v;
        }
        return t;
    }

    [[nodiscard]] std::size_t at(std::uint32_t index) const {
        const auto it = by_index.find(index);
        return it == by_index.end() ? 0 : it->second;
    }

    /// (n0 - n1) / shots for bit q.
    [[nodiscard]] double expect_z(std::uint32_t q) const {
        if (q >= n_qubits) {
            throw StructuralError("qubit index out of range for counts");
        }
        long long diff = 0;
        for (const auto &[k, v] : by_index) {
            diff += ((k >> q) & 1U) ? -static_cast<long long>(v) : static_cast<long long>(v);
        }
        const auto shots = total();
        return shots == 0 ? 0.0 : static_cast<double>(diff) / static_cast<double>(shots);
    }

    [[nodiscard]] std::map<std::string, std::size_t> bitstrings() const {
        std::map<std::string, std::size_t> out;
        for (const auto &[k, v] : by_index) {
            out[to_bitstring(k, n_qubits)] = v;
        }
        return out;
    }

    static std::string to_bitstring(std::uint32_t index, std::size_t n) {
        std::string s(n, '0');
        for (std::size_t q = 0; q < n; ++q) {
            if ((index >> q) & 1U) {
                s[n - 1 - q] = '1';
            }
        }
        return s;
    }

    friend bool operator==(const Counts &, const Counts &) = default;
};

/// Inverse-CDF sampler over basis states.
class BasisSampler {
  public:
    explicit BasisSampler(std::span<const double> probabilities)
        : cdf_(probabilities.begin(), probabilities.end()) {
        std::partial_sum(cdf_.begin(), cdf_.end(), cdf_.begin());
    }
    explicit BasisSampler(const Statevector &state) : BasisSampler(state.probabilities()) {}

    [[nodiscard]] std::uint32_t draw(double u) const noexcept {
        const double target = u * cdf_.back();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
        const auto idx = static_cast<std::size_t>(std::distance(cdf_.begin(), it));
        return static_cast<std::uint32_t>(std::min(idx, cdf_.size() - 1));
    }

  private:
    std::vector<double> cdf_;
};

/// Stream id of the measurement draw for a given shot.
inline Rng measurement_stream(std::uint64_t seed, std::uint64_t shot) noexcept {
    return Rng(derive_seed(seed, {shot, 0}));
}

/**
 * Multinomial sample of `shots` measurements. Shot i draws from its own
 * stream derived from (seed, i), so the result is independent of batching.
 */
inline Counts sample_counts(const Statevector &state, std::size_t shots, std::uint64_t seed) {
    if (shots < 1) {
        throw StructuralError("shots must be >= 1");
    }
    const BasisSampler sampler(state);
    Counts counts{state.n_qubits(), {}};
    for (std::size_t s = 0; s < shots; ++s) {
        auto rng = measurement_stream(seed, s);
        ++counts.by_index[sampler.draw(rng.uniform())];
    }
    return counts;
}

} // namespace qcl
