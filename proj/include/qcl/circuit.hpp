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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "gates.hpp"
#include "statevector.hpp"

namespace qcl {

/// Values for the symbolic slots of a circuit.
struct Bindings {
    std::vector<double> x;
    std::vector<double> theta;
};

/**
 * Ordered gate list over a fixed register, with a slot table of `n_x_slots`
 * input angles and `n_theta_slots` trainable angles.
 */
class Circuit {
  public:
    Circuit(std::size_t n_qubits, std::size_t n_x_slots = 0, std::size_t n_theta_slots = 0)
        : n_qubits_(n_qubits), n_x_slots_(n_x_slots), n_theta_slots_(n_theta_slots) {
        if (n_qubits < 1 || n_qubits > kMaxQubits) {
            throw StructuralError("circuit needs 1 <= N <= 24 qubits");
        }
    }

    Circuit &push(const GateOp &op) {
        if (op.target >= n_qubits_ || (op.kind == GateKind::CNOT && op.control >= n_qubits_)) {
            throw StructuralError("gate " + std::string(to_string(op.kind)) +
                                  " references a qubit outside the register");
        }
        if (op.kind == GateKind::CNOT && op.control == op.target) {
            throw StructuralError("CNOT control and target must differ");
        }
        if (is_rotation(op.kind)) {
            const auto &p = op.param;
            if ((p.source == ParamSource::X && p.index >= n_x_slots_) ||
                (p.source == ParamSource::Theta && p.index >= n_theta_slots_)) {
                throw StructuralError("gate references a slot missing from the slot table");
            }
        }
        ops_.push_back(op);
        return *this;
    }

    [[nodiscard]] std::size_t n_qubits() const noexcept { return n_qubits_; }
    [[nodiscard]] std::size_t n_x_slots() const noexcept { return n_x_slots_; }
    [[nodiscard]] std::size_t n_theta_slots() const noexcept { return n_theta_slots_; }
    [[nodiscard]] std::span<const GateOp> ops() const noexcept { return ops_; }
    [[nodiscard]] std::size_t size() const noexcept { return ops_.size(); }

    [[nodiscard]] std::size_t count(GateKind kind) const noexcept {
        std::size_t n = 0;
        for (const auto &op : ops_) {
            n += op.kind == kind ? 1 : 0;
        }
        return n;
    }

    /// Resolves every slot to a constant.
    [[nodiscard]] std::vector<GateOp> bind(const Bindings &b) const {
        if (b.x.size() < n_x_slots_ || b.theta.size() < n_theta_slots_) {
            throw BindingError("unbound slot: circuit needs " + std::to_string(n_x_slots_) +
                               " x-slots and " + std::to_string(n_theta_slots_) +
                               " theta-slots, got " + std::to_string(b.x.size()) + " and " +
                               std::to_string(b.theta.size()));
        }
        std::vector<GateOp> out(ops_.begin(), ops_.end());
        for (auto &op : out) {
            if (!is_rotation(op.kind)) {
                continue;
            }
            switch (op.param.source) {
            case ParamSource::Constant:
                break;
            case ParamSource::X:
                op.param = Param::constant(b.x[op.param.index]);
                break;
            case ParamSource::Theta:
                op.param = Param::constant(b.theta[op.param.index]);
                break;
            }
        }
        return out;
    }

  private:
    std::size_t n_qubits_;
    std::size_t n_x_slots_;
    std::size_t n_theta_slots_;
    std::vector<GateOp> ops_;
};

inline Statevector run_ops(std::size_t n_qubits, std::span<const GateOp> ops) {
    Statevector state(n_qubits);
    for (const auto &op : ops) {
        state.apply(op);
    }
    return state;
}

/// Applies the bound circuit to |0...0>.
inline Statevector run(const Circuit &circuit, const Bindings &bindings = {}) {
    const auto ops = circuit.bind(bindings);
    return run_ops(circuit.n_qubits(), ops);
}

} // namespace qcl
