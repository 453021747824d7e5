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

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "error.hpp"

namespace qcl {

using Complex = std::complex<double>;

enum class GateKind : std::uint8_t { RX, RY, RZ, CNOT };

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

constexpr std::string_view to_string(GateKind kind) noexcept {
    switch (kind) {
    case GateKind::RX:
        return "RX";
    case GateKind::RY:
        return "RY";
    case GateKind::RZ:
        return "RZ";
    case GateKind::CNOT:
        return "CNOT";
    }
    return "?";
}

constexpr bool is_rotation(GateKind kind) noexcept { return kind != GateKind::CNOT; }

/// Where a rotation angle comes from: a literal, an input slot or a trainable slot.
enum class ParamSource : std::uint8_t { Constant, X, Theta };

struct Param {
    ParamSource source = ParamSource::Constant;
    std::size_t index = 0;
    double value = 0.0;

    static constexpr Param constant(double v) noexcept { return {ParamSource::Constant, 0, v}; }
    static constexpr Param x_slot(std::size_t i) noexcept { return {ParamSource::X, i, 0.0}; }
    static constexpr Param theta_slot(std::size_t i) noexcept {
        return {ParamSource::Theta, i, 0.0};
    }
    [[nodiscard]] constexpr bool is_bound() const noexcept {
        return source == ParamSource::Constant;
    }
};

/**
 * One gate of a circuit. Rotations act on `target`; CNOT uses `control` too.
 * R_P(phi) = exp(-i phi P / 2), so RY(phi)|0> = cos(phi/2)|0> + sin(phi/2)|1>.
 */
struct GateOp {
    GateKind kind = GateKind::RY;
    std::uint32_t target = 0;
    std::uint32_t control = 0;
    Param param{};

    static constexpr GateOp rx(std::uint32_t q, Param p) noexcept {
        return {GateKind::RX, q, 0, p};
    }
    static constexpr GateOp ry(std::uint32_t q, Param p) noexcept {
        return {GateKind::RY, q, 0, p};
    }
    static constexpr GateOp rz(std::uint32_t q, Param p) noexcept {
        return {GateKind::RZ, q, 0, p};
    }
    static constexpr GateOp rx(std::uint32_t q, double angle) noexcept {
        return rx(q, Param::constant(angle));
    }
    static constexpr GateOp ry(std::uint32_t q, double angle) noexcept {
        return ry(q, Param::constant(angle));
    }
    static constexpr GateOp rz(std::uint32_t q, double angle) noexcept {
        return rz(q, Param::constant(angle));
    }
    static constexpr GateOp cnot(std::uint32_t control, std::uint32_t target) noexcept {
        return {GateKind::CNOT, target, control, Param{}};
    }

    [[nodiscard]] constexpr double angle() const noexcept { return param.value; }
    [[nodiscard]] constexpr bool acts_on(std::uint32_t q) const noexcept {
        return target == q || (kind == GateKind::CNOT && control == q);
    }
};

/// Number of quarter turns if `angle` is a multiple of pi/2 (within tol), else -1.
inline int quarter_turns(double angle, double tol = 1e-9) noexcept {
    const double k = angle / (std::numbers::pi / 2);
    const double r = std::nearbyint(k);
    if (std::abs(k - r) > tol) {
        return -1;
    }
    return static_cast<int>(((static_cast<long long>(r) % 4) + 4) % 4);
}

/// True when the bound gate maps Pauli operators to Pauli operators.
inline bool is_clifford(const GateOp &op) noexcept {
    return op.kind == GateKind::CNOT || quarter_turns(op.angle()) >= 0;
}

} // namespace qcl
