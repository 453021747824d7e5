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
 * @file noise.hpp
 * Stochastic error channels simulated as quantum trajectories.
 *
 * Three models are supported: shot noise only, Pauli insertion with readout
 * flips, and per-gate rates taken from device calibration tables plus a
 * two-qubit depolarizing term. Thermal relaxation is not modelled.
 *
 * Each shot owns two streams derived from (seed, shot): one for the
 * measurement draw and one for error events. With all rates zero no error
 * draws happen, so counts equal `sample_counts` for the same seed.
 *
 * Errors are tracked as a Pauli frame while every gate they meet is Clifford
 * (or commutes with them); the shot is then drawn from the ideal output
 * distribution and its bits are flipped by the frame's X part. Otherwise the
 * trajectory is re-simulated with the Pauli operators inserted.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "calibration.hpp"
#include "circuit.hpp"
#include "error.hpp"
#include "gates.hpp"
#include "rng.hpp"
#include "statevector.hpp"

namespace qcl {

struct PauliNoiseParams {
    double p1 = 0.0; ///< single-qubit gate error probability
    double p2 = 0.0; ///< two-qubit gate error probability
    double pr = 0.0; ///< readout bit-flip probability

    void validate() const {
        for (double p : {p1, p2, pr}) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw ConfigError("Pauli noise probabilities must lie in [0, 1]");
            }
        }
    }
};

/// Median rates of the bundled calibration snapshot.
inline constexpr PauliNoiseParams kEhningenMedianPauli{0.00024, 0.0075, 0.012};

/// What to do with a CNOT between physical qubits that share no coupling.
enum class UncoupledPairPolicy : std::uint8_t {
    Reject, ///< configuration error
    Median, ///< use the median CNOT error of the table
    Route,  ///< compose errors along the shortest coupling path (3 CNOTs per SWAP)
};

struct CalibratedNoise {
    std::shared_ptr<const CalibrationData> data;
    double depolarizing_scale = 1.0;
    /// Logical qubit i runs on physical qubit layout[i]; empty means identity.
    std::vector<int> layout;
    UncoupledPairPolicy uncoupled = UncoupledPairPolicy::Reject;

    [[nodiscard]] int physical(std::uint32_t q) const {
        return layout.empty() ? static_cast<int>(q) : layout.at(q);
    }
};

struct ShotOnly {};

class NoiseModel {
  public:
    enum class Kind : std::uint8_t { ShotOnly, Pauli, Calibrated };

    NoiseModel() = default;
    static NoiseModel shot_only() { return NoiseModel{}; }
    static NoiseModel pauli(PauliNoiseParams p) {
        p.validate();
        NoiseModel m;
        m.spec_ = p;
        return m;
    }
    static NoiseModel calibrated(CalibratedNoise c) {
        if (!c.data) {
            throw ConfigError("calibrated noise needs calibration data");
        }
        if (!(c.depolarizing_scale >= 0.0)) {
            throw ConfigError("depolarizing scale must be non-negative");
        }
        NoiseModel m;
        m.spec_ = std::move(c);
        return m;
    }

    [[nodiscard]] Kind kind() const noexcept { return static_cast<Kind>(spec_.index()); }
    [[nodiscard]] const PauliNoiseParams &pauli_params() const {
        return std::get<PauliNoiseParams>(spec_);
    }
    [[nodiscard]] const CalibratedNoise &calibrated_params() const {
        return std::get<CalibratedNoise>(spec_);
    }

  private:
    std::variant<ShotOnly, PauliNoiseParams, CalibratedNoise> spec_{};
};

inline std::string to_string(NoiseModel::Kind k) {
    switch (k) {
    case NoiseModel::Kind::ShotOnly:
        return "shot";
    case NoiseModel::Kind::Pauli:
        return "pauli";
    case NoiseModel::Kind::Calibrated:
        return "calibrated";
    }
    return "?";
}

/// Error probabilities attached to each gate of a bound circuit.
struct GateErrorRates {
    std::vector<double> gate;        ///< Pauli insertion probability after op i
    std::vector<double> depolarize;  ///< extra two-qubit depolarizing probability after op i
    std::vector<double> readout;     ///< flip probability per logical qubit
};

namespace detail {

inline double calibrated_cnot_rate(const CalibratedNoise &c, std::uint32_t control,
                                   std::uint32_t target) {
    const int a = c.physical(control);
    const int b = c.physical(target);
    if (auto r = c.data->cnot_error(a, b)) {
        return *r;
    }
    switch (c.uncoupled) {
    case UncoupledPairPolicy::Reject:
        break;
    case UncoupledPairPolicy::Median:
        return median_cnot_error(*c.data);
    case UncoupledPairPolicy::Route: {
        const auto path = c.data->coupling_path(a, b);
        if (path.size() < 2) {
            break;
        }
        double survive = 1.0;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            const double e = *c.data->cnot_error(path[i], path[i + 1]);
            survive *= i + 2 == path.size() ? 1.0 - e : std::pow(1.0 - e, 3);
        }
        return 1.0 - survive;
    }
    }
    throw ConfigError("no calibration entry for CNOT pair (" + std::to_string(a) + ", " +
                      std::to_string(b) + ")");
}

template <class Map> double lookup_qubit(const Map &m, int q, const char *table) {
    const auto it = m.find(q);
    if (it == m.end()) {
        throw ConfigError(std::string("qubit ") + std::to_string(q) + " missing from " + table);
    }
    return it->second;
}

} // namespace detail

inline GateErrorRates gate_error_rates(const NoiseModel &model, std::span<const GateOp> ops,
                                       std::size_t n_qubits) {
    GateErrorRates r{std::vector<double>(ops.size(), 0.0), std::vector<double>(ops.size(), 0.0),
                     std::vector<double>(n_qubits, 0.0)};
    switch (model.kind()) {
    case NoiseModel::Kind::ShotOnly:
        break;
    case NoiseModel::Kind::Pauli: {
        const auto &p = model.pauli_params();
        for (std::size_t i = 0; i < ops.size(); ++i) {
            r.gate[i] = ops[i].kind == GateKind::CNOT ? p.p2 : p.p1;
        }
        std::fill(r.readout.begin(), r.readout.end(), p.pr);
        break;
    }
    case NoiseModel::Kind::Calibrated: {
        const auto &c = model.calibrated_params();
        if (!c.layout.empty() && c.layout.size() < n_qubits) {
            throw ConfigError("calibrated layout shorter than the register");
        }
        for (std::size_t i = 0; i < ops.size(); ++i) {
            const auto &op = ops[i];
            if (op.kind == GateKind::CNOT) {
                const double rate = detail::calibrated_cnot_rate(c, op.control, op.target);
                r.gate[i] = rate;
                r.depolarize[i] = std::min(1.0, c.depolarizing_scale * rate);
            } else {
                r.gate[i] = detail::lookup_qubit(c.data->x_errors, c.physical(op.target),
                                                 "x_errors");
            }
        }
        for (std::uint32_t q = 0; q < n_qubits; ++q) {
            r.readout[q] = detail::lookup_qubit(c.data->readout_errors, c.physical(q),
                                                "readout_errors");
        }
        break;
    }
    }
    return r;
}

/// One inserted Pauli (possibly a two-qubit product) after gate `op_index`.
struct PauliEvent {
    std::size_t op_index;
    std::uint32_t q0;
    Pauli p0;
    std::uint32_t q1;
    Pauli p1;
};

/**
 * Pauli frame over up to 32 qubits as X/Z bit masks (signs dropped, since only
 * the X part matters for computational-basis sampling).
 */
class PauliFrame {
  public:
    void inject(std::uint32_t q, Pauli p) noexcept {
        const auto bit = std::uint32_t{1} << q;
        if (p == Pauli::X || p == Pauli::Y) {
            x_ ^= bit;
        }
        if (p == Pauli::Z || p == Pauli::Y) {
            z_ ^= bit;
        }
    }

    /// Conjugates the frame by a bound gate. Returns false if the result is not a Pauli.
    bool conjugate(const GateOp &op) noexcept {
        const auto bit = std::uint32_t{1} << op.target;
        if (op.kind == GateKind::CNOT) {
            const auto cbit = std::uint32_t{1} << op.control;
            if (x_ & cbit) {
                x_ ^= bit;
            }
            if (z_ & bit) {
                z_ ^= cbit;
            }
            return true;
        }
        const bool fx = (x_ & bit) != 0;
        const bool fz = (z_ & bit) != 0;
        if (!fx && !fz) {
            return true;
        }
        const bool commutes = (op.kind == GateKind::RX && fx && !fz) ||
                              (op.kind == GateKind::RY && fx && fz) ||
                              (op.kind == GateKind::RZ && !fx && fz);
        if (commutes) {
            return true;
        }
        const int k = quarter_turns(op.angle());
        if (k < 0) {
            return false;
        }
        if (k % 2 == 0) {
            return true; // half turns only change the sign
        }
        switch (op.kind) {
        case GateKind::RX: // Z <-> Y
            if (fz) {
                x_ ^= bit;
            }
            break;
        case GateKind::RY: // X <-> Z
            if (fx != fz) {
                x_ ^= bit;
                z_ ^= bit;
            }
            break;
        case GateKind::RZ: // X <-> Y
            if (fx) {
                z_ ^= bit;
            }
            break;
        default:
            break;
        }
        return true;
    }

    [[nodiscard]] std::uint32_t x_mask() const noexcept { return x_; }
    [[nodiscard]] std::uint32_t z_mask() const noexcept { return z_; }

  private:
    std::uint32_t x_ = 0;
    std::uint32_t z_ = 0;
};

namespace detail {

inline void draw_gate_errors(const GateErrorRates &rates, std::span<const GateOp> ops, Rng &rng,
                             std::vector<PauliEvent> &events) {
    for (std::size_t i = 0; i < ops.size(); ++i) {
        const auto &op = ops[i];
        for (double p : {rates.gate[i], rates.depolarize[i]}) {
            if (p <= 0.0 || rng.uniform() >= p) {
                continue;
            }
            if (op.kind == GateKind::CNOT) {
                const auto k = static_cast<std::uint8_t>(rng.below(15) + 1);
                events.push_back({i, op.control, static_cast<Pauli>(k >> 2), op.target,
                                  static_cast<Pauli>(k & 3U)});
            } else {
                const auto k = static_cast<std::uint8_t>(rng.below(3) + 1);
                events.push_back({i, op.target, static_cast<Pauli>(k), op.target, Pauli::I});
            }
        }
    }
}

/// X mask of the propagated frame, or nullopt if a non-Clifford gate blocks it.
inline std::optional<std::uint32_t> propagate_frame(std::span<const GateOp> ops,
                                                    std::span<const PauliEvent> events) {
    PauliFrame frame;
    std::size_t e = 0;
    for (std::size_t i = events.front().op_index; i < ops.size(); ++i) {
        if (i > events.front().op_index && !frame.conjugate(ops[i])) {
            return std::nullopt;
        }
        for (; e < events.size() && events[e].op_index == i; ++e) {
            frame.inject(events[e].q0, events[e].p0);
            frame.inject(events[e].q1, events[e].p1);
        }
    }
    return frame.x_mask();
}

inline Statevector replay_with_errors(std::size_t n_qubits, std::span<const GateOp> ops,
                                      std::span<const PauliEvent> events) {
    Statevector state(n_qubits);
    std::size_t e = 0;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        state.apply(ops[i]);
        for (; e < events.size() && events[e].op_index == i; ++e) {
            state.apply_pauli(events[e].q0, events[e].p0);
            state.apply_pauli(events[e].q1, events[e].p1);
        }
    }
    return state;
}

} // namespace detail

/// Stream id of the error draws for a given shot.
inline Rng error_stream(std::uint64_t seed, std::uint64_t shot) noexcept {
    return Rng(derive_seed(seed, {shot, 1}));
}

/**
 * Noisy sampler for one bound circuit. The ideal state and the error rates are
 * computed once; every call to `counts` replays fresh trajectories.
 */
class TrajectorySampler {
  public:
    TrajectorySampler(std::size_t n_qubits, std::span<const GateOp> ops, const NoiseModel &model)
        : n_(n_qubits), ops_(ops.begin(), ops.end()), rates_(gate_error_rates(model, ops, n_qubits)),
          sampler_(run_ops(n_qubits, ops)) {}

    [[nodiscard]] Counts counts(std::size_t shots, std::uint64_t seed) const {
        if (shots < 1) {
            throw StructuralError("shots must be >= 1");
        }
        Counts counts{n_, {}};
        std::vector<PauliEvent> events;
        for (std::size_t s = 0; s < shots; ++s) {
            auto meas = measurement_stream(seed, s);
            auto err = error_stream(seed, s);
            events.clear();
            detail::draw_gate_errors(rates_, ops_, err, events);

            const double u = meas.uniform();
            std::uint32_t outcome = 0;
            if (events.empty()) {
                outcome = sampler_.draw(u);
            } else if (auto mask = detail::propagate_frame(ops_, events)) {
                outcome = sampler_.draw(u) ^ *mask;
            } else {
                const auto noisy = detail::replay_with_errors(n_, ops_, events);
                outcome = BasisSampler(noisy).draw(u);
            }
            for (std::uint32_t q = 0; q < n_; ++q) {
                const double pr = rates_.readout[q];
                if (pr > 0.0 && err.uniform() < pr) {
                    outcome ^= std::uint32_t{1} << q;
                }
            }
            ++counts.by_index[outcome];
        }
        return counts;
    }

  private:
    std::size_t n_;
    std::vector<GateOp> ops_;
    GateErrorRates rates_;
    BasisSampler sampler_;
};

/// Noisy execution of already-bound ops; see `run_noisy`.
inline Counts run_noisy_ops(std::size_t n_qubits, std::span<const GateOp> ops,
                            const NoiseModel &model, std::size_t shots, std::uint64_t seed) {
    if (shots < 1) {
        throw StructuralError("shots must be >= 1");
    }
    return TrajectorySampler(n_qubits, ops, model).counts(shots, seed);
}

/**
 * Samples `shots` noisy trajectories of the bound circuit.
 * Throws ConfigError when calibrated noise meets a CNOT pair absent from the
 * tables (unless the model's uncoupled-pair policy says otherwise).
 */
inline Counts run_noisy(const Circuit &circuit, const Bindings &bindings, const NoiseModel &model,
                        std::size_t shots, std::uint64_t seed) {
    const auto ops = circuit.bind(bindings);
    return run_noisy_ops(circuit.n_qubits(), ops, model, shots, seed);
}

/// Mean absolute error between target values and model values.
inline double mae(std::span<const double> targets, std::span<const double> model_values) {
    if (targets.size() != model_values.size()) {
        throw StructuralError("mae: length mismatch");
    }
    if (targets.empty()) {
        throw StructuralError("mae: needs at least one point");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        acc += std::abs(targets[i] - model_values[i]);
    }
    return acc / static_cast<double>(targets.size());
}

} // namespace qcl
