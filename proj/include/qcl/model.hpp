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
 * @file model.hpp
 * Quantum circuit learning models: RY(phi(x)) encoding on every qubit followed
 * by D blocks of [CNOT entangler, RX RY RZ per qubit], read out as
 * post_q * <Z_q> for each observable qubit q.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "circuit.hpp"
#include "error.hpp"
#include "noise.hpp"
#include "rng.hpp"
#include "statevector.hpp"

namespace qcl {

enum class Encoding : std::uint8_t { Identity, Arcsin };
enum class Entanglement : std::uint8_t { Circular, Linear };
enum class ParamTying : std::uint8_t { Shared, Fresh };

/// phi(x) and its first two derivatives.
struct InnerFunction {
    double value;
    double d1;
    double d2;
};

inline void check_domain(Encoding enc, double x) {
    if (enc == Encoding::Arcsin && !(std::abs(x) <= 1.0)) {
        throw DomainError("arcsin encoding needs |x| <= 1, got x = " + std::to_string(x));
    }
}

inline InnerFunction inner_function(Encoding enc, double x) {
    if (enc == Encoding::Identity) {
        return {x, 1.0, 0.0};
    }
    check_domain(enc, x);
    const double s = 1.0 - x * x;
    return {std::asin(x), 1.0 / std::sqrt(s), x / (s * std::sqrt(s))};
}

struct Ansatz {
    std::size_t n_qubits = 3;
    std::size_t depth = 3;
    Entanglement entanglement = Entanglement::Circular;
    ParamTying tying = ParamTying::Shared;

    [[nodiscard]] std::size_t n_theta() const noexcept {
        return tying == ParamTying::Shared ? 3 * n_qubits : 3 * n_qubits * depth;
    }

    void validate() const {
        if (n_qubits < 1 || n_qubits > kMaxQubits) {
            throw StructuralError("ansatz needs 1 <= N <= 24 qubits");
        }
        if (depth < 1) {
            throw StructuralError("ansatz depth must be >= 1");
        }
    }

    /// CNOT pairs of one entangling layer: chain i -> i+1, then the wrap N-1 -> 0.
    [[nodiscard]] std::vector<std::pair<std::uint32_t, std::uint32_t>> entangler() const {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
        const auto n = static_cast<std::uint32_t>(n_qubits);
        for (std::uint32_t q = 0; q + 1 < n; ++q) {
            pairs.emplace_back(q, q + 1);
        }
        // A ring of two qubits has a single edge.
        if (entanglement == Entanglement::Circular && n >= 3) {
            pairs.emplace_back(n - 1, 0);
        }
        return pairs;
    }
};

/// Encoding-first circuit: ops [0, N) are RY on x-slot q; the rest is the variational part.
inline Circuit build_ansatz_circuit(const Ansatz &a) {
    a.validate();
    const auto n = static_cast<std::uint32_t>(a.n_qubits);
    Circuit c(a.n_qubits, a.n_qubits, a.n_theta());
    for (std::uint32_t q = 0; q < n; ++q) {
        c.push(GateOp::ry(q, Param::x_slot(q)));
    }
    const auto pairs = a.entangler();
    for (std::size_t d = 0; d < a.depth; ++d) {
        for (const auto &[ctrl, tgt] : pairs) {
            c.push(GateOp::cnot(ctrl, tgt));
        }
        const std::size_t offset = a.tying == ParamTying::Fresh ? 3 * a.n_qubits * d : 0;
        for (std::uint32_t q = 0; q < n; ++q) {
            c.push(GateOp::rx(q, Param::theta_slot(offset + 3 * q)));
            c.push(GateOp::ry(q, Param::theta_slot(offset + 3 * q + 1)));
            c.push(GateOp::rz(q, Param::theta_slot(offset + 3 * q + 2)));
        }
    }
    return c;
}

/// The parts of a model that do not change during training.
struct ModelStructure {
    Encoding encoding = Encoding::Arcsin;
    Ansatz ansatz{};
    std::vector<std::uint32_t> observables{0};
    Circuit circuit{1};
};

/**
 * Immutable QCL model. Parameters are replaced with `with_parameters`, which
 * shares the circuit structure.
 */
class QclModel {
  public:
    QclModel(Encoding encoding, Ansatz ansatz, std::vector<std::uint32_t> observables,
             std::vector<double> theta, std::vector<double> post)
        : structure_(make_structure(encoding, ansatz, std::move(observables))),
          theta_(std::move(theta)), post_(std::move(post)) {
        check_parameters();
    }

    /// Model with theta = 0 and post = 1 on every observable.
    static QclModel zeros(Encoding encoding, Ansatz ansatz,
                          std::vector<std::uint32_t> observables = {0}) {
        const auto n_obs = observables.size();
        return QclModel(encoding, ansatz, std::move(observables),
                        std::vector<double>(ansatz.n_theta(), 0.0),
                        std::vector<double>(n_obs, 1.0));
    }

    [[nodiscard]] QclModel with_parameters(std::vector<double> theta,
                                           std::vector<double> post) const {
        QclModel m(*this);
        m.theta_ = std::move(theta);
        m.post_ = std::move(post);
        m.check_parameters();
        return m;
    }

    [[nodiscard]] Encoding encoding() const noexcept { return structure_->encoding; }
    [[nodiscard]] const Ansatz &ansatz() const noexcept { return structure_->ansatz; }
    [[nodiscard]] std::size_t n_qubits() const noexcept { return structure_->ansatz.n_qubits; }
    [[nodiscard]] std::span<const std::uint32_t> observables() const noexcept {
        return structure_->observables;
    }
    [[nodiscard]] std::span<const double> theta() const noexcept { return theta_; }
    [[nodiscard]] std::span<const double> post() const noexcept { return post_; }
    [[nodiscard]] const Circuit &circuit() const noexcept { return structure_->circuit; }
    [[nodiscard]] const std::shared_ptr<const ModelStructure> &structure() const noexcept {
        return structure_;
    }

    /// Slot bindings with every encoding gate at angle phi.
    [[nodiscard]] Bindings bindings_for_angle(double phi) const {
        return {std::vector<double>(n_qubits(), phi), theta_};
    }

  private:
    static std::shared_ptr<const ModelStructure>
    make_structure(Encoding encoding, const Ansatz &ansatz,
                   std::vector<std::uint32_t> observables) {
        ansatz.validate();
        if (observables.empty()) {
            throw StructuralError("model needs at least one observable");
        }
        for (std::size_t i = 0; i < observables.size(); ++i) {
            if (observables[i] >= ansatz.n_qubits) {
                throw StructuralError("observable qubit out of range");
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (observables[i] == observables[j]) {
                    throw StructuralError("observable qubits must be distinct");
                }
            }
        }
        auto s = std::make_shared<ModelStructure>();
        s->encoding = encoding;
        s->ansatz = ansatz;
        s->observables = std::move(observables);
        s->circuit = build_ansatz_circuit(ansatz);
        return s;
    }

    void check_parameters() const {
        if (theta_.size() != structure_->ansatz.n_theta()) {
            throw StructuralError("theta has " + std::to_string(theta_.size()) +
                                  " entries, ansatz needs " +
                                  std::to_string(structure_->ansatz.n_theta()));
        }
        if (post_.size() != structure_->observables.size()) {
            throw StructuralError("need one post-processing scalar per observable");
        }
    }

    std::shared_ptr<const ModelStructure> structure_;
    std::vector<double> theta_;
    std::vector<double> post_;
};

inline Circuit build_circuit(const QclModel &model) { return model.circuit(); }

/// I.i.d. uniform angles on [0, 2 pi).
inline std::vector<double> random_angles(std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x7e7a}));
    std::vector<double> v(n);
    for (auto &a : v) {
        a = 2 * std::numbers::pi * rng.uniform();
    }
    return v;
}

/// Raw <Z_q> for every observable with explicit per-slot encoding angles.
inline std::vector<double> expectations_at_angles(const QclModel &model,
                                                  std::span<const double> slot_angles) {
    Bindings b{std::vector<double>(slot_angles.begin(), slot_angles.end()),
               std::vector<double>(model.theta().begin(), model.theta().end())};
    const auto state = run(model.circuit(), b);
    std::vector<double> out;
    out.reserve(model.observables().size());
    for (auto q : model.observables()) {
        out.push_back(state.expect_z(q));
    }
    return out;
}

/// post_q * <Z_q>(x) by exact statevector simulation.
inline std::vector<double> eval_exact(const QclModel &model, double x) {
    check_domain(model.encoding(), x);
    const double phi = inner_function(model.encoding(), x).value;
    auto values = expectations_at_angles(model, std::vector<double>(model.n_qubits(), phi));
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] *= model.post()[i];
    }
    return values;
}

/// post_q * (n0 - n1) / shots from (noisy) sampled counts.
inline std::vector<double> eval_sampled(const QclModel &model, double x, std::size_t shots,
                                        const NoiseModel &noise, std::uint64_t seed) {
    check_domain(model.encoding(), x);
    const double phi = inner_function(model.encoding(), x).value;
    const auto counts = run_noisy(model.circuit(), model.bindings_for_angle(phi), noise, shots, seed);
    std::vector<double> out;
    out.reserve(model.observables().size());
    for (std::size_t i = 0; i < model.observables().size(); ++i) {
        out.push_back(model.post()[i] * counts.expect_z(model.observables()[i]));
    }
    return out;
}

/**
 * Heisenberg-picture cache for one parameter vector: M_q = V^dag Z_q V for the
 * variational unitary V. Since the encoding layer prepares the real product
 * state |a> = (x)_k (cos(phi_k/2), sin(phi_k/2)), <Z_q> = <a| Re(M_q) |a>.
 * Repeated evaluations at many x (and shifted angles) then cost O(4^N) each
 * instead of a full circuit simulation.
 */
class ObservableCache {
  public:
    explicit ObservableCache(const QclModel &model)
        : n_(model.n_qubits()), dim_(std::size_t{1} << model.n_qubits()) {
        const Bindings b{std::vector<double>(n_, 0.0),
                         std::vector<double>(model.theta().begin(), model.theta().end())};
        const auto ops = model.circuit().bind(b);
        const std::span<const GateOp> variational(ops.begin() + static_cast<std::ptrdiff_t>(n_),
                                                  ops.end());

        Eigen::MatrixXcd v(dim_, dim_);
        for (std::size_t col = 0; col < dim_; ++col) {
            std::vector<Complex> amps(dim_, Complex{0.0, 0.0});
            amps[col] = 1.0;
            auto state = Statevector::from_amplitudes(std::move(amps));
            for (const auto &op : variational) {
                state.apply(op);
            }
            for (std::size_t row = 0; row < dim_; ++row) {
                v(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = state[row];
            }
        }
        for (auto q : model.observables()) {
            Eigen::VectorXd z(dim_);
            for (std::size_t i = 0; i < dim_; ++i) {
                z(static_cast<Eigen::Index>(i)) = ((i >> q) & 1U) ? -1.0 : 1.0;
            }
            const Eigen::MatrixXcd m = v.adjoint() * z.asDiagonal() * v;
            observables_.push_back(m.real());
        }
    }

    /// Raw <Z_q> per observable with per-slot encoding angles.
    [[nodiscard]] std::vector<double> expectations(std::span<const double> slot_angles) const {
        Eigen::VectorXd a = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim_));
        for (std::size_t k = 0; k < n_; ++k) {
            const double c = std::cos(slot_angles[k] / 2);
            const double s = std::sin(slot_angles[k] / 2);
            for (std::size_t i = 0; i < dim_; ++i) {
                a(static_cast<Eigen::Index>(i)) *= ((i >> k) & 1U) ? s : c;
            }
        }
        std::vector<double> out;
        out.reserve(observables_.size());
        for (const auto &m : observables_) {
            out.push_back(a.dot(m * a));
        }
        return out;
    }

    [[nodiscard]] std::vector<double> expectations_at(double phi) const {
        return expectations(std::vector<double>(n_, phi));
    }

  private:
    std::size_t n_;
    std::size_t dim_;
    std::vector<Eigen::MatrixXd> observables_;
};

enum class SpectralMode : std::uint8_t { Trig, Poly };

struct SpectralFit {
    std::vector<std::string> basis;
    /// coefficients[o][j] for observable o and basis function j
    std::vector<std::vector<double>> coefficients;
    double residual = 0.0;
};

/**
 * Least-squares fit of the exact model outputs on a dense grid (8N+1 points)
 * against the closed-form function class: Trig uses {1, sin nx, cos nx} on
 * [-pi, pi]; Poly uses {x^k}_{k<=N} and {sqrt(1-x^2) x^k}_{k<N} on [-1, 1].
 * The residual is the largest absolute misfit over grid and observables.
 */
inline SpectralFit spectral_fit(const QclModel &model, SpectralMode mode) {
    const std::size_t n = model.n_qubits();
    if (mode == SpectralMode::Trig && model.encoding() != Encoding::Identity) {
        throw ConfigError("trigonometric spectral check needs identity encoding");
    }
    if (mode == SpectralMode::Poly && model.encoding() != Encoding::Arcsin) {
        throw ConfigError("polynomial spectral check needs arcsin encoding");
    }
    const std::size_t points = 8 * n + 1;
    const double lo = mode == SpectralMode::Trig ? -std::numbers::pi : -1.0;
    const double hi = -lo;

    SpectralFit fit;
    fit.basis.emplace_back("1");
    if (mode == SpectralMode::Trig) {
        for (std::size_t k = 1; k <= n; ++k) {
            fit.basis.push_back("sin(" + std::to_string(k) + "x)");
            fit.basis.push_back("cos(" + std::to_string(k) + "x)");
        }
    } else {
        for (std::size_t k = 1; k <= n; ++k) {
            fit.basis.push_back("x^" + std::to_string(k));
        }
        for (std::size_t k = 0; k < n; ++k) {
            fit.basis.push_back("sqrt(1-x^2)x^" + std::to_string(k));
        }
    }

    const auto cols = static_cast<Eigen::Index>(fit.basis.size());
    Eigen::MatrixXd a(static_cast<Eigen::Index>(points), cols);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(points),
                      static_cast<Eigen::Index>(model.observables().size()));
    for (std::size_t i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::Index c = 0;
        a(r, c++) = 1.0;
        if (mode == SpectralMode::Trig) {
            for (std::size_t k = 1; k <= n; ++k) {
                a(r, c++) = std::sin(static_cast<double>(k) * x);
                a(r, c++) = std::cos(static_cast<double>(k) * x);
            }
        } else {
            const double root = std::sqrt(std::max(0.0, 1.0 - x * x));
            for (std::size_t k = 1; k <= n; ++k) {
                a(r, c++) = std::pow(x, static_cast<double>(k));
            }
            for (std::size_t k = 0; k < n; ++k) {
                a(r, c++) = root * std::pow(x, static_cast<double>(k));
            }
        }
        const auto v = eval_exact(model, x);
        for (std::size_t o = 0; o < v.size(); ++o) {
            y(r, static_cast<Eigen::Index>(o)) = v[o];
        }
    }
    const Eigen::MatrixXd coef = a.colPivHouseholderQr().solve(y);
    fit.residual = (a * coef - y).cwiseAbs().maxCoeff();
    for (Eigen::Index o = 0; o < coef.cols(); ++o) {
        fit.coefficients.emplace_back(coef.col(o).data(), coef.col(o).data() + coef.rows());
    }
    return fit;
}

inline double spectral_check(const QclModel &model, SpectralMode mode) {
    return spectral_fit(model, mode).residual;
}

} // namespace qcl
