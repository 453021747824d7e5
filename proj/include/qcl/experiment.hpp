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
 * @file experiment.hpp
 * Named experiment recipes driven by key/value spec files, with CSV outputs
 * and a manifest of content hashes.
 *
 * Spec files hold one `key = value` pair per line; `#` starts a comment.
 * Every recipe declares its keys and their defaults, and unknown keys are
 * rejected. Lists are comma-separated.
 */
#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "calibration.hpp"
#include "ehningen_calibration.hpp"
#include "error.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "optimize.hpp"
#include "parallel.hpp"
#include "problems.hpp"
#include "psr.hpp"
#include "stats.hpp"

#ifndef QCL_VERSION
#define QCL_VERSION "0.0.0"
#endif

namespace qcl {

inline constexpr std::string_view kToolkitVersion = QCL_VERSION;

enum class Recipe : std::uint8_t {
    ShotsScan,
    QubitScan,
    EntanglementScan,
    OptimizerCompare,
    Learn,
    Derive,
    SolveOde,
    SolveCoupled,
    MultiOutput,
};

inline constexpr std::array<std::pair<Recipe, std::string_view>, 9> kRecipeNames{{
    {Recipe::ShotsScan, "shots-scan"},
    {Recipe::QubitScan, "qubit-scan"},
    {Recipe::EntanglementScan, "entanglement-scan"},
    {Recipe::OptimizerCompare, "optimizer-compare"},
    {Recipe::Learn, "learn"},
    {Recipe::Derive, "derive"},
    {Recipe::SolveOde, "solve-ode"},
    {Recipe::SolveCoupled, "solve-coupled"},
    {Recipe::MultiOutput, "multi-output"},
}};

inline std::string to_string(Recipe r) {
    for (const auto &[rec, name] : kRecipeNames) {
        if (rec == r) {
            return std::string(name);
        }
    }
    return "?";
}

inline Recipe parse_recipe(std::string_view name) {
    for (const auto &[rec, n] : kRecipeNames) {
        if (n == name) {
            return rec;
        }
    }
    throw ValidationError("unknown recipe '" + std::string(name) + "'");
}

namespace spec_detail {

enum class KeyType : std::uint8_t {
    Count,       ///< integer >= 1
    Real,        ///< finite real
    Positive,    ///< real > 0
    NonNegative, ///< real >= 0
    Probability, ///< real in [0, 1]
    Bool,        ///< true / false
    Choice,      ///< one of `choices`
    ChoiceList,  ///< non-empty list drawn from `choices`
    RealList,    ///< non-empty list of finite reals
    IndexList,   ///< non-empty list of non-negative integers
    TargetList,  ///< non-empty list of builtin target names
    Layout,      ///< "identity" or a list of physical qubits
    Path,        ///< file path, relative to the spec file
    Calibration, ///< "bundled" or a file path
};

struct KeyDef {
    std::string name;
    KeyType type;
    std::string fallback;
    std::vector<std::string> choices{};
};

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    for (auto f : detail::split_csv(s)) {
        out.emplace_back(f);
    }
    return out;
}

[[noreturn]] inline void bad_value(const std::string &key, const std::string &value,
                                   const std::string &what) {
    throw ValidationError("invalid value '" + value + "' for key '" + key + "': expected " + what);
}

inline std::size_t as_count(const std::string &key, const std::string &v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || out < 1) {
        bad_value(key, v, "a positive integer");
    }
    return out;
}

inline double as_real(const std::string &key, const std::string &v) {
    const auto d = detail::to_double(v);
    if (!d) {
        bad_value(key, v, "a finite real number");
    }
    return *d;
}

inline bool as_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "yes" || v == "1") {
        return true;
    }
    if (v == "false" || v == "no" || v == "0") {
        return false;
    }
    bad_value(key, v, "true or false");
}

inline std::vector<std::uint32_t> as_indices(const std::string &key, const std::string &v) {
    std::vector<std::uint32_t> out;
    for (const auto &f : split_list(v)) {
        std::uint32_t q = 0;
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), q);
        if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size()) {
            bad_value(key, v, "a comma-separated list of non-negative integers");
        }
        out.push_back(q);
    }
    return out;
}

inline void check_value(const KeyDef &def, const std::string &v) {
    const auto &key = def.name;
    const auto in_choices = [&](const std::string &s) {
        return std::find(def.choices.begin(), def.choices.end(), s) != def.choices.end();
    };
    const auto choice_text = [&] {
        std::string s = "one of";
        for (const auto &c : def.choices) {
            s += " " + c;
        }
        return s;
    };
    switch (def.type) {
    case KeyType::Count:
        as_count(key, v);
        return;
    case KeyType::Real:
        as_real(key, v);
        return;
    case KeyType::Positive:
        if (!(as_real(key, v) > 0)) {
            bad_value(key, v, "a positive real number");
        }
        return;
    case KeyType::NonNegative:
        if (!(as_real(key, v) >= 0)) {
            bad_value(key, v, "a non-negative real number");
        }
        return;
    case KeyType::Probability: {
        const double p = as_real(key, v);
        if (!(p >= 0 && p <= 1)) {
            bad_value(key, v, "a probability in [0, 1]");
        }
        return;
    }
    case KeyType::Bool:
        as_bool(key, v);
        return;
    case KeyType::Choice:
        if (!in_choices(v)) {
            bad_value(key, v, choice_text());
        }
        return;
    case KeyType::ChoiceList: {
        std::set<std::string> seen;
        for (const auto &f : split_list(v)) {
            if (!in_choices(f)) {
                bad_value(key, v, "a list of " + choice_text());
            }
            if (!seen.insert(f).second) {
                bad_value(key, v, "a list without repeated entries");
            }
        }
        return;
    }
    case KeyType::RealList:
        for (const auto &f : split_list(v)) {
            if (!detail::to_double(f)) {
                bad_value(key, v, "a comma-separated list of real numbers");
            }
        }
        return;
    case KeyType::IndexList:
        as_indices(key, v);
        return;
    case KeyType::TargetList:
        for (const auto &f : split_list(v)) {
            try {
                builtin_target(f);
            } catch (const ConfigError &) {
                bad_value(key, v, "targets among x3, x3-x2+1, sin2x, random-poly(<seed>)");
            }
        }
        return;
    case KeyType::Layout:
        if (v != "identity") {
            as_indices(key, v);
        }
        return;
    case KeyType::Path:
    case KeyType::Calibration:
        if (v.empty()) {
            bad_value(key, v, "a file path");
        }
        return;
    }
}

inline std::vector<KeyDef> model_keys(std::string n, std::string depth, std::string encoding,
                                      std::string tying, std::string observables) {
    return {
        {"n_qubits", KeyType::Count, std::move(n)},
        {"depth", KeyType::Count, std::move(depth)},
        {"encoding", KeyType::Choice, std::move(encoding), {"arcsin", "identity"}},
        {"entanglement", KeyType::Choice, "circular", {"circular", "linear"}},
        {"tying", KeyType::Choice, std::move(tying), {"shared", "fresh"}},
        {"observables", KeyType::IndexList, std::move(observables)},
    };
}

inline std::vector<KeyDef> noise_params(std::string p1, std::string p2, std::string pr) {
    return {
        {"p1", KeyType::Probability, std::move(p1)},
        {"p2", KeyType::Probability, std::move(p2)},
        {"pr", KeyType::Probability, std::move(pr)},
        {"calibration", KeyType::Calibration, "bundled"},
        {"uncoupled", KeyType::Choice, "median", {"reject", "median", "route"}},
        {"depolarizing_scale", KeyType::NonNegative, "1"},
        {"layout", KeyType::Layout, "identity"},
    };
}

inline std::vector<KeyDef> training_keys(std::string target, std::string points,
                                         std::string optimizer, std::string max_evals,
                                         std::string noise, std::string runs) {
    auto keys = std::vector<KeyDef>{
        {"target", KeyType::TargetList, std::move(target)},
        {"points", KeyType::Count, std::move(points)},
        {"x_min", KeyType::Real, "-1"},
        {"x_max", KeyType::Real, "1"},
        {"fine_points", KeyType::Count, "101"},
        {"optimizer", KeyType::Choice, std::move(optimizer), {"cobyla", "spsa", "quasi-newton"}},
        {"max_evals", KeyType::Count, std::move(max_evals)},
        {"rho_begin", KeyType::Positive, "0.5"},
        {"rho_end", KeyType::Positive, "1e-4"},
        {"spsa_a", KeyType::NonNegative, "0"},
        {"spsa_c", KeyType::Positive, "0.2"},
        {"fd_step", KeyType::Positive, "1e-6"},
        {"noise", KeyType::Choice, std::move(noise), {"exact", "shot", "pauli", "calibrated"}},
        {"shots", KeyType::Count, "2000"},
        {"runs", KeyType::Count, std::move(runs)},
        {"post", KeyType::Bool, "true"},
    };
    for (auto &k : noise_params("0.00024", "0.0075", "0.012")) {
        keys.push_back(std::move(k));
    }
    return keys;
}

inline const std::vector<std::string> kNoiseKinds{"shot", "pauli", "calibrated"};

inline std::vector<KeyDef> recipe_keys(Recipe r) {
    std::vector<KeyDef> keys;
    const auto add = [&](std::vector<KeyDef> more) {
        for (auto &k : more) {
            keys.push_back(std::move(k));
        }
    };
    const std::string fig3_x = "-1,-0.5,0,0.5,1";
    switch (r) {
    case Recipe::ShotsScan:
        add({{"n_qubits", KeyType::Count, "3"},
             {"depth", KeyType::Count, "3"},
             {"entanglement", KeyType::Choice, "circular", {"circular", "linear"}},
             {"x_values", KeyType::RealList, fig3_x},
             {"shots_min_exp", KeyType::Count, "3"},
             {"shots_max_exp", KeyType::Count, "16"},
             {"noises", KeyType::ChoiceList, "shot,pauli,calibrated", kNoiseKinds},
             {"repeats", KeyType::Count, "20"}});
        add(noise_params("0.00024", "0.0075", "0.012"));
        break;
    case Recipe::QubitScan:
        add({{"n_min", KeyType::Count, "2"},
             {"n_max", KeyType::Count, "20"},
             {"depth", KeyType::Count, "3"},
             {"x_values", KeyType::RealList, fig3_x},
             {"shots", KeyType::Count, "2000"},
             {"noises", KeyType::ChoiceList, "shot,pauli,calibrated", kNoiseKinds},
             {"entanglements", KeyType::ChoiceList, "circular,linear", {"circular", "linear"}},
             {"repeats", KeyType::Count, "20"}});
        add(noise_params("0.00024", "0.0075", "0.012"));
        break;
    case Recipe::EntanglementScan:
        add({{"n_min", KeyType::Count, "2"},
             {"n_max", KeyType::Count, "20"},
             {"depth", KeyType::Count, "3"},
             {"x", KeyType::Real, "1"},
             {"shots", KeyType::Count, "2000"},
             {"entanglements", KeyType::ChoiceList, "circular,linear", {"circular", "linear"}},
             {"repeats", KeyType::Count, "20"},
             {"p1", KeyType::Probability, "0"},
             {"p2", KeyType::Probability, "0.01"},
             {"pr", KeyType::Probability, "0"}});
        break;
    case Recipe::OptimizerCompare:
        add(model_keys("3", "3", "arcsin", "shared", "0"));
        add(training_keys("x3", "10", "cobyla", "300", "calibrated", "5"));
        add({{"optimizers", KeyType::ChoiceList, "cobyla,spsa,quasi-newton",
              {"cobyla", "spsa", "quasi-newton"}}});
        break;
    case Recipe::Learn:
        add(model_keys("3", "3", "arcsin", "shared", "0"));
        add(training_keys("x3", "20", "quasi-newton", "3000", "exact", "1"));
        break;
    case Recipe::Derive:
        add(model_keys("3", "3", "arcsin", "shared", "0"));
        add(training_keys("x3", "20", "quasi-newton", "3000", "exact", "1"));
        add({{"deriv_min", KeyType::Real, "-0.9"},
             {"deriv_max", KeyType::Real, "0.9"},
             {"deriv_points", KeyType::Count, "19"}});
        break;
    case Recipe::SolveOde: {
        add(model_keys("3", "3", "arcsin", "shared", "0"));
        auto t = training_keys("x3", "10", "quasi-newton", "3000", "exact", "5");
        t.erase(t.begin()); // the ODE has a right-hand side instead of a target
        add(std::move(t));
        keys.push_back({"rhs", KeyType::Choice, "3x^2", {"3x^2", "3x^2-2x", "2cos2x"}});
        keys.push_back({"x0", KeyType::Real, "0"});
        keys.push_back({"f0", KeyType::Real, "0"});
        keys.push_back({"mu", KeyType::NonNegative, "10"});
        for (auto &k : keys) {
            if (k.name == "x_min") {
                k.fallback = "-0.9";
            } else if (k.name == "x_max") {
                k.fallback = "0.9";
            }
        }
        break;
    }
    case Recipe::SolveCoupled: {
        add(model_keys("4", "4", "identity", "fresh", "0,1"));
        auto t = training_keys("x3", "30", "quasi-newton", "100000", "exact", "5");
        t.erase(t.begin());
        add(std::move(t));
        keys.push_back({"omega0_sq", KeyType::Real, "1"});
        keys.push_back({"omega1_sq", KeyType::Real, "16"});
        keys.push_back({"f0", KeyType::RealList, "1,0"});
        keys.push_back({"v0", KeyType::RealList, "0,0"});
        keys.push_back({"x0", KeyType::Real, "0"});
        keys.push_back({"mu", KeyType::NonNegative, "20"});
        break;
    }
    case Recipe::MultiOutput:
        add(model_keys("6", "4", "arcsin", "fresh", "0"));
        add({{"functions", KeyType::Count, "4"},
             {"repetitions", KeyType::Count, "20"},
             {"points", KeyType::Count, "10"},
             {"x_min", KeyType::Real, "-1"},
             {"x_max", KeyType::Real, "1"},
             {"optimizer", KeyType::Choice, "cobyla", {"cobyla", "spsa", "quasi-newton"}},
             {"max_evals", KeyType::Count, "300"},
             {"rho_begin", KeyType::Positive, "0.5"},
             {"rho_end", KeyType::Positive, "1e-4"},
             {"spsa_a", KeyType::NonNegative, "0"},
             {"spsa_c", KeyType::Positive, "0.2"},
             {"fd_step", KeyType::Positive, "1e-6"},
             {"post", KeyType::Bool, "true"}});
        // Observables follow from `functions`.
        keys.erase(std::find_if(keys.begin(), keys.end(),
                                [](const KeyDef &k) { return k.name == "observables"; }));
        break;
    }
    keys.push_back({"model_file", KeyType::Path, ""});
    return keys;
}

/// Keys a model description file may set.
inline const std::set<std::string> kModelFileKeys{"n_qubits", "depth",       "encoding", "entanglement",
                                                  "tying",    "observables", "seed"};

inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                         const std::string &source) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError(source + ": expected 'key = value'", line_no);
        }
        std::string key(detail::trim(line.substr(0, eq)));
        std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw ParseError(source + ": missing key", line_no);
        }
        if (!seen.insert(key).second) {
            throw ValidationError(source + ": key '" + key + "' given twice");
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline std::string read_file(const std::filesystem::path &p, const std::string &what) {
    std::ifstream f(p, std::ios::binary);
    if (!f) {
        throw ValidationError("cannot open " + what + " '" + p.string() + "'");
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

inline std::uint64_t parse_seed(const std::string &v) {
    std::uint64_t s = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
        bad_value("seed", v, "a non-negative integer");
    }
    return s;
}

} // namespace spec_detail

/// A recipe with every parameter resolved.
struct ExperimentSpec {
    Recipe recipe = Recipe::Learn;
    std::map<std::string, std::string> parameters;
    std::optional<std::uint64_t> seed;
    std::filesystem::path output_dir;
    std::filesystem::path base_dir; ///< relative paths in the spec resolve against this

    [[nodiscard]] const std::string &text(const std::string &key) const {
        const auto it = parameters.find(key);
        if (it == parameters.end()) {
            throw ValidationError("recipe " + to_string(recipe) + " has no key '" + key + "'");
        }
        return it->second;
    }
    [[nodiscard]] std::size_t count(const std::string &key) const {
        return spec_detail::as_count(key, text(key));
    }
    [[nodiscard]] double real(const std::string &key) const {
        return spec_detail::as_real(key, text(key));
    }
    [[nodiscard]] bool flag(const std::string &key) const {
        return spec_detail::as_bool(key, text(key));
    }
    [[nodiscard]] std::vector<std::string> words(const std::string &key) const {
        return spec_detail::split_list(text(key));
    }
    [[nodiscard]] std::vector<double> reals(const std::string &key) const {
        std::vector<double> out;
        for (const auto &w : words(key)) {
            out.push_back(spec_detail::as_real(key, w));
        }
        return out;
    }
    [[nodiscard]] std::vector<std::uint32_t> indices(const std::string &key) const {
        return spec_detail::as_indices(key, text(key));
    }
    [[nodiscard]] std::filesystem::path path(const std::string &key) const {
        const std::filesystem::path p = text(key);
        return p.is_absolute() ? p : base_dir / p;
    }

    /// Canonical `key = value` listing: recipe, seed, then the parameters in key order.
    [[nodiscard]] std::string resolved_text() const {
        std::string out = "recipe = " + to_string(recipe) + "\n";
        if (seed) {
            out += "seed = " + std::to_string(*seed) + "\n";
        }
        for (const auto &[k, v] : parameters) {
            out += k + " = " + v + "\n";
        }
        return out;
    }
};

namespace experiment_detail {
inline void check_semantics(const ExperimentSpec &spec);
}

/**
 * Resolves spec text for `recipe`: unknown keys are rejected, values are
 * type-checked and defaults are filled in. `base_dir` anchors relative paths.
 */
inline ExperimentSpec resolve_spec(std::string_view text, Recipe recipe,
                                   const std::filesystem::path &base_dir = ".",
                                   const std::string &source = "spec") {
    using namespace spec_detail;
    ExperimentSpec spec;
    spec.recipe = recipe;
    spec.base_dir = base_dir;
    const auto defs = recipe_keys(recipe);
    const auto find_def = [&](const std::string &key) -> const KeyDef * {
        for (const auto &d : defs) {
            if (d.name == key) {
                return &d;
            }
        }
        return nullptr;
    };

    std::map<std::string, std::string> given;
    for (auto &[key, value] : parse_key_values(text, source)) {
        if (key == "seed") {
            spec.seed = parse_seed(value);
            continue;
        }
        if (key == "recipe") {
            if (value != to_string(recipe)) {
                throw ValidationError("key 'recipe' says '" + value + "' but the recipe is '" +
                                      to_string(recipe) + "'");
            }
            continue;
        }
        if (!find_def(key)) {
            throw ValidationError("unknown key '" + key + "' for recipe " + to_string(recipe));
        }
        given[key] = value;
    }

    if (auto it = given.find("model_file"); it != given.end()) {
        const std::filesystem::path mp = it->second;
        const auto full = mp.is_absolute() ? mp : base_dir / mp;
        for (auto &[key, value] : parse_key_values(read_file(full, "model file"), full.string())) {
            if (!kModelFileKeys.contains(key) || (key != "seed" && !find_def(key))) {
                throw ValidationError("unknown key '" + key + "' in model file for recipe " +
                                      to_string(recipe));
            }
            if (key == "seed") {
                if (!spec.seed) {
                    spec.seed = parse_seed(value);
                }
                continue;
            }
            given.emplace(key, value); // the spec file wins over the model file
        }
    }

    for (const auto &def : defs) {
        const auto it = given.find(def.name);
        const std::string value = it != given.end() ? it->second : def.fallback;
        if (def.name == "model_file") {
            if (!value.empty()) {
                spec.parameters[def.name] = value;
            }
            continue;
        }
        check_value(def, value);
        spec.parameters[def.name] = value;
    }
    experiment_detail::check_semantics(spec);
    return spec;
}

/// Reads and resolves a spec file.
inline ExperimentSpec validate_spec(const std::filesystem::path &path, Recipe recipe) {
    const auto text = spec_detail::read_file(path, "spec file");
    auto base = path.parent_path();
    if (base.empty()) {
        base = ".";
    }
    return resolve_spec(text, recipe, base, path.string());
}

// ---------------------------------------------------------------------------
// Building blocks shared by the recipes and the acceptance checks.

/// The fixed reference circuit: every rotation angle pi/2, arcsin encoding, Z on qubit 0.
inline QclModel half_turn_model(std::size_t n_qubits, std::size_t depth, Entanglement ent) {
    Ansatz a{n_qubits, depth, ent, ParamTying::Shared};
    return QclModel(Encoding::Arcsin, a, {0}, std::vector<double>(a.n_theta(), std::numbers::pi / 2),
                    {1.0});
}

inline std::vector<GateOp> half_turn_ops(std::size_t n_qubits, std::size_t depth, Entanglement ent,
                                         double x) {
    const auto m = half_turn_model(n_qubits, depth, ent);
    return m.circuit().bind(m.bindings_for_angle(inner_function(Encoding::Arcsin, x).value));
}

/// FNV-1a of a category name, used as a seed-derivation key.
inline std::uint64_t stream_id(std::string_view word) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : word) {
        h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    }
    return h;
}

inline Entanglement parse_entanglement(std::string_view s) {
    return s == "linear" ? Entanglement::Linear : Entanglement::Circular;
}
inline std::string to_string(Entanglement e) {
    return e == Entanglement::Linear ? "linear" : "circular";
}

/**
 * Noise model of kind "shot", "pauli" or "calibrated" from the spec's noise
 * parameters. The calibrated model is checked against the first `n_qubits`
 * logical qubits.
 */
inline NoiseModel noise_from_spec(const ExperimentSpec &spec, std::string_view kind,
                                  std::size_t n_qubits) {
    if (kind == "shot") {
        return NoiseModel::shot_only();
    }
    if (kind == "pauli") {
        return NoiseModel::pauli({spec.real("p1"), spec.real("p2"), spec.real("pr")});
    }
    if (kind != "calibrated") {
        throw ValidationError("unknown noise kind '" + std::string(kind) + "'");
    }
    std::shared_ptr<const CalibrationData> data;
    if (spec.text("calibration") == "bundled") {
        data = std::make_shared<const CalibrationData>(ehningen_calibration());
    } else {
        const auto p = spec.path("calibration");
        try {
            data = std::make_shared<const CalibrationData>(
                parse_calibration(spec_detail::read_file(p, "calibration file")));
        } catch (const ParseError &e) {
            throw ValidationError("calibration file '" + p.string() + "': " + e.what());
        }
    }
    CalibratedNoise c;
    c.data = data;
    c.depolarizing_scale = spec.real("depolarizing_scale");
    const auto policy = spec.text("uncoupled");
    c.uncoupled = policy == "reject"  ? UncoupledPairPolicy::Reject
                  : policy == "route" ? UncoupledPairPolicy::Route
                                      : UncoupledPairPolicy::Median;
    if (spec.text("layout") != "identity") {
        for (auto q : spec.indices("layout")) {
            c.layout.push_back(static_cast<int>(q));
        }
        if (c.layout.size() < n_qubits) {
            throw ValidationError("key 'layout' lists " + std::to_string(c.layout.size()) +
                                  " physical qubits but " + std::to_string(n_qubits) +
                                  " are needed");
        }
        if (std::set<int>(c.layout.begin(), c.layout.end()).size() != c.layout.size()) {
            throw ValidationError("key 'layout' repeats a physical qubit");
        }
    }
    for (std::uint32_t q = 0; q < n_qubits; ++q) {
        const int p = c.physical(q);
        if (!data->x_errors.contains(p) || !data->readout_errors.contains(p)) {
            throw ValidationError("key 'layout': physical qubit " + std::to_string(p) +
                                  " is missing from the calibration tables");
        }
    }
    return NoiseModel::calibrated(std::move(c));
}

/// Model with theta = 0 and post = 1 built from the spec's model keys.
inline QclModel model_from_spec(const ExperimentSpec &spec,
                                std::optional<std::vector<std::uint32_t>> observables = {}) {
    Ansatz a;
    a.n_qubits = spec.count("n_qubits");
    a.depth = spec.count("depth");
    a.entanglement = parse_entanglement(spec.text("entanglement"));
    a.tying = spec.text("tying") == "fresh" ? ParamTying::Fresh : ParamTying::Shared;
    if (a.n_qubits > kMaxQubits) {
        throw ValidationError("key 'n_qubits' must be at most " + std::to_string(kMaxQubits));
    }
    const auto obs = observables ? *observables : spec.indices("observables");
    for (auto q : obs) {
        if (q >= a.n_qubits) {
            throw ValidationError("key 'observables': qubit " + std::to_string(q) +
                                  " does not exist in a " + std::to_string(a.n_qubits) +
                                  "-qubit model");
        }
    }
    if (std::set<std::uint32_t>(obs.begin(), obs.end()).size() != obs.size()) {
        throw ValidationError("key 'observables' repeats a qubit");
    }
    const auto enc = spec.text("encoding") == "identity" ? Encoding::Identity : Encoding::Arcsin;
    return QclModel::zeros(enc, a, obs);
}

inline OptimizerConfig optimizer_from_spec(const ExperimentSpec &spec,
                                           std::optional<std::string> kind = {}) {
    OptimizerConfig c;
    const auto k = kind ? *kind : spec.text("optimizer");
    c.kind = k == "spsa"           ? OptimizerKind::Spsa
             : k == "quasi-newton" ? OptimizerKind::QuasiNewton
                                   : OptimizerKind::Cobyla;
    c.max_evals = spec.count("max_evals");
    c.cobyla.rho_begin = spec.real("rho_begin");
    c.cobyla.rho_end = spec.real("rho_end");
    if (c.cobyla.rho_end > c.cobyla.rho_begin) {
        throw ValidationError("key 'rho_end' must not exceed rho_begin");
    }
    c.spsa.a = spec.real("spsa_a");
    c.spsa.c = spec.real("spsa_c");
    c.quasi_newton.fd_step = spec.real("fd_step");
    c.validate();
    return c;
}

/// Exact evaluator for noise = exact, else a sampled one (seed set per run).
inline Evaluator evaluator_from_spec(const ExperimentSpec &spec, std::size_t n_qubits) {
    const auto kind = spec.text("noise");
    if (kind == "exact") {
        return Evaluator::exact();
    }
    return Evaluator::sampled(spec.count("shots"), noise_from_spec(spec, kind, n_qubits), 0);
}

inline std::vector<double> training_grid(const ExperimentSpec &spec) {
    const double lo = spec.real("x_min");
    const double hi = spec.real("x_max");
    if (!(lo < hi)) {
        throw ValidationError("key 'x_min' must be below x_max");
    }
    return linspace(lo, hi, spec.count("points"));
}

/// Result of training one run of a recipe.
struct RunOutcome {
    std::size_t run;
    TrainResult result;
    double final_cost; ///< cost of the best parameters, re-evaluated once more
    double exact_cost; ///< the same cost with the exact evaluator
};

using CostFactory = std::function<ModelCost(const CostOptions &)>;

/**
 * Trains run `run`. The start point, the sampling streams and the optimizer's
 * own randomness are derived from (seed, run), so the outcome does not depend
 * on which other runs are performed or on `threads`.
 */
inline RunOutcome train_run(const CostFactory &factory, const Evaluator &evaluator, bool train_post,
                            const OptimizerConfig &optimizer, std::uint64_t seed, std::size_t run,
                            std::size_t threads = 1) {
    const bool sampled = evaluator.kind == Evaluator::Kind::Sampled;
    CostOptions opt{evaluator, train_post, threads};
    opt.evaluator.seed = derive_seed(seed, {run, 1});
    const auto cost = factory(opt);
    auto start = cost.layout.random_start(derive_seed(seed, {run, 0}));
    auto result = train(cost, optimizer, derive_seed(seed, {run, 2}), std::move(start));
    double final_cost = result.cost;
    double exact_cost = result.cost;
    if (sampled) {
        final_cost = cost(result.parameters);
        exact_cost = factory(CostOptions{Evaluator::exact(), train_post, threads})(result.parameters);
    }
    return {run, std::move(result), final_cost, exact_cost};
}

/// Index of the run with the lowest final cost (first one on ties).
inline std::size_t best_run(const std::vector<RunOutcome> &runs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].final_cost < runs[best].final_cost) {
            best = i;
        }
    }
    return best;
}

inline std::vector<RealFn> targets_from_spec(const ExperimentSpec &spec, std::size_t n_obs) {
    std::vector<RealFn> out;
    for (const auto &name : spec.words("target")) {
        out.push_back(builtin_target(name).f);
    }
    if (out.size() != n_obs) {
        throw ValidationError("key 'target' lists " + std::to_string(out.size()) +
                              " targets for " + std::to_string(n_obs) + " observables");
    }
    return out;
}

/// Right-hand side g of f' = g and an antiderivative G with G(0) = 0.
inline std::pair<RealFn, RealFn> ode_rhs(std::string_view name) {
    if (name == "3x^2") {
        return {[](double x) { return 3 * x * x; }, [](double x) { return x * x * x; }};
    }
    if (name == "3x^2-2x") {
        return {[](double x) { return 3 * x * x - 2 * x; },
                [](double x) { return x * x * x - x * x; }};
    }
    if (name == "2cos2x") {
        return {[](double x) { return 2 * std::cos(2 * x); },
                [](double x) { return std::sin(2 * x); }};
    }
    throw ValidationError("invalid value '" + std::string(name) + "' for key 'rhs'");
}

inline OdeProblem ode_from_spec(const ExperimentSpec &spec) {
    OdeProblem p;
    p.rhs = ode_rhs(spec.text("rhs")).first;
    p.x0 = spec.real("x0");
    p.f0 = spec.real("f0");
    p.mu = spec.real("mu");
    p.grid = training_grid(spec);
    return p;
}

/// Reference solution of the ODE recipe.
inline RealFn ode_reference(const ExperimentSpec &spec) {
    const auto g = ode_rhs(spec.text("rhs")).second;
    const double x0 = spec.real("x0");
    const double f0 = spec.real("f0");
    return [g, x0, f0](double x) { return g(x) - g(x0) + f0; };
}

inline CoupledOscillatorProblem coupled_from_spec(const ExperimentSpec &spec) {
    CoupledOscillatorProblem p;
    p.stiffness = CoupledOscillatorProblem::stiffness_from_frequencies(spec.real("omega0_sq"),
                                                                       spec.real("omega1_sq"));
    const auto f0 = spec.reals("f0");
    const auto v0 = spec.reals("v0");
    if (f0.size() != 2) {
        throw ValidationError("key 'f0' needs two values");
    }
    if (v0.size() != 2) {
        throw ValidationError("key 'v0' needs two values");
    }
    p.f0 = Eigen::Vector2d(f0[0], f0[1]);
    p.v0 = Eigen::Vector2d(v0[0], v0[1]);
    p.x0 = spec.real("x0");
    p.mu = spec.real("mu");
    p.grid = training_grid(spec);
    return p;
}

// ---------------------------------------------------------------------------
// CSV tables and output files.

class CsvTable {
  public:
    CsvTable(std::string file, std::vector<std::string> columns)
        : file_(std::move(file)), columns_(columns.size()) {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            text_ += (i ? "," : "") + columns[i];
        }
        text_ += "\n";
    }

    template <class... Ts> void row(const Ts &...values) {
        if (sizeof...(Ts) != columns_) {
            throw StructuralError("CSV row width does not match the header of " + file_);
        }
        std::string line;
        ((line += (line.empty() ? "" : ",") + cell(values)), ...);
        text_ += line + "\n";
    }

    [[nodiscard]] const std::string &file() const noexcept { return file_; }
    [[nodiscard]] const std::string &text() const noexcept { return text_; }

  private:
    static std::string cell(double v) { return fmt::format("{:.17g}", v); }
    static std::string cell(const std::string &v) { return v; }
    static std::string cell(const char *v) { return v; }
    template <class T>
        requires std::is_integral_v<T>
    static std::string cell(T v) {
        return std::to_string(v);
    }

    std::string file_;
    std::size_t columns_;
    std::string text_;
};

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += fmt::format("{:02x}", md[i]);
    }
    return hex;
}

// ---------------------------------------------------------------------------
// Recipes. Each returns its tables; run_recipe writes them.

namespace experiment_detail {

/// Trains `runs` runs in parallel; inner cost loops get the leftover threads.
inline std::vector<RunOutcome> train_runs(const CostFactory &factory, const Evaluator &ev,
                                          bool train_post, const OptimizerConfig &opt,
                                          std::uint64_t seed, std::size_t runs,
                                          std::size_t threads) {
    std::vector<std::optional<RunOutcome>> slots(runs);
    const std::size_t inner = std::max<std::size_t>(1, threads / runs);
    parallel_for(runs, threads, [&](std::size_t r) {
        slots[r] = train_run(factory, ev, train_post, opt, seed, r, inner);
    });
    std::vector<RunOutcome> out;
    for (auto &o : slots) {
        out.push_back(std::move(*o));
    }
    return out;
}

inline void add_trace(CsvTable &t, const std::string &label, const RunOutcome &o) {
    const auto best = best_so_far(o.result.trace);
    for (std::size_t i = 0; i < o.result.trace.size(); ++i) {
        t.row(label, o.run, o.result.trace[i].eval_index, o.result.trace[i].cost, best[i]);
    }
}

inline CsvTable parameter_table(const std::string &file, const std::vector<RunOutcome> &runs) {
    CsvTable t(file, {"run", "name", "value"});
    for (const auto &o : runs) {
        const auto &m = o.result.model;
        for (std::size_t i = 0; i < m.theta().size(); ++i) {
            t.row(o.run, "theta_" + std::to_string(i), m.theta()[i]);
        }
        for (std::size_t i = 0; i < m.post().size(); ++i) {
            t.row(o.run, "post_" + std::to_string(i), m.post()[i]);
        }
    }
    return t;
}

inline std::vector<CsvTable> shots_scan(const ExperimentSpec &spec, std::uint64_t seed,
                                        std::size_t threads) {
    const auto n = spec.count("n_qubits");
    const auto depth = spec.count("depth");
    const auto ent = parse_entanglement(spec.text("entanglement"));
    const auto xs = spec.reals("x_values");
    const auto kinds = spec.words("noises");
    const auto lo = spec.count("shots_min_exp");
    const auto hi = spec.count("shots_max_exp");
    const auto repeats = spec.count("repeats");
    std::vector<NoiseModel> models;
    for (const auto &k : kinds) {
        models.push_back(noise_from_spec(spec, k, n));
    }

    const std::size_t units = kinds.size() * xs.size();
    std::vector<std::vector<double>> values(units);
    parallel_for(units, threads, [&](std::size_t u) {
        const auto k = u / xs.size();
        const auto xi = u % xs.size();
        const TrajectorySampler sampler(n, half_turn_ops(n, depth, ent, xs[xi]), models[k]);
        for (std::size_t e = lo; e <= hi; ++e) {
            for (std::size_t r = 0; r < repeats; ++r) {
                const auto s = derive_seed(seed, {stream_id(kinds[k]), xi, e, r});
                values[u].push_back(sampler.counts(std::size_t{1} << e, s).expect_z(0));
            }
        }
    });

    CsvTable t("shots_scan.csv", {"noise", "shots", "repeat", "x", "value"});
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (std::size_t e = lo; e <= hi; ++e) {
            for (std::size_t r = 0; r < repeats; ++r) {
                for (std::size_t xi = 0; xi < xs.size(); ++xi) {
                    const auto &v = values[k * xs.size() + xi];
                    t.row(kinds[k], std::size_t{1} << e, r, xs[xi], v[(e - lo) * repeats + r]);
                }
            }
        }
    }
    return {t};
}

} // namespace experiment_detail

/// Mean absolute error of one noisy repeat against the noiseless circuit, per (N, repeat).
struct QubitScanCell {
    std::string noise;
    Entanglement entanglement = Entanglement::Circular;
    std::size_t n_qubits = 0;
    std::vector<double> mae; ///< one value per repeat
};

/**
 * Sampled <Z_0> of the half-turn circuit against its noiseless value, averaged
 * over `xs`, for every N in [n_min, n_max].
 */
inline std::vector<QubitScanCell>
qubit_scan(const std::vector<std::pair<std::string, NoiseModel>> &noises,
           const std::vector<Entanglement> &ents, std::size_t n_min, std::size_t n_max,
           std::size_t depth, const std::vector<double> &xs, std::size_t shots,
           std::size_t repeats, std::uint64_t seed, std::size_t threads) {
    std::vector<QubitScanCell> cells;
    for (const auto &[name, model] : noises) {
        for (auto e : ents) {
            for (std::size_t n = n_min; n <= n_max; ++n) {
                cells.push_back({name, e, n, std::vector<double>(repeats, 0.0)});
            }
        }
    }
    const std::size_t units = cells.size() * xs.size();
    std::vector<std::vector<double>> err(units);
    parallel_for(units, threads, [&](std::size_t u) {
        const auto &cell = cells[u / xs.size()];
        const auto xi = u % xs.size();
        const auto &model = std::find_if(noises.begin(), noises.end(), [&](const auto &p) {
                                return p.first == cell.noise;
                            })->second;
        const auto ops = half_turn_ops(cell.n_qubits, depth, cell.entanglement, xs[xi]);
        const double exact = run_ops(cell.n_qubits, ops).expect_z(0);
        const TrajectorySampler sampler(cell.n_qubits, ops, model);
        for (std::size_t r = 0; r < repeats; ++r) {
            const auto s = derive_seed(seed, {stream_id(cell.noise), stream_id(to_string(cell.entanglement)),
                                              cell.n_qubits, xi, r});
            err[u].push_back(std::abs(sampler.counts(shots, s).expect_z(0) - exact));
        }
    });
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t r = 0; r < repeats; ++r) {
            double acc = 0.0;
            for (std::size_t xi = 0; xi < xs.size(); ++xi) {
                acc += err[c * xs.size() + xi][r];
            }
            cells[c].mae[r] = acc / static_cast<double>(xs.size());
        }
    }
    return cells;
}

/// One entry of the optimizer comparison.
struct OptimizerRun {
    std::string optimizer;
    RunOutcome outcome;
};

/// Trains every optimizer in `kinds` for `runs` runs; run r starts from the same point for all.
inline std::vector<OptimizerRun> compare_optimizers(const CostFactory &factory, const Evaluator &ev,
                                                    bool train_post,
                                                    const std::vector<std::pair<std::string, OptimizerConfig>> &kinds,
                                                    std::size_t runs, std::uint64_t seed,
                                                    std::size_t threads) {
    std::vector<std::optional<OptimizerRun>> slots(kinds.size() * runs);
    const std::size_t inner = std::max<std::size_t>(1, threads / slots.size());
    parallel_for(slots.size(), threads, [&](std::size_t u) {
        const auto &[name, cfg] = kinds[u / runs];
        slots[u] = OptimizerRun{name, train_run(factory, ev, train_post, cfg, seed, u % runs, inner)};
    });
    std::vector<OptimizerRun> out;
    for (auto &o : slots) {
        out.push_back(std::move(*o));
    }
    return out;
}

/// Best-so-far cost curves of the single- and multi-function cases.
struct MultiOutputResult {
    std::size_t functions = 0;
    std::vector<std::vector<double>> single; ///< per repetition, indexed by evaluation
    std::vector<std::vector<double>> multi;

    /// Mean best-so-far cost at normalized evaluation e (1-based); multi is divided by `functions`.
    [[nodiscard]] std::pair<double, double> normalized(std::size_t e) const {
        double s = 0.0;
        double m = 0.0;
        for (std::size_t r = 0; r < single.size(); ++r) {
            s += single[r][std::min(e, single[r].size()) - 1];
            const auto &mr = multi[r];
            m += mr[std::min(e * functions, mr.size()) - 1] / static_cast<double>(functions);
        }
        const auto reps = static_cast<double>(single.size());
        return {s / reps, m / reps};
    }
};

/**
 * Learns one random polynomial on one observable and `functions` random
 * polynomials on as many observables, `repetitions` times each.
 */
inline MultiOutputResult multi_output(const QclModel &base_single, const QclModel &base_multi,
                                      const std::vector<double> &grid, const OptimizerConfig &opt,
                                      bool train_post, std::size_t repetitions, std::uint64_t seed,
                                      std::size_t threads) {
    const std::size_t k = base_multi.observables().size();
    MultiOutputResult res{k, std::vector<std::vector<double>>(repetitions),
                          std::vector<std::vector<double>>(repetitions)};
    parallel_for(2 * repetitions, threads, [&](std::size_t u) {
        const std::size_t r = u / 2;
        const bool is_multi = u % 2 == 1;
        const auto &model = is_multi ? base_multi : base_single;
        FitProblem p;
        p.grid = grid;
        for (std::size_t o = 0; o < model.observables().size(); ++o) {
            auto c = random_polynomial(6, derive_seed(seed, {r, is_multi ? 1u : 0u, o, 0x9017}));
            p.targets.push_back([c = std::move(c)](double x) { return poly_eval(c, x); });
        }
        const CostFactory factory = [&](const CostOptions &co) { return fit_cost(model, p, co); };
        const auto o = train_run(factory, Evaluator::exact(), train_post, opt,
                                 derive_seed(seed, {is_multi ? 1u : 0u}), r);
        auto curve = best_so_far(o.result.trace);
        curve.resize(opt.max_evals, curve.back());
        (is_multi ? res.multi : res.single)[r] = std::move(curve);
    });
    return res;
}

namespace experiment_detail {

inline std::vector<CsvTable> qubit_scan_tables(const ExperimentSpec &spec, std::uint64_t seed,
                                               std::size_t threads) {
    const auto n_min = spec.count("n_min");
    const auto n_max = spec.count("n_max");
    std::vector<std::pair<std::string, NoiseModel>> noises;
    for (const auto &k : spec.words("noises")) {
        noises.emplace_back(k, noise_from_spec(spec, k, n_max));
    }
    std::vector<Entanglement> ents;
    for (const auto &e : spec.words("entanglements")) {
        ents.push_back(parse_entanglement(e));
    }
    const auto cells = qubit_scan(noises, ents, n_min, n_max, spec.count("depth"),
                                  spec.reals("x_values"), spec.count("shots"),
                                  spec.count("repeats"), seed, threads);
    CsvTable raw("qubit_scan.csv", {"noise", "entanglement", "n_qubits", "repeat", "mae"});
    CsvTable sum("qubit_scan_summary.csv",
                 {"noise", "entanglement", "n_qubits", "mae_mean", "mae_std"});
    for (const auto &c : cells) {
        for (std::size_t r = 0; r < c.mae.size(); ++r) {
            raw.row(c.noise, to_string(c.entanglement), c.n_qubits, r, c.mae[r]);
        }
        sum.row(c.noise, to_string(c.entanglement), c.n_qubits, stats::mean(c.mae),
                stats::stddev(c.mae));
    }
    return {raw, sum};
}

inline std::vector<CsvTable> entanglement_scan_tables(const ExperimentSpec &spec,
                                                      std::uint64_t seed, std::size_t threads) {
    const auto noise = NoiseModel::pauli({spec.real("p1"), spec.real("p2"), spec.real("pr")});
    std::vector<Entanglement> ents;
    for (const auto &e : spec.words("entanglements")) {
        ents.push_back(parse_entanglement(e));
    }
    const auto cells = qubit_scan({{"pauli", noise}}, ents, spec.count("n_min"),
                                  spec.count("n_max"), spec.count("depth"), {spec.real("x")},
                                  spec.count("shots"), spec.count("repeats"), seed, threads);
    CsvTable raw("entanglement_scan.csv", {"entanglement", "n_qubits", "repeat", "error"});
    CsvTable sum("entanglement_scan_summary.csv",
                 {"entanglement", "n_qubits", "error_mean", "error_std"});
    for (const auto &c : cells) {
        for (std::size_t r = 0; r < c.mae.size(); ++r) {
            raw.row(to_string(c.entanglement), c.n_qubits, r, c.mae[r]);
        }
        sum.row(to_string(c.entanglement), c.n_qubits, stats::mean(c.mae), stats::stddev(c.mae));
    }
    return {raw, sum};
}

/// Per-run summary, function samples on a fine grid, trace and parameters of a fit recipe.
inline std::vector<CsvTable> fit_tables(const std::string &prefix, const ExperimentSpec &spec,
                                        const std::vector<std::pair<std::string, RunOutcome>> &runs,
                                        const FitProblem &problem) {
    CsvTable trace(prefix + "_trace.csv", {"label", "run", "eval_index", "cost", "best_cost"});
    CsvTable summary(prefix + "_summary.csv", {"label", "run", "evaluations", "best_cost",
                                               "final_cost", "exact_cost", "mae", "message"});
    CsvTable fn(prefix + "_functions.csv", {"label", "run", "observable", "x", "target", "model"});
    const auto fine = linspace(spec.real("x_min"), spec.real("x_max"), spec.count("fine_points"));
    for (const auto &[label, o] : runs) {
        add_trace(trace, label, o);
        const auto &m = o.result.model;
        std::vector<double> tv;
        std::vector<double> mv;
        for (double x : problem.grid) {
            const auto v = eval_exact(m, x);
            for (std::size_t q = 0; q < v.size(); ++q) {
                tv.push_back(problem.targets[q](x));
                mv.push_back(v[q]);
            }
        }
        summary.row(label, o.run, o.result.trace.size(), o.result.cost, o.final_cost, o.exact_cost,
                    mae(tv, mv), o.result.message);
        for (std::size_t q = 0; q < m.observables().size(); ++q) {
            for (double x : fine) {
                fn.row(label, o.run, m.observables()[q], x, problem.targets[q](x),
                       eval_exact(m, x)[q]);
            }
        }
    }
    return {trace, summary, fn};
}

inline FitProblem fit_problem_from_spec(const ExperimentSpec &spec, const QclModel &model) {
    return {targets_from_spec(spec, model.observables().size()), training_grid(spec)};
}

inline std::vector<CsvTable> optimizer_compare_tables(const ExperimentSpec &spec,
                                                      std::uint64_t seed, std::size_t threads) {
    const auto model = model_from_spec(spec);
    const auto problem = fit_problem_from_spec(spec, model);
    const CostFactory factory = [&](const CostOptions &co) { return fit_cost(model, problem, co); };
    std::vector<std::pair<std::string, OptimizerConfig>> kinds;
    for (const auto &k : spec.words("optimizers")) {
        kinds.emplace_back(k, optimizer_from_spec(spec, k));
    }
    const auto res = compare_optimizers(factory, evaluator_from_spec(spec, model.n_qubits()),
                                        spec.flag("post"), kinds, spec.count("runs"), seed, threads);
    std::vector<std::pair<std::string, RunOutcome>> runs;
    for (const auto &r : res) {
        runs.emplace_back(r.optimizer, r.outcome);
    }
    return fit_tables("optimizer_compare", spec, runs, problem);
}

inline std::vector<RunOutcome> learn_runs(const ExperimentSpec &spec, const QclModel &model,
                                          const FitProblem &problem, std::uint64_t seed,
                                          std::size_t threads) {
    const CostFactory factory = [&](const CostOptions &co) { return fit_cost(model, problem, co); };
    return train_runs(factory, evaluator_from_spec(spec, model.n_qubits()), spec.flag("post"),
                      optimizer_from_spec(spec), seed, spec.count("runs"), threads);
}

inline std::vector<CsvTable> learn_tables(const ExperimentSpec &spec, std::uint64_t seed,
                                          std::size_t threads) {
    const auto model = model_from_spec(spec);
    const auto problem = fit_problem_from_spec(spec, model);
    const auto runs = learn_runs(spec, model, problem, seed, threads);
    std::vector<std::pair<std::string, RunOutcome>> labelled;
    for (const auto &r : runs) {
        labelled.emplace_back(spec.text("optimizer"), r);
    }
    auto tables = fit_tables("learn", spec, labelled, problem);
    tables.push_back(parameter_table("learn_parameters.csv", runs));
    return tables;
}

inline double central_d1(const RealFn &f, double x) {
    constexpr double h = 1e-5;
    return (f(x + h) - f(x - h)) / (2 * h);
}
inline double central_d2(const RealFn &f, double x) {
    constexpr double h = 1e-4;
    return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h);
}

inline std::vector<CsvTable> derive_tables(const ExperimentSpec &spec, std::uint64_t seed,
                                           std::size_t threads) {
    const auto model = model_from_spec(spec);
    const auto problem = fit_problem_from_spec(spec, model);
    const double lo = spec.real("deriv_min");
    const double hi = spec.real("deriv_max");
    if (!(lo < hi)) {
        throw ValidationError("key 'deriv_min' must be below deriv_max");
    }
    const auto grid = linspace(lo, hi, spec.count("deriv_points"));
    for (double x : grid) {
        if (model.encoding() == Encoding::Arcsin && !(std::abs(x) < 1.0)) {
            throw ValidationError("keys 'deriv_min'/'deriv_max' must lie inside (-1, 1) "
                                  "for arcsin encoding");
        }
    }
    const auto runs = learn_runs(spec, model, problem, seed, threads);
    const auto &best = runs[best_run(runs)];
    const auto &m = best.result.model;
    const auto ev = evaluator_from_spec(spec, model.n_qubits());
    const bool sampled = ev.kind == Evaluator::Kind::Sampled;

    struct Row {
        std::vector<double> f, d1, d2, d1s, d2s;
    };
    std::vector<Row> rows(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) {
        const double x = grid[i];
        rows[i].f = eval_exact(m, x);
        rows[i].d1 = derivative(m, x, 1);
        rows[i].d2 = derivative(m, x, 2);
        if (sampled) {
            auto e = ev;
            e.seed = derive_seed(seed, {0xD, i});
            const auto fn = make_expectation_fn(m, e);
            rows[i].d1s = derivative_with(m, x, 1, fn, 1);
            rows[i].d2s = derivative_with(m, x, 2, fn, 2);
        }
    });

    CsvTable d("derive_derivatives.csv",
               {"observable", "x", "model", "model_d1", "model_d2", "sampled_d1", "sampled_d2",
                "target", "target_d1", "target_d2"});
    for (std::size_t q = 0; q < m.observables().size(); ++q) {
        const auto &t = problem.targets[q];
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double x = grid[i];
            const double s1 = sampled ? rows[i].d1s[q] : rows[i].d1[q];
            const double s2 = sampled ? rows[i].d2s[q] : rows[i].d2[q];
            d.row(m.observables()[q], x, rows[i].f[q], rows[i].d1[q], rows[i].d2[q], s1, s2, t(x),
                  central_d1(t, x), central_d2(t, x));
        }
    }
    std::vector<std::pair<std::string, RunOutcome>> labelled;
    for (const auto &r : runs) {
        labelled.emplace_back(spec.text("optimizer"), r);
    }
    auto tables = fit_tables("derive", spec, labelled, problem);
    tables.push_back(std::move(d));
    return tables;
}

inline std::vector<CsvTable> solve_ode_tables(const ExperimentSpec &spec, std::uint64_t seed,
                                              std::size_t threads) {
    const auto model = model_from_spec(spec);
    const auto problem = ode_from_spec(spec);
    const auto reference = ode_reference(spec);
    const CostFactory factory = [&](const CostOptions &co) { return ode_cost(model, problem, co); };
    const auto runs = train_runs(factory, evaluator_from_spec(spec, model.n_qubits()),
                                 spec.flag("post"), optimizer_from_spec(spec), seed,
                                 spec.count("runs"), threads);

    CsvTable trace("solve_ode_trace.csv", {"label", "run", "eval_index", "cost", "best_cost"});
    CsvTable summary("solve_ode_summary.csv",
                     {"run", "evaluations", "best_cost", "final_cost", "exact_cost", "grid_mae",
                      "best"});
    const auto b = best_run(runs);
    for (const auto &o : runs) {
        add_trace(trace, spec.text("optimizer"), o);
        std::vector<double> mv;
        std::vector<double> rv;
        for (double x : problem.grid) {
            mv.push_back(eval_exact(o.result.model, x)[0]);
            rv.push_back(reference(x));
        }
        summary.row(o.run, o.result.trace.size(), o.result.cost, o.final_cost, o.exact_cost,
                    mae(rv, mv), o.run == b ? 1 : 0);
    }
    CsvTable solution("solve_ode_solution.csv", {"x", "model", "reference"});
    CsvTable error("solve_ode_error.csv", {"x", "abs_error"});
    const auto &m = runs[b].result.model;
    for (double x : linspace(spec.real("x_min"), spec.real("x_max"), spec.count("fine_points"))) {
        const double f = eval_exact(m, x)[0];
        solution.row(x, f, reference(x));
        error.row(x, std::abs(f - reference(x)));
    }
    return {trace, solution, error, summary, parameter_table("solve_ode_parameters.csv", runs)};
}

inline std::vector<CsvTable> solve_coupled_tables(const ExperimentSpec &spec, std::uint64_t seed,
                                                  std::size_t threads) {
    const auto model = model_from_spec(spec);
    if (model.observables().size() != 2) {
        throw ValidationError("key 'observables' must list two qubits for the coupled system");
    }
    const auto problem = coupled_from_spec(spec);
    const CostFactory factory = [&](const CostOptions &co) {
        return coupled_cost(model, problem, co);
    };
    const auto runs = train_runs(factory, evaluator_from_spec(spec, model.n_qubits()),
                                 spec.flag("post"), optimizer_from_spec(spec), seed,
                                 spec.count("runs"), threads);
    const auto fine = linspace(spec.real("x_min"), spec.real("x_max"), spec.count("fine_points"));

    CsvTable trace("solve_coupled_trace.csv", {"label", "run", "eval_index", "cost", "best_cost"});
    CsvTable summary("solve_coupled_summary.csv",
                     {"run", "evaluations", "best_cost", "final_cost", "exact_cost", "max_error",
                      "best"});
    const auto b = best_run(runs);
    for (const auto &o : runs) {
        add_trace(trace, spec.text("optimizer"), o);
        double worst = 0.0;
        for (double x : fine) {
            const auto f = eval_exact(o.result.model, x);
            const auto a = problem.analytic(x);
            worst = std::max({worst, std::abs(f[0] - a(0)), std::abs(f[1] - a(1))});
        }
        summary.row(o.run, o.result.trace.size(), o.result.cost, o.final_cost, o.exact_cost, worst,
                    o.run == b ? 1 : 0);
    }
    CsvTable solution("solve_coupled_solution.csv", {"x", "f1", "f2", "reference1", "reference2"});
    CsvTable error("solve_coupled_error.csv", {"x", "abs_error1", "abs_error2"});
    const auto &m = runs[b].result.model;
    for (double x : fine) {
        const auto f = eval_exact(m, x);
        const auto a = problem.analytic(x);
        solution.row(x, f[0], f[1], a(0), a(1));
        error.row(x, std::abs(f[0] - a(0)), std::abs(f[1] - a(1)));
    }
    return {trace, solution, error, summary, parameter_table("solve_coupled_parameters.csv", runs)};
}

inline std::vector<CsvTable> multi_output_tables(const ExperimentSpec &spec, std::uint64_t seed,
                                                 std::size_t threads) {
    const auto k = spec.count("functions");
    const auto n = spec.count("n_qubits");
    if (k > n) {
        throw ValidationError("key 'functions' must not exceed n_qubits");
    }
    std::vector<std::uint32_t> obs(k);
    std::iota(obs.begin(), obs.end(), 0u);
    const auto single = model_from_spec(spec, std::vector<std::uint32_t>{0});
    const auto multi = model_from_spec(spec, obs);
    const auto res = multi_output(single, multi, training_grid(spec), optimizer_from_spec(spec),
                                  spec.flag("post"), spec.count("repetitions"), seed, threads);
    CsvTable trace("multi_output_trace.csv", {"case", "repetition", "eval_index", "best_cost"});
    for (std::size_t r = 0; r < res.single.size(); ++r) {
        for (std::size_t i = 0; i < res.single[r].size(); ++i) {
            trace.row("single", r, i, res.single[r][i]);
        }
        for (std::size_t i = 0; i < res.multi[r].size(); ++i) {
            trace.row("multi", r, i, res.multi[r][i]);
        }
    }
    CsvTable curves("multi_output_curves.csv",
                    {"normalized_eval", "single_mean_cost", "multi_mean_cost_per_function"});
    for (std::size_t e = 1; e * k <= spec.count("max_evals"); ++e) {
        const auto [s, m] = res.normalized(e);
        curves.row(e, s, m);
    }
    return {trace, curves};
}

inline void check_semantics(const ExperimentSpec &spec) {
    // Cross-key checks that do not need any computation.
    const auto &p = spec.parameters;
    if (p.contains("n_min") && spec.count("n_min") > spec.count("n_max")) {
        throw ValidationError("key 'n_min' must not exceed n_max");
    }
    if (p.contains("n_max") && spec.count("n_max") > kMaxQubits) {
        throw ValidationError("key 'n_max' must be at most " + std::to_string(kMaxQubits));
    }
    if (p.contains("shots_min_exp")) {
        if (spec.count("shots_min_exp") > spec.count("shots_max_exp")) {
            throw ValidationError("key 'shots_min_exp' must not exceed shots_max_exp");
        }
        if (spec.count("shots_max_exp") > 30) {
            throw ValidationError("key 'shots_max_exp' must be at most 30");
        }
    }
    if (p.contains("x_values")) {
        for (double x : spec.reals("x_values")) {
            if (!(std::abs(x) <= 1.0)) {
                throw ValidationError("key 'x_values' must lie in [-1, 1]");
            }
        }
    }
    if (p.contains("x") && !(std::abs(spec.real("x")) <= 1.0)) {
        throw ValidationError("key 'x' must lie in [-1, 1]");
    }
    if (p.contains("x_min")) {
        training_grid(spec);
        if (p.contains("encoding") && spec.text("encoding") == "arcsin") {
            const bool open = spec.recipe == Recipe::SolveOde || spec.recipe == Recipe::SolveCoupled;
            const double lo = spec.real("x_min");
            const double hi = spec.real("x_max");
            if (open ? !(lo > -1 && hi < 1) : !(lo >= -1 && hi <= 1)) {
                throw ValidationError(std::string("keys 'x_min'/'x_max' must lie in ") +
                                      (open ? "(-1, 1)" : "[-1, 1]") + " for arcsin encoding");
            }
        }
    }
    if (p.contains("n_qubits")) {
        const auto n = spec.count("n_qubits");
        if (n > kMaxQubits) {
            throw ValidationError("key 'n_qubits' must be at most " + std::to_string(kMaxQubits));
        }
        if (p.contains("observables")) {
            model_from_spec(spec);
        }
        if (p.contains("target") && p.contains("observables")) {
            targets_from_spec(spec, spec.indices("observables").size());
        }
        if (p.contains("functions") && spec.count("functions") > n) {
            throw ValidationError("key 'functions' must not exceed n_qubits");
        }
    }
    if (p.contains("rho_end")) {
        optimizer_from_spec(spec, "cobyla");
    }
    if (p.contains("f0") && spec.recipe == Recipe::SolveCoupled) {
        coupled_from_spec(spec).validate();
    }
    if (p.contains("noise") && spec.text("noise") != "exact") {
        noise_from_spec(spec, spec.text("noise"),
                        p.contains("n_qubits") ? spec.count("n_qubits") : 1);
    }
    if (p.contains("noises")) {
        const auto n = p.contains("n_max") ? spec.count("n_max") : spec.count("n_qubits");
        for (const auto &k : spec.words("noises")) {
            noise_from_spec(spec, k, n);
        }
    }
    if (spec.recipe == Recipe::Derive) {
        const double lo = spec.real("deriv_min");
        const double hi = spec.real("deriv_max");
        if (!(lo < hi)) {
            throw ValidationError("key 'deriv_min' must be below deriv_max");
        }
        if (spec.text("encoding") == "arcsin" && !(lo > -1 && hi < 1)) {
            throw ValidationError("keys 'deriv_min'/'deriv_max' must lie in (-1, 1) for arcsin "
                                  "encoding");
        }
    }
}

} // namespace experiment_detail

/// Computes the recipe's tables without touching the file system.
inline std::vector<CsvTable> recipe_tables(const ExperimentSpec &spec, std::size_t threads) {
    if (!spec.seed) {
        throw ValidationError("a seed is required (--seed or a 'seed' key)");
    }
    const auto seed = derive_seed(*spec.seed, {stream_id(to_string(spec.recipe))});
    threads = std::max<std::size_t>(threads, 1);
    using namespace experiment_detail;
    switch (spec.recipe) {
    case Recipe::ShotsScan:
        return shots_scan(spec, seed, threads);
    case Recipe::QubitScan:
        return qubit_scan_tables(spec, seed, threads);
    case Recipe::EntanglementScan:
        return entanglement_scan_tables(spec, seed, threads);
    case Recipe::OptimizerCompare:
        return optimizer_compare_tables(spec, seed, threads);
    case Recipe::Learn:
        return learn_tables(spec, seed, threads);
    case Recipe::Derive:
        return derive_tables(spec, seed, threads);
    case Recipe::SolveOde:
        return solve_ode_tables(spec, seed, threads);
    case Recipe::SolveCoupled:
        return solve_coupled_tables(spec, seed, threads);
    case Recipe::MultiOutput:
        return multi_output_tables(spec, seed, threads);
    }
    throw ValidationError("unknown recipe");
}

inline constexpr std::string_view kResolvedSpecFile = "resolved_spec.txt";
inline constexpr std::string_view kManifestFile = "manifest.json";

/// Manifest text for the given output files (name, contents).
inline std::string manifest_json(const ExperimentSpec &spec,
                                 const std::vector<std::pair<std::string, std::string>> &files) {
    nlohmann::ordered_json j;
    j["toolkit"] = "qclkit";
    j["version"] = std::string(kToolkitVersion);
    j["recipe"] = to_string(spec.recipe);
    j["seed"] = spec.seed ? *spec.seed : 0;
    j["spec_sha256"] = sha256_hex(spec.resolved_text());
    auto arr = nlohmann::ordered_json::array();
    for (const auto &[name, content] : files) {
        nlohmann::ordered_json f;
        f["file"] = name;
        f["bytes"] = content.size();
        f["sha256"] = sha256_hex(content);
        arr.push_back(std::move(f));
    }
    j["files"] = std::move(arr);
    return j.dump(2) + "\n";
}

/**
 * Runs the recipe and writes its CSVs, the resolved spec and the manifest
 * into `spec.output_dir`. Returns the written paths, manifest last.
 */
inline std::vector<std::filesystem::path> run_recipe(const ExperimentSpec &spec,
                                                     std::size_t threads = 1) {
    const auto tables = recipe_tables(spec, threads);
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto &t : tables) {
        files.emplace_back(t.file(), t.text());
    }
    files.emplace_back(std::string(kResolvedSpecFile), spec.resolved_text());
    files.emplace_back(std::string(kManifestFile), manifest_json(spec, files));

    std::filesystem::create_directories(spec.output_dir);
    std::vector<std::filesystem::path> written;
    for (const auto &[name, content] : files) {
        const auto path = spec.output_dir / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) {
            throw Error("cannot write '" + path.string() + "'");
        }
        written.push_back(path);
    }
    return written;
}

} // namespace qcl
