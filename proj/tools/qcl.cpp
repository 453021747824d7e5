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


// qcl: runs a named experiment recipe from a spec file.
//
//   qcl <recipe> --spec <file> --seed <int> --out <dir> [--threads <n>]
//
// Exit codes: 0 success, 2 spec or usage error, 3 runtime error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qcl/experiment.hpp"

namespace {

constexpr int kExitSpec = 2;
constexpr int kExitRuntime = 3;

std::string recipe_list() {
    std::string s;
    for (const auto &[r, name] : qcl::kRecipeNames) {
        s += (s.empty() ? "" : ", ") + std::string(name);
    }
    return s;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Quantum circuit learning experiments"};
    std::string recipe;
    std::string spec_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<std::size_t> threads;
    app.add_option("recipe", recipe, "one of: " + recipe_list())->required();
    app.add_option("--spec", spec_path, "key = value spec file")->required();
    app.add_option("--seed", seed, "base seed (overrides a 'seed' key in the spec)");
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--threads", threads, "worker threads (default: QCL_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitSpec;
    }

    qcl::ExperimentSpec spec;
    try {
        spec = qcl::validate_spec(spec_path, qcl::parse_recipe(recipe));
        if (seed) {
            spec.seed = seed;
        }
        if (!spec.seed) {
            throw qcl::ValidationError("a seed is required (--seed or a 'seed' key)");
        }
        spec.output_dir = out_dir;
    } catch (const std::exception &e) {
        std::cerr << "qcl: spec error: " << e.what() << "\n";
        return kExitSpec;
    }

    try {
        const auto files = qcl::run_recipe(spec, threads ? *threads : qcl::default_threads());
        for (const auto &f : files) {
            std::cout << f.string() << "\n";
        }
    } catch (const qcl::ValidationError &e) {
        std::cerr << "qcl: spec error: " << e.what() << "\n";
        return kExitSpec;
    } catch (const std::exception &e) {
        std::cerr << "qcl: error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
