#pragma once

#include "pibsde/model.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace pibsde {

enum class ModelKind { kLinear, kCir };

struct ExperimentConfig {
    ModelKind model = ModelKind::kLinear;
    LinearOuModel linear;
    CirModel cir;
    double gamma = 1.2;
    double T = 1.0;
    std::uint64_t seed = 1;
    int n_steps = 0;  // 0 means 1000 per unit time
    int n_paths = 1;
    int n_inner = 10;
    int n_checkpoints = 50;
    int grid_n = 400;
    double grid_lo = 0.0;
    double grid_hi = 0.0;
    bool grid_bounds_set = false;
    bool steady = true;
    double y0 = 0.0;
    double s0 = 1.0;
    double x0 = 1.0;
    double prior_mean = 0.0;
    double prior_var = 0.0;
    std::vector<double> sigmas;  // fig2 volatility sweep
    std::string out = "out";
    unsigned workers = 1;
    bool override_conditions = false;

    // Keys whose values were filled in by assumption rather than given.
    std::set<std::string> assumed;

    [[nodiscard]] int steps() const;
    [[nodiscard]] double r() const noexcept { return model == ModelKind::kLinear ? linear.r : cir.r; }
};

// Line-oriented "key = value" text with '#' comments. Unknown keys, type
// mismatches and invariant violations raise ConfigError with the line number.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);

// All effective settings, one "key = value" per line; assumed values carry a
// trailing "# assumed" marker.
[[nodiscard]] std::string config_echo(const ExperimentConfig& cfg);

// Human-readable list of keys with their defaults.
[[nodiscard]] std::string config_help();

}  // namespace pibsde
