#pragma once

#include "pibsde/config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pibsde {

struct RunResult {
    std::vector<std::string> files;  // paths written, in order
    std::string summary;             // short text for the terminal
};

// Each run writes its CSV/text output plus a config echo into cfg.out.
RunResult run_simulate(const ExperimentConfig& cfg);
RunResult run_filter(const ExperimentConfig& cfg);
RunResult run_riccati(const ExperimentConfig& cfg);
RunResult run_xi(const ExperimentConfig& cfg);
RunResult run_fig1(const ExperimentConfig& cfg);
RunResult run_fig2(const ExperimentConfig& cfg);
RunResult run_checks(const ExperimentConfig& cfg);

// Condition and stability report as text, without writing files.
[[nodiscard]] std::string checks_report(const ExperimentConfig& cfg);

// 17 significant digits; empty for a missing or non-finite value.
[[nodiscard]] std::string csv_field(std::optional<double> v);

inline const char* const kResultHeader =
    "t,S,Y,yhat,G_partial,G_full,G_diff,pi_myopic,pi_hedge,xi,xi_stderr,xi_shorthand,xi_shorthand_stderr";

}  // namespace pibsde
