// Command-line front end for the experiment runners.
//
// Exit codes: 0 success, 2 configuration error, 3 integrability condition
// abort, 4 numeric failure or unstable regime, 1 anything else.

#include "pibsde/config.hpp"
#include "pibsde/errors.hpp"
#include "pibsde/experiments.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> n_inner;
    std::optional<double> sigma;
    std::optional<unsigned> workers;
};

pibsde::ExperimentConfig resolve(const Overrides& o) {
    pibsde::ExperimentConfig cfg = pibsde::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out = *o.out;
    if (o.n_inner) {
        if (*o.n_inner < 1) throw pibsde::ConfigError(0, "--n-inner must be >= 1");
        cfg.n_inner = *o.n_inner;
    }
    if (o.workers) {
        if (*o.workers < 1) throw pibsde::ConfigError(0, "--workers must be >= 1");
        cfg.workers = *o.workers;
    }
    if (o.sigma) {
        if (!(*o.sigma > 0.0)) throw pibsde::ConfigError(0, "--sigma must be > 0");
        if (cfg.model == pibsde::ModelKind::kCir) {
            cfg.sigmas = {*o.sigma};
            cfg.cir.sigma = *o.sigma;
        } else {
            cfg.linear.sigma = *o.sigma;
        }
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial- and full-information portfolio experiments"};
    app.footer(pibsde::config_help());
    app.require_subcommand(1);

    Overrides ov;
    using Runner = std::function<pibsde::RunResult(const pibsde::ExperimentConfig&)>;
    const std::map<std::string, std::pair<std::string, Runner>> commands{
        {"simulate", {"simulate market paths", pibsde::run_simulate}},
        {"filter", {"run the filter along one simulated path", pibsde::run_filter}},
        {"riccati", {"closed-form and RK4 value coefficients", pibsde::run_riccati}},
        {"xi", {"nested Monte Carlo estimate of xi(0)", pibsde::run_xi}},
        {"fig1", {"linear model path with partial and full value coefficients", pibsde::run_fig1}},
        {"fig2", {"CIR model path with nested Monte Carlo xi", pibsde::run_fig2}},
        {"checks", {"stability and integrability condition report", pibsde::run_checks}},
    };
    std::string chosen;
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", ov.config, "config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", ov.seed, "random seed");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--n-inner", ov.n_inner, "inner branches per nested estimate");
        sub->add_option("--sigma", ov.sigma, "asset volatility override (fig2: single value)");
        sub->add_option("--workers", ov.workers, "worker threads");
        sub->callback([&chosen, n = name] { chosen = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const pibsde::ExperimentConfig cfg = resolve(ov);
        const pibsde::RunResult res = commands.at(chosen).second(cfg);
        for (const auto& f : res.files) std::cout << "wrote " << f << '\n';
        if (!res.summary.empty()) std::cout << res.summary << (res.summary.back() == '\n' ? "" : "\n");
        return 0;
    } catch (const pibsde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const pibsde::InvalidModel& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const pibsde::ConditionAbort& e) {
        std::cerr << "condition check failed: " << e.what() << '\n';
        return 3;
    } catch (const pibsde::NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const pibsde::UnstableRegime& e) {
        std::cerr << "unstable regime: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
