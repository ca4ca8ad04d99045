#include "pibsde/config.hpp"

#include "pibsde/errors.hpp"
#include "pibsde/filtering.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace pibsde {

namespace {

struct Entry {
    std::string value;
    int line = 0;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const Entry& e, const std::string& key) {
    const char* begin = e.value.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
        throw ConfigError(e.line, "key '" + key + "' expects a real number, got '" + e.value + "'");
    }
    return v;
}

template <class Int>
Int to_int(const Entry& e, const std::string& key) {
    Int v{};
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError(e.line, "key '" + key + "' expects an integer, got '" + e.value + "'");
    }
    return v;
}

bool to_bool(const Entry& e, const std::string& key) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError(e.line, "key '" + key + "' expects true or false, got '" + e.value + "'");
}

std::vector<double> to_list(const Entry& e, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(Entry{trim(item), e.line}, key));
    if (out.empty()) throw ConfigError(e.line, "key '" + key + "' expects a comma-separated list of reals");
    return out;
}

void require(bool ok, const Entry& e, const std::string& msg) {
    if (!ok) throw ConfigError(e.line, msg);
}

const std::set<std::string>& common_keys() {
    static const std::set<std::string> k{"model",   "gamma",    "T",          "r",          "kappa",
                                         "a",       "rho",      "sigma",      "seed",       "n_steps",
                                         "n_paths", "n_inner",  "n_checkpoints", "grid_n",  "grid_lo",
                                         "grid_hi", "steady",   "y0",         "s0",         "x0",
                                         "prior_mean", "prior_var", "out",    "workers",    "override_conditions"};
    return k;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int ExperimentConfig::steps() const {
    if (n_steps > 0) return n_steps;
    return std::max(1, static_cast<int>(std::lround(1000.0 * T)));
}

ExperimentConfig parse_config(const std::string& text) {
    std::map<std::string, Entry> entries;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(line_no, "missing key before '='");
        if (value.empty()) throw ConfigError(line_no, "missing value for key '" + key + "'");
        if (entries.count(key)) throw ConfigError(line_no, "duplicate key '" + key + "'");
        entries[key] = Entry{value, line_no};
    }

    const auto model_it = entries.find("model");
    if (model_it == entries.end()) {
        throw ConfigError(0, "missing required key 'model' (linear or cir); all other keys are optional");
    }
    ExperimentConfig cfg;
    const Entry& me = model_it->second;
    if (me.value == "linear") cfg.model = ModelKind::kLinear;
    else if (me.value == "cir") cfg.model = ModelKind::kCir;
    else throw ConfigError(me.line, "model must be 'linear' or 'cir', got '" + me.value + "'");
    const bool lin = cfg.model == ModelKind::kLinear;

    for (const auto& [key, e] : entries) {
        const bool known = common_keys().count(key) || (lin && key == "mu") ||
                           (!lin && (key == "c" || key == "ybar" || key == "sigmas"));
        if (!known) {
            throw ConfigError(e.line, "unknown key '" + key + "' for model '" + me.value + "'");
        }
    }

    auto has = [&](const char* k) { return entries.count(k) > 0; };
    auto real = [&](const char* k) { return to_double(entries.at(k), k); };
    auto entry = [&](const char* k) -> const Entry& { return entries.at(k); };

    if (has("gamma")) {
        cfg.gamma = real("gamma");
        require(cfg.gamma > 0.0 && cfg.gamma != 1.0, entry("gamma"), "gamma must be > 0 and != 1");
    }
    if (has("T")) {
        cfg.T = real("T");
        require(cfg.T > 0.0, entry("T"), "T must be > 0");
    }
    double* kappa = lin ? &cfg.linear.kappa : &cfg.cir.kappa;
    double* a = lin ? &cfg.linear.a : &cfg.cir.a;
    double* rho = lin ? &cfg.linear.rho : &cfg.cir.rho;
    double* sigma = lin ? &cfg.linear.sigma : &cfg.cir.sigma;
    double* r = lin ? &cfg.linear.r : &cfg.cir.r;
    if (has("kappa")) {
        *kappa = real("kappa");
        require(*kappa > 0.0, entry("kappa"), "kappa must be > 0");
    }
    if (has("a")) {
        *a = real("a");
        require(*a > 0.0, entry("a"), "a must be > 0");
    }
    if (has("rho")) {
        *rho = real("rho");
        require(std::abs(*rho) < 1.0, entry("rho"), "rho must satisfy |rho| < 1");
    }
    if (has("sigma")) {
        *sigma = real("sigma");
        require(*sigma > 0.0, entry("sigma"), "sigma must be > 0");
    }
    if (has("r")) {
        *r = real("r");
        require(*r >= 0.0, entry("r"), "r must be >= 0");
    }
    if (has("mu")) cfg.linear.mu = real("mu");
    if (has("c")) cfg.cir.c = real("c");
    if (has("ybar")) {
        cfg.cir.ybar = real("ybar");
        require(cfg.cir.ybar > 0.0, entry("ybar"), "ybar must be > 0");
    }
    if (has("sigmas")) {
        cfg.sigmas = to_list(entry("sigmas"), "sigmas");
        for (double s : cfg.sigmas) require(s > 0.0, entry("sigmas"), "every entry of sigmas must be > 0");
    } else if (!lin) {
        cfg.sigmas = {0.026, 0.15};
    }
    if (has("seed")) cfg.seed = to_int<std::uint64_t>(entry("seed"), "seed");
    auto positive_int = [&](const char* k, int& field) {
        if (!has(k)) return;
        field = to_int<int>(entry(k), k);
        require(field >= 1, entry(k), std::string(k) + " must be >= 1");
    };
    positive_int("n_steps", cfg.n_steps);
    positive_int("n_paths", cfg.n_paths);
    positive_int("n_inner", cfg.n_inner);
    positive_int("n_checkpoints", cfg.n_checkpoints);
    positive_int("grid_n", cfg.grid_n);
    require(cfg.grid_n >= 3, has("grid_n") ? entry("grid_n") : me, "grid_n must be >= 3");
    if (has("workers")) {
        const int w = to_int<int>(entry("workers"), "workers");
        require(w >= 1, entry("workers"), "workers must be >= 1");
        cfg.workers = static_cast<unsigned>(w);
    }
    if (has("steady")) cfg.steady = to_bool(entry("steady"), "steady");
    if (has("override_conditions")) cfg.override_conditions = to_bool(entry("override_conditions"), "override_conditions");
    if (has("out")) cfg.out = entry("out").value;

    // Model-level invariants (Feller and the like) after all fields are set.
    try {
        if (lin) cfg.linear.validate();
        else cfg.cir.validate();
    } catch (const InvalidModel& ex) {
        int line = me.line;
        for (const char* k : {"a", "kappa", "ybar"})
            if (has(k)) line = std::max(line, entry(k).line);
        throw ConfigError(line, std::string("invalid model: ") + ex.what());
    }
    if (cfg.n_checkpoints > cfg.steps()) {
        throw ConfigError(has("n_checkpoints") ? entry("n_checkpoints").line : me.line,
                          "n_checkpoints exceeds the number of time steps");
    }

    if (has("grid_lo") || has("grid_hi")) {
        require(has("grid_lo") && has("grid_hi"), has("grid_lo") ? entry("grid_lo") : entry("grid_hi"),
                "grid_lo and grid_hi must be given together");
        cfg.grid_lo = real("grid_lo");
        cfg.grid_hi = real("grid_hi");
        require(cfg.grid_lo < cfg.grid_hi, entry("grid_hi"), "grid_lo must be < grid_hi");
        cfg.grid_bounds_set = true;
    } else {
        const GridBounds b = lin ? default_grid_bounds(cfg.linear) : default_grid_bounds(cfg.cir);
        cfg.grid_lo = b.lo;
        cfg.grid_hi = b.hi;
    }

    // Quantities left open by the model description get neutral defaults.
    if (has("y0")) {
        cfg.y0 = real("y0");
        require(lin || cfg.y0 >= 0.0, entry("y0"), "y0 must be >= 0 for the CIR model");
    } else {
        cfg.y0 = lin ? 0.0 : cfg.cir.ybar;
        cfg.assumed.insert("y0");
    }
    if (has("s0")) {
        cfg.s0 = real("s0");
        require(cfg.s0 > 0.0, entry("s0"), "s0 must be > 0");
    } else {
        cfg.assumed.insert("s0");
    }
    if (has("x0")) {
        cfg.x0 = real("x0");
        require(cfg.x0 > 0.0, entry("x0"), "x0 must be > 0");
    } else {
        cfg.assumed.insert("x0");
    }
    if (has("prior_mean")) {
        cfg.prior_mean = real("prior_mean");
    } else {
        cfg.prior_mean = lin ? 0.0 : cfg.cir.ybar;
        cfg.assumed.insert("prior_mean");
    }
    if (has("prior_var")) {
        cfg.prior_var = real("prior_var");
        require(cfg.prior_var >= 0.0, entry("prior_var"), "prior_var must be >= 0");
    } else {
        cfg.prior_var = lin ? steady_state_variance(cfg.linear) : 0.0;
        cfg.assumed.insert("prior_var");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(0, "cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string config_echo(const ExperimentConfig& cfg) {
    std::ostringstream o;
    const bool lin = cfg.model == ModelKind::kLinear;
    auto line = [&](const std::string& k, const std::string& v) {
        o << k << " = " << v;
        if (cfg.assumed.count(k)) o << "  # assumed";
        o << '\n';
    };
    line("model", lin ? "linear" : "cir");
    line("gamma", fmt(cfg.gamma));
    line("T", fmt(cfg.T));
    if (lin) {
        line("mu", fmt(cfg.linear.mu));
        line("kappa", fmt(cfg.linear.kappa));
        line("a", fmt(cfg.linear.a));
        line("rho", fmt(cfg.linear.rho));
        line("sigma", fmt(cfg.linear.sigma));
        line("r", fmt(cfg.linear.r));
    } else {
        line("c", fmt(cfg.cir.c));
        line("kappa", fmt(cfg.cir.kappa));
        line("ybar", fmt(cfg.cir.ybar));
        line("a", fmt(cfg.cir.a));
        line("rho", fmt(cfg.cir.rho));
        line("sigma", fmt(cfg.cir.sigma));
        line("r", fmt(cfg.cir.r));
        std::string s;
        for (std::size_t i = 0; i < cfg.sigmas.size(); ++i) s += (i ? "," : "") + fmt(cfg.sigmas[i]);
        line("sigmas", s);
    }
    line("seed", std::to_string(cfg.seed));
    line("n_steps", std::to_string(cfg.steps()));
    line("n_paths", std::to_string(cfg.n_paths));
    line("n_inner", std::to_string(cfg.n_inner));
    line("n_checkpoints", std::to_string(cfg.n_checkpoints));
    line("grid_n", std::to_string(cfg.grid_n));
    line("grid_lo", fmt(cfg.grid_lo));
    line("grid_hi", fmt(cfg.grid_hi));
    line("steady", cfg.steady ? "true" : "false");
    line("y0", fmt(cfg.y0));
    line("s0", fmt(cfg.s0));
    line("x0", fmt(cfg.x0));
    line("prior_mean", fmt(cfg.prior_mean));
    line("prior_var", fmt(cfg.prior_var));
    line("override_conditions", cfg.override_conditions ? "true" : "false");
    return o.str();
}

std::string config_help() {
    return "Config file: 'key = value' per line, '#' starts a comment.\n"
           "Required:\n"
           "  model            linear | cir\n"
           "Model parameters (defaults: linear kappa=8 a=.3 rho=-.8 sigma=.15 mu=r=0;\n"
           "                  cir c=.25 kappa=8 ybar=.05 a=.4 sigma=.15 rho=0 r=0):\n"
           "  gamma (1.2)  T (1)  r  kappa  a  rho  sigma  mu (linear)  c ybar (cir)\n"
           "  sigmas           comma list of volatilities for fig2 (cir, default .026,.15)\n"
           "Numerics:\n"
           "  seed (1)  n_steps (1000 per unit time)  n_paths (1)  n_inner (10)\n"
           "  n_checkpoints (50)  grid_n (400)  grid_lo grid_hi  steady (true)  workers (1)\n"
           "  override_conditions (false)\n"
           "Assumed initial values (echoed with '# assumed' when not given):\n"
           "  y0 (0 linear, ybar cir)  s0 (1)  x0 (1)\n"
           "  prior_mean (0 linear, ybar cir)  prior_var (stationary filter variance linear, 0 cir)\n"
           "  out (out)        output directory\n";
}

}  // namespace pibsde
