#ifndef KAMFORGE_CONFIG_HPP
#define KAMFORGE_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "errors.hpp"
#include "lattice.hpp"

namespace kamforge {

inline constexpr int config_schema_version = 1;

struct run_config {
    int schema_version = 0;
    std::string command = "run";
    std::string problem = "lattice";
    std::string normal_form_file;
    double epsilon = 0.0;
    int nu_max = 3;
    std::string out_dir = "kamforge_out";
    std::uint64_t seed = 1;
    int threads = 0;

    lattice_config lattice;
    int taylor_order = 2;

    int L = 2;
    double tau = 4.0;
    double d = 2.0;
    double delta = 0.0;
    int m = 0;
    double s0 = 1.0;
    double rho0 = 0.08;
    double sigma0 = 1.0;
    double M0 = 1.0;
    int lmax = 2;
    int K_cap_max = 8;
    std::string policy = "halt";
    double weight_a = 0.0;
    double weight_p = 1.0;
    double weight_p_bar = 1.0;

    bool torus = false;
    double torus_periods = 100.0;
    double torus_dt = 0.01;

    int xi_samples = 10000;
    double xi_lo = 1.0;
    double xi_hi = 2.0;
    bool xi_grid = false;
    std::vector<double> gamma_grid{0.01, 0.05, 0.1};
    int measure_K = 8;
    std::vector<int> K_ladder{1, 2, 4, 8, 16, 32};
    double gamma0 = 0.1;

    double lattice_T = 100.0;
    double lattice_dt = 0.001;
    int lattice_record_every = 100;

    int sigma_exp = 1;
    int ell_exp = 1;
    double eps_lo = 1e-3;
    double eps_hi = 1e-1;
    int eps_count = 4000;

    std::filesystem::path source_dir;
};

struct config_key {
    std::string name;
    std::string type;
    std::string fallback;
    std::string doc;
    std::function<void(run_config&, const std::string&)> set;
    std::function<std::string(const run_config&)> get;
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw kam_error(failure::config, "invalid value for '" + key + "': '" + v + "'");
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    if (v.empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw kam_error(failure::config, "invalid value for '" + key + "': expected true or false");
}

inline std::string parse_choice(const std::string& key, const std::string& v, const std::vector<std::string>& allowed) {
    for (const auto& a : allowed)
        if (v == a) return v;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw kam_error(failure::config, "invalid value for '" + key + "': '" + v + "' (one of " + list + ")");
}

inline std::string show(const std::string& v) { return v; }
inline std::string show(bool v) { return v ? "true" : "false"; }
inline std::string show(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}
template <class T>
    requires std::is_integral_v<T>
std::string show(T v) {
    return std::to_string(v);
}
template <class T>
std::string show(const std::vector<T>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + show(x);
    return s;
}

}  // namespace detail

// Every recognised key with its type, default and meaning.
inline const std::vector<config_key>& config_schema() {
    using namespace detail;
#define KF_NUM(field, T) [](run_config& c, const std::string& v) { c.field = parse_number<T>(#field, v); }
#define KF_GET(field) [](const run_config& c) { return show(c.field); }
    static const std::vector<config_key> keys{
        {"schema_version", "int", "(required)", "config format version, must be 1",
         [](run_config& c, const std::string& v) { c.schema_version = parse_number<int>("schema_version", v); },
         [](const run_config& c) { return show(c.schema_version); }},
        {"command", "enum", "run", "run | measure | lattice | counterexample | selftest",
         [](run_config& c, const std::string& v) {
             c.command = parse_choice("command", v, {"run", "measure", "lattice", "counterexample", "selftest"});
         },
         [](const run_config& c) { return show(c.command); }},
        {"problem", "enum", "lattice", "lattice | normal_form", [](run_config& c, const std::string& v) {
             c.problem = parse_choice("problem", v, {"lattice", "normal_form"});
         },
         [](const run_config& c) { return show(c.problem); }},
        {"normal_form_file", "path", "", "normal form and perturbation file, relative to the config",
         [](run_config& c, const std::string& v) { c.normal_form_file = v; },
         [](const run_config& c) { return show(c.normal_form_file); }},
        {"epsilon", "double", "0", "perturbation size", KF_NUM(epsilon, double), KF_GET(epsilon)},
        {"nu_max", "int", "3", "number of KAM steps", KF_NUM(nu_max, int), KF_GET(nu_max)},
        {"out_dir", "path", "kamforge_out", "output directory", [](run_config& c, const std::string& v) { c.out_dir = v; },
         [](const run_config& c) { return show(c.out_dir); }},
        {"seed", "uint", "1", "seed for sampled checks", KF_NUM(seed, std::uint64_t), KF_GET(seed)},
        {"threads", "int", "0", "worker count, 0 means hardware concurrency", KF_NUM(threads, int), KF_GET(threads)},

        {"n1", "int", "2", "tangent sites", [](run_config& c, const std::string& v) { c.lattice.n1 = parse_number<int>("n1", v); },
         [](const run_config& c) { return show(c.lattice.n1); }},
        {"n2", "int", "3", "last degenerate site", [](run_config& c, const std::string& v) { c.lattice.n2 = parse_number<int>("n2", v); },
         [](const run_config& c) { return show(c.lattice.n2); }},
        {"J", "int", "3", "retained normal sites", [](run_config& c, const std::string& v) { c.lattice.J = parse_number<int>("J", v); },
         [](const run_config& c) { return show(c.lattice.J); }},
        {"alpha", "list<double>", "1, 1 + 1/phi", "tangent frequencies, length n1",
         [](run_config& c, const std::string& v) { c.lattice.alpha = parse_list<double>("alpha", v); },
         [](const run_config& c) { return show(c.lattice.alpha); }},
        {"alpha_normal", "list<double>", "j^2", "normal frequencies, length J",
         [](run_config& c, const std::string& v) { c.lattice.alpha_normal = parse_list<double>("alpha_normal", v); },
         [](const run_config& c) { return show(c.lattice.alpha_normal); }},
        {"beta", "list<double>", "1", "quartic coefficients of the degenerate sites, length n2 - n1",
         [](run_config& c, const std::string& v) { c.lattice.beta = parse_list<double>("beta", v); },
         [](const run_config& c) { return show(c.lattice.beta); }},
        {"y_star", "list<double>", "1", "reference actions of the tangent sites, length n1",
         [](run_config& c, const std::string& v) { c.lattice.y_star = parse_list<double>("y_star", v); },
         [](const run_config& c) { return show(c.lattice.y_star); }},
        {"hertz_exp", "double", "1", "coupling exponent, only 1 is supported",
         [](run_config& c, const std::string& v) { c.lattice.hertz_exp = parse_number<double>("hertz_exp", v); },
         [](const run_config& c) { return show(c.lattice.hertz_exp); }},
        {"taylor_order", "int", "2", "order of the action expansion around y_star", KF_NUM(taylor_order, int), KF_GET(taylor_order)},

        {"L", "int", "2", "weak-convexity exponent", KF_NUM(L, int), KF_GET(L)},
        {"tau", "double", "4", "Diophantine exponent", KF_NUM(tau, double), KF_GET(tau)},
        {"d", "double", "2", "growth exponent of the normal frequencies", KF_NUM(d, double), KF_GET(d)},
        {"delta", "double", "0", "weight exponent of the normal frequency drift", KF_NUM(delta, double), KF_GET(delta)},
        {"m", "int", "0", "grading order, 0 means the smallest admissible value", KF_NUM(m, int), KF_GET(m)},
        {"s0", "double", "1", "initial strip width", KF_NUM(s0, double), KF_GET(s0)},
        {"rho0", "double", "0.08", "initial width loss", KF_NUM(rho0, double), KF_GET(rho0)},
        {"sigma0", "double", "1", "initial radius factor", KF_NUM(sigma0, double), KF_GET(sigma0)},
        {"M0", "double", "1", "bound of the normal form coefficients", KF_NUM(M0, double), KF_GET(M0)},
        {"lmax", "int", "2", "largest |l| kept in the homological equation", KF_NUM(lmax, int), KF_GET(lmax)},
        {"K_cap_max", "int", "8", "largest Fourier order kept by the Lie transform", KF_NUM(K_cap_max, int), KF_GET(K_cap_max)},
        {"policy", "enum", "halt", "halt | record: stop at the first failed check or record it",
         [](run_config& c, const std::string& v) { c.policy = parse_choice("policy", v, {"halt", "record"}); },
         [](const run_config& c) { return show(c.policy); }},
        {"weight_a", "double", "0", "spatial weight of the phase-space norm", KF_NUM(weight_a, double), KF_GET(weight_a)},
        {"weight_p", "double", "1", "Sobolev weight of the domain", KF_NUM(weight_p, double), KF_GET(weight_p)},
        {"weight_p_bar", "double", "1", "Sobolev weight of the target", KF_NUM(weight_p_bar, double), KF_GET(weight_p_bar)},

        {"torus", "bool", "false", "integrate the final system from the torus after a run",
         [](run_config& c, const std::string& v) { c.torus = parse_bool("torus", v); },
         [](const run_config& c) { return show(c.torus); }},
        {"torus_periods", "double", "100", "integration time in periods 2 pi / min omega", KF_NUM(torus_periods, double), KF_GET(torus_periods)},
        {"torus_dt", "double", "0.01", "integrator step of the torus check", KF_NUM(torus_dt, double), KF_GET(torus_dt)},

        {"xi_samples", "int", "10000", "parameter samples of the measure estimate", KF_NUM(xi_samples, int), KF_GET(xi_samples)},
        {"xi_lo", "double", "1", "lower corner of the parameter box", KF_NUM(xi_lo, double), KF_GET(xi_lo)},
        {"xi_hi", "double", "2", "upper corner of the parameter box", KF_NUM(xi_hi, double), KF_GET(xi_hi)},
        {"xi_grid", "bool", "false", "use cell centres instead of random samples",
         [](run_config& c, const std::string& v) { c.xi_grid = parse_bool("xi_grid", v); },
         [](const run_config& c) { return show(c.xi_grid); }},
        {"gamma_grid", "list<double>", "0.01, 0.05, 0.1", "gamma values of the excluded-fraction table",
         [](run_config& c, const std::string& v) { c.gamma_grid = parse_list<double>("gamma_grid", v); },
         [](const run_config& c) { return show(c.gamma_grid); }},
        {"measure_K", "int", "8", "Fourier cutoff of the excluded-fraction table", KF_NUM(measure_K, int), KF_GET(measure_K)},
        {"K_ladder", "list<int>", "1, 2, 4, 8, 16, 32", "cutoffs of the per-shell loss table",
         [](run_config& c, const std::string& v) { c.K_ladder = parse_list<int>("K_ladder", v); },
         [](const run_config& c) { return show(c.K_ladder); }},
        {"gamma0", "double", "0.1", "initial gamma of the per-shell loss table", KF_NUM(gamma0, double), KF_GET(gamma0)},

        {"lattice_T", "double", "100", "integration time of the lattice command", KF_NUM(lattice_T, double), KF_GET(lattice_T)},
        {"lattice_dt", "double", "0.001", "integrator step of the lattice command", KF_NUM(lattice_dt, double), KF_GET(lattice_dt)},
        {"lattice_record_every", "int", "100", "steps between recorded lattice states", KF_NUM(lattice_record_every, int), KF_GET(lattice_record_every)},

        {"sigma_exp", "int", "1", "plateau exponent of the counterexample", KF_NUM(sigma_exp, int), KF_GET(sigma_exp)},
        {"ell_exp", "int", "1", "perturbation exponent of the counterexample", KF_NUM(ell_exp, int), KF_GET(ell_exp)},
        {"eps_lo", "double", "0.001", "smallest epsilon of the counterexample sweep", KF_NUM(eps_lo, double), KF_GET(eps_lo)},
        {"eps_hi", "double", "0.1", "largest epsilon of the counterexample sweep", KF_NUM(eps_hi, double), KF_GET(eps_hi)},
        {"eps_count", "int", "4000", "points of the sweep, uniform in 1/epsilon", KF_NUM(eps_count, int), KF_GET(eps_count)},
    };
#undef KF_NUM
#undef KF_GET
    return keys;
}

inline void validate(const run_config& c) {
    auto bad = [](const std::string& key, const std::string& why) { throw kam_error(failure::config, "invalid value for '" + key + "': " + why); };
    if (c.schema_version != config_schema_version) bad("schema_version", "expected " + std::to_string(config_schema_version));
    if (!(c.epsilon >= 0)) bad("epsilon", "must be >= 0");
    if (c.nu_max < 0) bad("nu_max", "must be >= 0");
    if (c.threads < 0) bad("threads", "must be >= 0");
    if (c.taylor_order < 0) bad("taylor_order", "must be >= 0");
    if (c.L < 2) bad("L", "must be >= 2");
    if (!(c.tau > 0)) bad("tau", "must be > 0");
    if (!(c.s0 > 0 && c.s0 <= 1)) bad("s0", "must lie in (0, 1]");
    if (!(c.rho0 > 0 && c.rho0 < c.s0)) bad("rho0", "must lie in (0, s0)");
    if (c.lmax < 0) bad("lmax", "must be >= 0");
    if (!(c.torus_periods > 0)) bad("torus_periods", "must be > 0");
    if (!(c.torus_dt > 0)) bad("torus_dt", "must be > 0");
    if (c.xi_samples < 1) bad("xi_samples", "must be >= 1");
    if (!(c.xi_hi > c.xi_lo)) bad("xi_hi", "must exceed xi_lo");
    if (c.measure_K < 1) bad("measure_K", "must be >= 1");
    if (c.K_ladder.size() < 2) bad("K_ladder", "needs at least two entries");
    for (std::size_t i = 1; i < c.K_ladder.size(); ++i)
        if (c.K_ladder[i] < c.K_ladder[i - 1]) bad("K_ladder", "must be non-decreasing");
    for (double g : c.gamma_grid)
        if (!(g >= 0)) bad("gamma_grid", "entries must be >= 0");
    if (!(c.lattice_dt > 0 && c.lattice_T >= c.lattice_dt)) bad("lattice_T", "needs lattice_dt > 0 and lattice_T >= lattice_dt");
    if (c.lattice_record_every < 1) bad("lattice_record_every", "must be >= 1");
    if (c.eps_count < 2) bad("eps_count", "must be >= 2");
    if (c.problem == "normal_form") {
        if (c.normal_form_file.empty()) bad("normal_form_file", "required when problem = normal_form");
        if (!std::filesystem::exists(c.source_dir / c.normal_form_file))
            bad("normal_form_file", "file not found: " + (c.source_dir / c.normal_form_file).string());
    }
}

// Flat "key = value" lines, '#' starts a comment.
inline run_config parse_config(std::istream& is, const std::filesystem::path& source_dir = {}) {
    run_config c;
    c.source_dir = source_dir;
    const auto& schema = config_schema();
    std::vector<std::string> seen;
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string line = detail::trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw kam_error(failure::config, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw kam_error(failure::config, "line " + std::to_string(lineno) + ": missing key");
        auto it = std::find_if(schema.begin(), schema.end(), [&](const config_key& k) { return k.name == key; });
        if (it == schema.end()) throw kam_error(failure::config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw kam_error(failure::config, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        seen.push_back(key);
        try {
            it->set(c, value);
        } catch (const kam_error& e) {
            std::string msg = e.what();
            throw kam_error(failure::config, "line " + std::to_string(lineno) + ": " + msg.substr(msg.find(": ") + 2));
        }
    }
    if (std::find(seen.begin(), seen.end(), "schema_version") == seen.end())
        throw kam_error(failure::config, "missing required key 'schema_version'");
    c.lattice.epsilon = c.epsilon;
    c.lattice = with_defaults(c.lattice);
    validate(c);
    try {
        validate(c.lattice);
    } catch (const kam_error& e) {
        throw kam_error(failure::config, std::string(e.what()));
    }
    return c;
}

inline run_config parse_config_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline run_config parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw kam_error(failure::io, "cannot read config " + path.string());
    return parse_config(in, path.parent_path());
}

// Resolved value of every key, one "key = value" line each, in schema order.
inline void write_config(std::ostream& os, const run_config& c) {
    for (const auto& k : config_schema()) os << k.name << " = " << k.get(c) << '\n';
}

inline void write_schema(std::ostream& os) {
    for (const auto& k : config_schema()) os << k.name << " (" << k.type << ", default " << k.fallback << "): " << k.doc << '\n';
}

}  // namespace kamforge

#endif
