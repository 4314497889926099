#ifndef KAMFORGE_CLI_HPP
#define KAMFORGE_CLI_HPP

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "config.hpp"
#include "counterexample.hpp"
#include "engine.hpp"
#include "lattice.hpp"
#include "measure.hpp"

namespace kamforge {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;  // config, usage or invalid input
inline constexpr int resonance = 2;
inline constexpr int hypothesis = 3;
inline constexpr int equilibrium = 4;
inline constexpr int smallness = 5;
inline constexpr int solver = 6;
inline constexpr int step_failed = 7;
inline constexpr int divergence = 8;
inline constexpr int io = 9;
inline constexpr int blow_up = 10;
inline constexpr int strip_exhausted = 11;
inline constexpr int ill_posed_boundary = 12;
inline constexpr int unsupported = 13;
inline constexpr int structural = 14;
inline constexpr int selftest_failed = 15;
inline constexpr int internal = 16;
}  // namespace exit_code

inline int exit_code_for(failure f) {
    switch (f) {
    case failure::config:
    case failure::domain: return exit_code::usage;
    case failure::resonance: return exit_code::resonance;
    case failure::hypothesis: return exit_code::hypothesis;
    case failure::equilibrium: return exit_code::equilibrium;
    case failure::smallness: return exit_code::smallness;
    case failure::solver: return exit_code::solver;
    case failure::step_failed: return exit_code::step_failed;
    case failure::divergence: return exit_code::divergence;
    case failure::io: return exit_code::io;
    case failure::blow_up: return exit_code::blow_up;
    case failure::strip_exhausted: return exit_code::strip_exhausted;
    case failure::ill_posed_boundary: return exit_code::ill_posed_boundary;
    case failure::unsupported: return exit_code::unsupported;
    case failure::structural: return exit_code::structural;
    }
    return exit_code::internal;
}

struct cli_options {
    bool quiet = false;
};

struct problem_data {
    normal_form N;
    series P;
    std::vector<int> w_sites, z_sites;
};

// Blocks "g", "f" and "P" hold series lines "k | i | j | l1 | l2 | re | im" and end with "end".
// P is the unscaled perturbation; it is multiplied by epsilon on load.
inline problem_data read_normal_form_file(const std::filesystem::path& path, double epsilon) {
    std::ifstream in(path);
    if (!in) throw kam_error(failure::io, "cannot read normal form file " + path.string());
    problem_data out;
    std::optional<dims> d;
    std::string line, block;
    std::ostringstream body;
    int lineno = 0;
    auto numbers = [&](std::istringstream& ss) {
        std::vector<double> v;
        double x;
        while (ss >> x) v.push_back(x);
        return v;
    };
    auto need_dims = [&] {
        if (!d) throw kam_error(failure::config, path.string() + ":" + std::to_string(lineno) + ": dims must come first");
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (!block.empty()) {
            if (t != "end") {
                body << t << '\n';
                continue;
            }
            std::istringstream bs("# dims " + std::to_string(d->n) + ' ' + std::to_string(d->b) + ' ' + std::to_string(d->J) + '\n' +
                                  body.str());
            series s = read_text(bs);
            if (block == "g") out.N.g = s;
            if (block == "f") out.N.f = s;
            if (block == "P") out.P = epsilon * s;
            block.clear();
            body.str("");
            continue;
        }
        if (t.empty() || t[0] == '#') continue;
        std::istringstream ss(t);
        std::string tag;
        ss >> tag;
        if (tag == "dims") {
            dims dd;
            if (!(ss >> dd.n >> dd.b >> dd.J)) throw kam_error(failure::config, path.string() + ":" + std::to_string(lineno) + ": bad dims");
            d = dd;
            out.N = normal_form(dd);
            out.P = series(dd);
        } else if (tag == "e") {
            need_dims();
            auto v = numbers(ss);
            if (v.size() != 1) throw kam_error(failure::config, path.string() + ":" + std::to_string(lineno) + ": e takes one value");
            out.N.e = v[0];
        } else if (tag == "omega" || tag == "Omega") {
            need_dims();
            auto v = numbers(ss);
            if (static_cast<int>(v.size()) != (tag == "omega" ? d->n : d->J))
                throw kam_error(failure::config, path.string() + ":" + std::to_string(lineno) + ": wrong length for " + tag);
            (tag == "omega" ? out.N.omega : out.N.Omega) = v;
        } else if (tag == "w_sites" || tag == "z_sites") {
            need_dims();
            std::vector<int> v;
            int x;
            while (ss >> x) v.push_back(x);
            (tag == "w_sites" ? out.w_sites : out.z_sites) = v;
        } else if (tag == "g" || tag == "f" || tag == "P") {
            need_dims();
            block = tag;
        } else {
            throw kam_error(failure::config, path.string() + ":" + std::to_string(lineno) + ": unknown entry '" + tag + "'");
        }
    }
    if (!block.empty()) throw kam_error(failure::config, path.string() + ": block '" + block + "' is not closed");
    if (!d) throw kam_error(failure::config, path.string() + ": missing dims");
    if (out.w_sites.empty())
        for (int q = 0; q < d->J; ++q) out.w_sites.push_back(d->b + d->n + q + 1);
    if (out.z_sites.empty())
        for (int q = 0; q < d->b; ++q) out.z_sites.push_back(d->n + q + 1);
    return out;
}

inline problem_data load_problem(const run_config& c) {
    if (c.problem == "normal_form") return read_normal_form_file(c.source_dir / c.normal_form_file, c.epsilon);
    auto red = to_normal_coordinates(build_lattice(c.lattice), c.taylor_order);
    return {red.N, red.P, red.w_sites, red.z_sites};
}

inline engine_config make_engine_config(const run_config& c, const problem_data& p) {
    engine_config e;
    e.consts = make_constants(c.L, p.N.d.n, p.N.d.b, p.N.d.J, c.tau, c.d, c.delta, c.m);
    e.epsilon = c.epsilon;
    e.s0 = c.s0;
    e.rho0 = c.rho0;
    e.sigma0 = c.sigma0;
    e.M0 = c.M0;
    e.norm.a = c.weight_a;
    e.norm.p = c.weight_p;
    e.norm.p_bar = c.weight_p_bar;
    e.norm.w_sites = p.w_sites;
    e.norm.z_sites = p.z_sites;
    e.lmax = c.lmax;
    e.K_cap_max = c.K_cap_max;
    e.nu_max = c.nu_max;
    e.policy = c.policy == "record" ? hypothesis_policy::record : hypothesis_policy::halt;
    return e;
}

namespace detail {

inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) throw kam_error(failure::io, "cannot write " + path.string());
}

inline nlohmann::json params_json(const step_params& p) {
    return {{"nu", p.nu}, {"s", p.s}, {"r", p.r}, {"eta", p.eta}, {"gamma", p.gamma}, {"rho", p.rho}, {"sigma", p.sigma}, {"K", p.K}};
}

}  // namespace detail

struct command_result {
    int code = exit_code::ok;
    nlohmann::json report;
    std::string summary;
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

inline std::string steps_csv(const run_report& rep) {
    using detail::g17;
    std::ostringstream os;
    os << "nu,K,r,s,eta,gamma,norm_P,bound_P,norm_P_next,bound_P_next,bound_ok,hypotheses_ok,failed_hypotheses,residual,norm_R,"
          "norm_F,lie_terms,lie_overflow,grad_g0,zeta_step,zeta_radius,freq_drift,drift_ratio,bookkeeping";
    const std::size_t n = rep.omega0.size();
    for (std::size_t q = 0; q < n; ++q) os << ",omega_" << q + 1;
    os << '\n';
    for (const auto& s : rep.steps) {
        std::string failed = s.hyp.failed();
        for (auto& ch : failed)
            if (ch == ',') ch = ';';
        os << s.nu << ',' << g17(s.par.K) << ',' << g17(s.par.r) << ',' << g17(s.par.s) << ',' << g17(s.par.eta) << ','
           << g17(s.par.gamma) << ',' << g17(s.norm_P) << ',' << g17(s.bound_P) << ',' << g17(s.norm_P_next) << ','
           << g17(s.bound_P_next) << ',' << s.bound_ok << ',' << s.hypotheses_ok << ',' << failed << ',' << g17(s.residual) << ','
           << g17(s.norm_R) << ',' << g17(s.norm_F) << ',' << s.lie_terms << ',' << g17(s.lie_overflow) << ',' << g17(s.grad_g0)
           << ',' << g17(s.zeta_step) << ',' << g17(s.zeta_radius) << ',' << g17(s.freq_drift) << ',' << g17(s.drift_ratio) << ','
           << g17(s.bookkeeping);
        for (std::size_t q = 0; q < n; ++q) os << ',' << g17(q < s.omega.size() ? s.omega[q] : 0.0);
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json run_report_json(const run_report& rep) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : rep.steps) {
        nlohmann::json hyp = nlohmann::json::array();
        for (const auto& h : s.hyp.h) hyp.push_back({{"name", h.name}, {"log_lhs", h.log_lhs}, {"log_rhs", h.log_rhs}, {"pass", h.pass}});
        steps.push_back({{"params", detail::params_json(s.par)},
                         {"hypotheses", hyp},
                         {"hypotheses_ok", s.hypotheses_ok},
                         {"norm_P", s.norm_P},
                         {"bound_P", s.bound_P},
                         {"norm_R", s.norm_R},
                         {"residual", s.residual},
                         {"norm_F", s.norm_F},
                         {"lie_terms", s.lie_terms},
                         {"lie_overflow", s.lie_overflow},
                         {"norm_P_next", s.norm_P_next},
                         {"bound_P_next", s.bound_P_next},
                         {"bound_ok", s.bound_ok},
                         {"omega", s.omega},
                         {"Omega", s.Omega},
                         {"zeta", s.zeta},
                         {"grad_g0", s.grad_g0},
                         {"zeta_step", s.zeta_step},
                         {"zeta_radius", s.zeta_radius},
                         {"freq_drift", s.freq_drift},
                         {"drift_ratio", s.drift_ratio},
                         {"phi_minus_id", s.phi_minus_id},
                         {"phi_bound", s.phi_bound},
                         {"bookkeeping", s.bookkeeping},
                         {"equilibrium_roots", s.equilibrium_roots}});
    }
    const auto& c = rep.consts;
    return {{"status", rep.status},
            {"message", rep.message},
            {"epsilon", rep.epsilon},
            {"constants", {{"L", c.L}, {"m", c.m}, {"a", c.a}, {"mu", c.mu}, {"tau", c.tau}, {"d", c.d}, {"delta", c.delta}, {"n", c.n},
                           {"b", c.b}, {"J", c.J}, {"Xi", c.Xi}}},
            {"norm_P0", rep.norm_P0},
            {"bound_P0", rep.bound_P0},
            {"smallness_ok", rep.smallness_ok},
            {"steps", steps},
            {"omega0", rep.omega0},
            {"omega_star", rep.omega_star},
            {"zeta_star", rep.zeta_star},
            {"omega_shift", rep.omega_shift},
            {"theorem_exponent", rep.theorem_exponent},
            {"theorem_constant", rep.theorem_constant},
            {"final_terms", {{"f", rep.N_final.f.size()}, {"g", rep.N_final.g.size()}, {"P", rep.P_final.size()}}}};
}

// Final system truncated at the grading of the last completed step.
inline series final_truncated_P(const run_report& rep, int lmax) {
    if (rep.steps.empty()) return rep.P_final;
    const auto& last = rep.steps.back().par;
    return truncate(rep.P_final, static_cast<int>(std::floor(last.K)), rep.consts.m, lmax).kept;
}

inline command_result execute_run(const run_config& c) {
    command_result out;
    auto prob = load_problem(c);
    auto ecfg = make_engine_config(c, prob);
    auto t0 = std::chrono::steady_clock::now();
    auto rep = run(prob.N, prob.P, ecfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.report = run_report_json(rep);
    out.report["elapsed_seconds"] = secs;
    out.files.push_back({"steps.csv", steps_csv(rep)});
    if (rep.fail) out.code = exit_code_for(*rep.fail);

    std::ostringstream sm;
    sm << "run: status " << rep.status << ", " << rep.steps.size() << " step(s), epsilon " << c.epsilon << '\n';
    if (!rep.message.empty()) sm << "  " << rep.message << '\n';
    if (rep.status != "trivial") {
        sm << "  |X_P0| = " << rep.norm_P0 << " against bound " << rep.bound_P0 << (rep.smallness_ok ? " (ok)" : " (exceeded)") << '\n';
        for (const auto& s : rep.steps)
            sm << "  step " << s.nu << ": |X_P| " << s.norm_P << " -> " << s.norm_P_next << ", bound " << s.bound_P_next
               << (s.bound_ok ? "" : " exceeded") << ", hypotheses " << (s.hypotheses_ok ? "pass" : "fail " + s.hyp.failed()) << '\n';
        sm << "  omega shift " << rep.omega_shift << ", constant " << rep.theorem_constant << " at exponent " << rep.theorem_exponent
           << '\n';
    }
    if (c.torus && !rep.steps.empty() && !rep.fail) {
        double wmin = std::numeric_limits<double>::infinity();
        for (double w : rep.N_final.omega) wmin = std::min(wmin, std::abs(w));
        const double T = c.torus_periods * 2 * std::numbers::pi / wmin;
        series Pt = final_truncated_P(rep, c.lmax);
        auto tr = torus_diagnostic(rep.N_final, Pt, T, c.torus_dt);
        out.report["torus"] = {{"T", tr.T},           {"sup_y", tr.sup_y},     {"sup_z", tr.sup_z},
                               {"sup_w", tr.sup_w},   {"omega_fit", tr.omega_fit}, {"max_rel_freq_error", tr.max_rel_freq_error},
                               {"P_terms", Pt.size()}};
        sm << "  torus: sup|y| " << tr.sup_y << ", |z| " << tr.sup_z << ", |w| " << tr.sup_w << ", frequency error "
           << tr.max_rel_freq_error << '\n';
    }
    out.summary = sm.str();
    return out;
}

inline std::vector<std::pair<double, int>> shell_schedule(const run_config& c) {
    std::vector<std::pair<double, int>> s;
    double g = c.gamma0;
    for (int K : c.K_ladder) {
        s.push_back({g, K});
        g = g / 2 + c.gamma0 / 4;
    }
    return s;
}

inline command_result execute_measure(const run_config& c) {
    using detail::g17;
    command_result out;
    auto box = lattice_box(c.lattice, c.xi_lo, c.xi_hi, c.xi_samples);
    box.seed = c.seed;
    box.grid = c.xi_grid;
    box.threads = c.threads;
    std::vector<fraction_estimate> rows;
    bool monotone = true;
    for (double g : c.gamma_grid) {
        rows.push_back(excluded_fraction(box, g, c.tau, c.measure_K, c.d));
        if (rows.size() > 1) {
            const auto& a = rows[rows.size() - 2].p;
            const auto& b = rows.back().p;
            if (g >= rows[rows.size() - 2].gamma && b.ci_hi < a.ci_lo) monotone = false;
        }
    }
    std::ostringstream fc;
    write_fraction_csv(fc, rows);
    out.files.push_back({"measure.csv", fc.str()});

    auto loss = stepwise_loss(box, shell_schedule(c), c.gamma0, c.tau, c.d);
    std::ostringstream sc;
    sc << "nu,K_prev,K,gamma,fraction,ci_lo,ci_hi,measure,envelope,within\n";
    for (const auto& s : loss.shells)
        sc << s.nu << ',' << s.K_prev << ',' << s.K << ',' << g17(s.gamma) << ',' << g17(s.p.fraction) << ',' << g17(s.p.ci_lo) << ','
           << g17(s.p.ci_hi) << ',' << g17(s.measure) << ',' << g17(s.envelope) << ',' << s.within << '\n';
    out.files.push_back({"shells.csv", sc.str()});

    nlohmann::json fr = nlohmann::json::array(), sh = nlohmann::json::array();
    for (const auto& r : rows)
        fr.push_back({{"gamma", r.gamma}, {"K", r.K}, {"fraction", r.p.fraction}, {"ci_lo", r.p.ci_lo}, {"ci_hi", r.p.ci_hi}});
    for (const auto& s : loss.shells)
        sh.push_back({{"nu", s.nu}, {"K_prev", s.K_prev}, {"K", s.K}, {"gamma", s.gamma}, {"measure", s.measure}, {"envelope", s.envelope},
                      {"within", s.within}});
    out.report = {{"status", "ok"},  {"samples", box.samples}, {"box", {c.xi_lo, c.xi_hi}}, {"tau", c.tau}, {"d", c.d},
                  {"fractions", fr}, {"monotone", monotone}, {"shells", sh}, {"c_fit", loss.c_fit},
                  {"envelope_ok", loss.envelope_ok}, {"decreasing", loss.decreasing}};
    std::ostringstream sm;
    sm << "measure: " << box.samples << " samples on [" << c.xi_lo << ", " << c.xi_hi << "]^" << box.dim() << ", tau " << c.tau << '\n';
    for (const auto& r : rows) sm << "  gamma " << r.gamma << ": excluded " << r.p.fraction << " [" << r.p.ci_lo << ", " << r.p.ci_hi << "]\n";
    sm << "  monotone in gamma: " << (monotone ? "yes" : "no") << ", shell envelope: " << (loss.envelope_ok ? "ok" : "violated")
       << " (c = " << loss.c_fit << ")\n";
    out.summary = sm.str();
    return out;
}

inline command_result execute_lattice(const run_config& c) {
    command_result out;
    auto model = build_lattice(c.lattice);
    const auto& lc = model.cfg;
    const int N = model.size();
    std::vector<double> q(N, 0.0), p(N, 0.0);
    for (int j = 1; j <= lc.n1; ++j) q[j - 1] = std::sqrt(2 * lc.y_star[j - 1] / lc.alpha_of(j));
    auto tr = integrate_lattice(model, q, p, c.lattice_T, c.lattice_dt, c.lattice_record_every);
    std::ostringstream os;
    write_trajectory_csv(os, tr);
    out.files.push_back({"trajectory.csv", os.str()});
    auto red = to_normal_coordinates(model, c.taylor_order);
    weighted_norm nrm;
    nrm.w_sites = red.w_sites;
    nrm.z_sites = red.z_sites;
    nrm.r = std::min(1.0, c.s0);
    nrm.s = c.s0;
    out.report = {{"status", "ok"},
                  {"sites", N},
                  {"energy0", tr.energy0},
                  {"max_rel_energy_drift", tr.max_rel_drift},
                  {"records", tr.t.size()},
                  {"omega", red.N.omega},
                  {"Omega", red.N.Omega},
                  {"g_terms", red.N.g.size()},
                  {"P_terms", red.P.size()},
                  {"w_sites", red.w_sites},
                  {"z_sites", red.z_sites}};
    std::ostringstream sm;
    sm << "lattice: " << N << " sites, T " << c.lattice_T << ", relative energy drift " << tr.max_rel_drift << '\n';
    sm << "  reduced form: " << red.N.omega.size() << " tangent, " << red.N.d.b << " degenerate, " << red.N.Omega.size()
       << " normal modes, " << red.P.size() << " perturbation terms\n";
    out.summary = sm.str();
    return out;
}

inline command_result execute_counterexample(const run_config& c) {
    command_result out;
    counterexample_config cc{c.sigma_exp, c.ell_exp, reciprocal_grid(c.eps_lo, c.eps_hi, c.eps_count)};
    auto a0 = verify_A0_split(cc, 8, 2000, static_cast<unsigned>(c.seed));
    auto osc = equilibrium_oscillation(cc);
    std::ostringstream os;
    write_oscillation_csv(os, osc);
    out.files.push_back({"oscillation.csv", os.str()});
    out.report = {{"status", "ok"},
                  {"degree", a0.degree},
                  {"degree_fine", a0.degree_fine},
                  {"degree_nonzero", a0.degree_nonzero},
                  {"convexity_fails", a0.convexity_fails},
                  {"witness", {{"z", {a0.witness_z[0], a0.witness_z[1]}}, {"z_star", {a0.witness_z_star[0], a0.witness_z_star[1]}},
                               {"grad_gap", a0.witness_grad_gap}, {"distance", a0.witness_distance}}},
                  {"sampled_min_ratio", a0.sampled_min_ratio},
                  {"sign_changes", osc.sign_changes},
                  {"side_alternations", osc.side_alternations},
                  {"max_identity_error", osc.max_identity_error},
                  {"tail_ratio_spread", osc.tail_ratio_spread},
                  {"cauchy", osc.cauchy}};
    std::ostringstream sm;
    sm << "counterexample: degree " << a0.degree << " (fine " << a0.degree_fine << "), weak convexity "
       << (a0.convexity_fails ? "fails" : "holds") << " at z = (" << a0.witness_z[0] << ", " << a0.witness_z[1] << ")\n";
    sm << "  equilibrium sign changes " << osc.sign_changes << " on " << cc.eps_grid.size() << " points, identity error "
       << osc.max_identity_error << ", tail spread " << osc.tail_ratio_spread << '\n';
    out.summary = sm.str();
    return out;
}

inline series selftest_series(const dims& d, int nterms, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kd(-1, 1), ed(0, 1);
    std::uniform_real_distribution<double> cd(-1.0, 1.0);
    series s(d);
    for (int t = 0; t < nterms; ++t) {
        mono m;
        for (int q = 0; q < d.n; ++q) m.e[d.ox() + q] = static_cast<std::int8_t>(kd(rng));
        for (int q = d.n; q < d.len(); ++q) m.e[q] = static_cast<std::int8_t>(ed(rng));
        s.add_term(m, cplx(cd(rng), cd(rng)));
    }
    return s;
}

inline command_result execute_selftest(const run_config& c) {
    command_result out;
    std::mt19937_64 rng(c.seed);
    const dims d{2, 1, 1};
    nlohmann::json checks = nlohmann::json::array();
    std::ostringstream sm;
    bool all = true;
    auto record = [&](const std::string& name, double value, double tol) {
        bool pass = value <= tol;
        all = all && pass;
        checks.push_back({{"name", name}, {"value", value}, {"tolerance", tol}, {"pass", pass}});
        sm << (pass ? "PASS " : "FAIL ") << name << " (" << value << ")\n";
    };
    double anti = 0, jac = 0;
    for (int t = 0; t < 5; ++t) {
        series A = selftest_series(d, 6, rng), B = selftest_series(d, 6, rng), C = selftest_series(d, 6, rng);
        anti = std::max(anti, (poisson_bracket(A, B) + poisson_bracket(B, A)).max_abs());
        series j = poisson_bracket(poisson_bracket(A, B), C) + poisson_bracket(poisson_bracket(B, C), A) +
                   poisson_bracket(poisson_bracket(C, A), B);
        jac = std::max(jac, j.max_abs());
    }
    record("bracket antisymmetry", anti, 1e-12);
    record("Jacobi identity", jac, 1e-11);
    degree_problem id{[](const vec& z) { return z; }, symmetric_box(2, 1.0), vec(), 1e-9};
    record("degree of the identity", std::abs(brouwer_degree(id) - 1), 0);
    counterexample_config cc{1, 1, reciprocal_grid(1e-3, 1e-1, 400)};
    auto osc = equilibrium_oscillation(cc);
    record("counterexample sign changes >= 10", osc.sign_changes >= 10 ? 0.0 : 1.0, 0);
    auto w = wilson(30, 100);
    record("Wilson interval", std::abs(w.ci_lo - 0.21890) + std::abs(w.ci_hi - 0.39580), 2e-4);
    out.report = {{"status", all ? "ok" : "failed"}, {"checks", checks}};
    out.summary = sm.str();
    out.code = all ? exit_code::ok : exit_code::selftest_failed;
    return out;
}

inline command_result execute_command(const run_config& c) {
    if (c.command == "run") return execute_run(c);
    if (c.command == "measure") return execute_measure(c);
    if (c.command == "lattice") return execute_lattice(c);
    if (c.command == "counterexample") return execute_counterexample(c);
    if (c.command == "selftest") return execute_selftest(c);
    throw kam_error(failure::config, "unknown command '" + c.command + "'");
}

// Writes report.json, the CSV tables and summary.txt into c.out_dir; returns the exit code.
inline int execute(const run_config& c, const cli_options& opt = {}) {
    command_result res;
    try {
        res = execute_command(c);
    } catch (const kam_error& e) {
        res.code = exit_code_for(e.kind());
        res.report = {{"status", failure_name(e.kind())}, {"message", e.what()}};
        res.summary = std::string(c.command) + ": " + e.what() + '\n';
    }
    nlohmann::json echo = nlohmann::json::object();
    for (const auto& k : config_schema()) echo[k.name] = k.get(c);
    res.report["config"] = echo;
    res.report["command"] = c.command;
    res.report["seed"] = c.seed;
    res.report["exit_code"] = res.code;
    try {
        std::filesystem::create_directories(c.out_dir);
        const std::filesystem::path dir(c.out_dir);
        for (const auto& [name, text] : res.files) detail::write_file(dir / name, text);
        detail::write_file(dir / "report.json", res.report.dump(2) + '\n');
        detail::write_file(dir / "summary.txt", res.summary);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io: " << e.what() << '\n';
        return exit_code::io;
    } catch (const kam_error& e) {
        std::cerr << e.what() << '\n';
        return exit_code::io;
    }
    if (!opt.quiet) std::cout << res.summary;
    if (res.code != exit_code::ok && opt.quiet) std::cerr << res.summary;
    return res.code;
}

}  // namespace kamforge

#endif
