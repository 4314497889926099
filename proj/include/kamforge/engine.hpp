#ifndef KAMFORGE_ENGINE_HPP
#define KAMFORGE_ENGINE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <optional>
#include <string>
#include <vector>

#include "degree.hpp"
#include "errors.hpp"
#include "homological.hpp"
#include "normal_form.hpp"
#include "norms.hpp"
#include "series.hpp"

namespace kamforge {

struct structural_constants {
    int L = 2;
    int m = 5;
    int a = 2;
    int mu = 8;
    double Xi = 0;
    double tau = 1;
    double d = 2;
    double delta = 0;
    int n = 1;
    int b = 1;
    int J = 0;

    // (2b)^(m+2)
    double E() const { return std::pow(2.0 * b, m + 2); }
    double theorem_exponent() const { return 3.0 * m / (32.0 * mu * (m + 1) * (m - a) * (tau + 1)); }
    double theorem_exponent_xi() const { return 3.0 * m / (4.0 * Xi); }
};

inline int minimal_m(int L) { return static_cast<int>(std::ceil(L + std::sqrt(4.0 * L * L + 2.0 * L) / 2.0)); }

inline int domain_exponent(int m) { return (m + 1) % 3 ? (m + 1) / 3 + 1 : (m + 1) / 3; }

inline int schedule_mu(int m) {
    const double q = 1.0 + 1.0 / (2.0 * m);
    int mu = 1;
    double v = q;
    while (v < 2.0) {
        v *= q;
        ++mu;
    }
    return mu;
}

// m_override = 0 selects the smallest admissible m.
inline structural_constants make_constants(int L, int n, int b, int J, double tau, double d, double delta, int m_override = 0) {
    if (L < 2) throw kam_error(failure::domain, "convexity exponent L must be >= 2");
    if (tau < n - 1) throw kam_error(failure::domain, "tau must be >= n - 1");
    structural_constants c;
    c.L = L;
    c.n = n;
    c.b = b;
    c.J = J;
    c.tau = tau;
    c.d = d;
    c.delta = delta;
    int mmin = minimal_m(L);
    if (m_override && m_override < mmin)
        throw kam_error(failure::domain, "m = " + std::to_string(m_override) + " below the admissible minimum " + std::to_string(mmin));
    c.m = m_override ? m_override : mmin;
    c.a = domain_exponent(c.m);
    c.mu = schedule_mu(c.m);
    c.Xi = 8.0 * c.mu * (c.m + 1) * (c.m - c.a) * (tau + 1);
    return c;
}

// Step geometry; K is the cutoff used by this step's truncation.
struct step_params {
    int nu = 0;
    double s = 0;
    double r = 0;
    double eta = 0;
    double gamma = 0;
    double rho = 0;
    double sigma = 0;
    double M = 0;
    double K = 0;
};

struct schedule {
    structural_constants c;
    double epsilon = 0;
    double s0 = 1, rho0 = 0.08, sigma0 = 1, M0 = 1;
    double gamma0 = 0, eta0 = 0, r0 = 0;
    step_params first;

    // ([log(1/eta^(m+1))] + 1)^(3 mu)
    double cutoff_after(double eta) const {
        double base = std::floor(-(c.m + 1) * std::log(eta)) + 1.0;
        return std::pow(base, 3.0 * c.mu);
    }

    step_params next(const step_params& p) const {
        step_params q;
        q.nu = p.nu + 1;
        q.eta = std::pow(p.eta, 1.0 + 1.0 / (2.0 * c.m));
        q.r = p.eta * p.r;
        q.rho = p.rho / 2;
        q.s = p.s - 6 * p.rho;
        q.gamma = p.gamma / 2 + gamma0 / 4;
        q.sigma = p.sigma / 2 + sigma0 / 4;
        q.M = M0 * (2.0 - std::pow(2.0, -q.nu));
        q.K = cutoff_after(q.eta);
        if (!(q.s > 0)) throw kam_error(failure::strip_exhausted, "analyticity strip exhausted at step " + std::to_string(q.nu));
        return q;
    }

    std::vector<step_params> sequence(int nu_max) const {
        std::vector<step_params> out{first};
        for (int v = 1; v <= nu_max; ++v) out.push_back(next(out.back()));
        return out;
    }

    double eta_closed(int nu) const { return std::pow(eta0, std::pow(1.0 + 1.0 / (2.0 * c.m), nu)); }
    // r_nu = r0 eta0^(2m((1+1/2m)^nu - 1)); equals the literal form below when r0 = eta0^m
    double r_closed(int nu) const {
        return r0 * std::pow(eta0, 2.0 * c.m * (std::pow(1.0 + 1.0 / (2.0 * c.m), nu) - 1.0));
    }
    double r_closed_literal(int nu) const {
        return std::pow(eta0, 2.0 * c.m * (std::pow(1.0 + 1.0 / (2.0 * c.m), nu) - 1.0) + c.m);
    }
    double gamma_closed(int nu) const { return gamma0 * (0.5 + std::pow(2.0, -(nu + 1))); }

    // log of gamma^(2E) r^(m-a) eta^m
    double log_bound(const step_params& p) const {
        return 2.0 * c.E() * std::log(p.gamma) + (c.m - c.a) * std::log(p.r) + c.m * std::log(p.eta);
    }
    double lambda(const step_params& p) const { return 0.5 * std::exp(c.E() * std::log(p.gamma)) / p.M; }
};

inline schedule make_schedule(const structural_constants& c, double epsilon, double s0, double rho0, double sigma0 = 1.0,
                              double M0 = 1.0) {
    if (!(epsilon > 0 && epsilon < 1)) throw kam_error(failure::domain, "schedule requires 0 < epsilon < 1");
    if (!(s0 > 0 && rho0 > 0 && rho0 < s0 / 6)) throw kam_error(failure::domain, "schedule requires 0 < rho0 < s0/6");
    schedule s;
    s.c = c;
    s.epsilon = epsilon;
    s.s0 = s0;
    s.rho0 = rho0;
    s.sigma0 = sigma0;
    s.M0 = M0;
    const double E = c.E(), le = std::log(epsilon);
    double lg = le / (4.0 * E * c.Xi);
    s.gamma0 = std::exp(lg);
    s.eta0 = std::exp(2.0 * E * lg + le / c.Xi);
    double K1 = s.cutoff_after(s.eta0);
    s.r0 = s0 * s.gamma0 / std::pow(K1 + 1.0, c.tau + 1.0);
    s.first = {0, s0, s.r0, s.eta0, s.gamma0, rho0, sigma0, M0, K1};
    return s;
}

struct hypothesis_value {
    std::string name;
    double log_lhs = 0;
    double log_rhs = 0;
    bool pass = false;
};

struct hypothesis_report {
    std::array<hypothesis_value, 5> h;
    double log_A_rho = 0;
    bool all_pass() const {
        return std::all_of(h.begin(), h.end(), [](const hypothesis_value& v) { return v.pass; });
    }
    std::string failed() const {
        std::string s;
        for (const auto& v : h)
            if (!v.pass) s += (s.empty() ? "" : ",") + v.name;
        return s;
    }
};

namespace detail {

inline double log_sum_exp(std::initializer_list<double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace detail

// All comparisons in log space; the unspecified constants c in H5 are taken as 1.
inline hypothesis_report check_hypotheses(const structural_constants& c, const step_params& cur, const step_params& nxt,
                                          const std::vector<int>& w_sites, int lmax = 2) {
    hypothesis_report rep;
    const double Kp = cur.K, m = c.m, a = c.a;
    const double lr = std::log(cur.r), le = std::log(cur.eta), lrho = std::log(cur.rho);
    a_rho_inputs in;
    in.n = c.n;
    in.b = c.b;
    in.J = c.J;
    in.m = c.m;
    in.lmax = lmax;
    in.K = Kp;
    in.rho = cur.rho;
    in.tau = c.tau;
    in.d = c.d;
    in.w_sites = w_sites;
    double lA = std::numeric_limits<double>::quiet_NaN();
    try {
        lA = log_A_rho(in);
    } catch (const kam_error& e) {
        if (e.kind() != failure::unsupported) throw;
    }
    rep.log_A_rho = lA;
    auto set = [](hypothesis_value& h, const char* name, double l, double r, bool strict) {
        h.name = name;
        h.log_lhs = l;
        h.log_rhs = r;
        h.pass = strict ? l < r : l <= r;
    };
    set(rep.h[0], "H1", c.n * std::log(Kp) - Kp * cur.rho, (m + 1) * le, true);
    double gap = cur.gamma - nxt.gamma;
    set(rep.h[1], "H2", std::log(8.0) + lr, (gap > 0 ? std::log(gap) : -INFINITY) - (c.tau + 1) * std::log(Kp + 1), true);
    set(rep.h[2], "H3", lA + (m - 1) * lr + m * le, lrho, true);
    set(rep.h[3], "H4", lA + (m - 2 * a) * lr + (m - a) * le, 0.0, true);
    double E = c.E();
    double t1 = 2 * lA - 2 * lrho + (m - 2 * a) * lr - 0.5 * le;
    double t2 = 0.5 * le + E * std::log(cur.gamma);
    double t3 = lA - lrho + 1.5 * le;
    set(rep.h[4], "H5", detail::log_sum_exp({t1, t2, t3}), 2 * E * std::log(nxt.gamma), false);
    return rep;
}

struct resonance_hit {
    std::vector<int> k;
    std::vector<int> l;
    double divisor = 0;
    double threshold = 0;
};

struct membership {
    bool member = true;
    std::vector<resonance_hit> failing;
};

namespace detail {

inline void for_each_k(int n, int K, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> k(n, 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == n) {
            visit(k);
            return;
        }
        for (int v = -left; v <= left; ++v) {
            k[pos] = v;
            rec(pos + 1, left - std::abs(v));
        }
        k[pos] = 0;
    };
    rec(0, K);
}

}  // namespace detail

// Every (k, l) with |k| <= K, |l| <= 2, (k,l) != 0 checked against the Diophantine lower bound.
inline membership resonance_membership(const std::vector<double>& omega, const std::vector<double>& Omega, double gamma,
                                       double K, const diophantine& dio, const std::vector<int>& w_sites) {
    if (K > 400) throw kam_error(failure::unsupported, "resonance enumeration beyond |k| <= 400");
    const int n = static_cast<int>(omega.size()), J = static_cast<int>(Omega.size());
    const int Ki = static_cast<int>(std::floor(K));
    diophantine dd = dio;
    dd.gamma = gamma;
    membership out;
    std::vector<std::vector<int>> ls;
    detail::for_each_k(J, 2, [&](const std::vector<int>& l) { ls.push_back(l); });
    detail::for_each_k(n, Ki, [&](const std::vector<int>& k) {
        for (const auto& l : ls) {
            bool zero = std::all_of(k.begin(), k.end(), [](int v) { return v == 0; }) &&
                        std::all_of(l.begin(), l.end(), [](int v) { return v == 0; });
            if (zero) continue;
            auto dv = small_divisor_ok(k, l, omega, Omega, w_sites, dd);
            if (!dv.ok) {
                out.member = false;
                out.failing.push_back({k, l, dv.divisor, dv.threshold});
            }
        }
    });
    return out;
}

// Sup-norm majorant on D(s, r): |y| < r^2, |z| < r, |w| < r^a_exp.
inline double sup_majorant(const series& a, double r, double s, double a_exp) {
    const dims& d = a.shape();
    double lr = std::log(r), tot = 0;
    for (const auto& [x, c] : a.terms())
        tot += std::exp(std::log(std::abs(c)) + k_norm(x, d) * s + lr * (grade(x, d) + a_exp * w_degree(x, d)));
    return tot;
}

inline int k_extent(const series& a) {
    int k = 0;
    for (const auto& [x, c] : a.terms()) k = std::max(k, k_norm(x, a.shape()));
    return k;
}

struct lie_result {
    series H;
    series overflow;
    std::vector<double> increments;
    int terms = 0;
    double overflow_norm = 0;  // majorant of the overflow when streamed, else 0
};

// H o phi_F^1 = sum_k ad_F^k H / k!, ad_F G = {G, F}, each bracket capped at `cap`.
inline lie_result lie_transform(const series& H, const series& F, const grading& cap, double r, double s, double a_exp,
                                int max_terms = 40, double rel_tol = 1e-16,
                                const weighted_norm* overflow_norm = nullptr) {
    const dims& d = H.shape();
    lie_result out;
    out.H = H;
    out.overflow = series(d);
    if (F.empty()) return out;
    std::optional<vf_majorant> acc;
    if (overflow_norm) acc.emplace(d, *overflow_norm);
    double scale = 1;
    overflow_sink sink = [&](const mono& m, double v) { acc->add(m, scale * v); };
    series term = H;
    double running = sup_majorant(H, r, s, a_exp);
    for (int k = 1; k <= max_terms; ++k) {
        scale = 1.0 / k;
        auto br = poisson_bracket(term, F, cap, part_all, acc ? &sink : nullptr);
        term = scale * br.kept;
        if (!acc) out.overflow += scale * br.overflow;
        double inc = sup_majorant(term, r, s, a_exp);
        out.increments.push_back(inc);
        out.terms = k;
        if (acc) out.overflow_norm = acc->parts().total();
        if (inc == 0 || inc <= rel_tol * running) {
            out.H += term;
            return out;
        }
        const std::size_t q = out.increments.size();
        if (q > 3 && inc >= out.increments[q - 2])
            throw kam_error(failure::divergence, "Lie series increments stopped decreasing at term " + std::to_string(k));
        out.H += term;
        running = sup_majorant(out.H, r, s, a_exp);
    }
    throw kam_error(failure::divergence, "Lie series did not converge within " + std::to_string(max_terms) + " terms");
}

// Coordinate functions used by the symplecticity check.
struct coordinate {
    enum kind_t { x, y, z, w, wb } kind;
    int index;
};

namespace detail {

inline series coordinate_series(const dims& d, const coordinate& c) {
    std::vector<int> i, j, l1, l2;
    switch (c.kind) {
    case coordinate::y: i.assign(d.n, 0); i[c.index] = 1; break;
    case coordinate::z: j.assign(2 * d.b, 0); j[c.index] = 1; break;
    case coordinate::w: l1.assign(d.J, 0); l1[c.index] = 1; break;
    case coordinate::wb: l2.assign(d.J, 0); l2[c.index] = 1; break;
    default: throw kam_error(failure::domain, "x has no series form");
    }
    return series(d, make_mono(d, {}, i, j, l1, l2), 1.0);
}

// {c, G} with c a coordinate function.
inline series bracket_coord_left(const coordinate& c, const series& G) {
    if (c.kind == coordinate::x) return d_dy(G, c.index);
    if (c.kind == coordinate::y) return -d_dx(G, c.index);
    return poisson_bracket(coordinate_series(G.shape(), c), G);
}

}  // namespace detail

// c o phi - c as a Lie series.
inline series coordinate_image(const coordinate& c, const series& F, const grading& cap, double r, double s, double a_exp,
                               int max_terms = 40, double rel_tol = 1e-18) {
    series u = detail::bracket_coord_left(c, F);
    series sum = u, term = u;
    double scale = std::max(sup_majorant(u, r, s, a_exp), 1e-300);
    for (int k = 2; k <= max_terms && !term.empty(); ++k) {
        term = (1.0 / k) * poisson_bracket(term, F, cap, part_all).kept;
        sum += term;
        if (sup_majorant(term, r, s, a_exp) <= rel_tol * scale) break;
    }
    return sum;
}

namespace detail {

inline cplx bracket_at(const phase_point& a, const phase_point& b) {
    const cplx I(0, 1);
    cplx v{};
    for (std::size_t q = 0; q < a.x.size(); ++q) v += -a.y[q] * b.x[q] + a.x[q] * b.y[q];
    const std::size_t nb = a.z.size() / 2;
    for (std::size_t q = 0; q < nb; ++q) v += a.z[q] * b.z[nb + q] - a.z[nb + q] * b.z[q];
    for (std::size_t q = 0; q < a.w.size(); ++q) v += -I * a.wb[q] * b.w[q] + I * a.w[q] * b.wb[q];
    return v;
}

inline void unit_gradient(phase_point& g, const coordinate& c) {
    switch (c.kind) {
    case coordinate::x: g.x[c.index] += 1.0; break;
    case coordinate::y: g.y[c.index] += 1.0; break;
    case coordinate::z: g.z[c.index] += 1.0; break;
    case coordinate::w: g.w[c.index] += 1.0; break;
    case coordinate::wb: g.wb[c.index] += 1.0; break;
    }
}

}  // namespace detail

// Largest |{c o phi, c' o phi} - {c, c'}| over canonical coordinate pairs, sampled on real points of D(s, r);
// c o phi is the Lie series of c truncated at `cap`.
inline double symplecticity_defect(const series& F, const grading& cap, double r, double s, double a_exp, int samples = 64,
                                   unsigned seed = 7) {
    const dims& d = F.shape();
    std::vector<coordinate> cs;
    for (int q = 0; q < d.n; ++q) cs.push_back({coordinate::x, q});
    for (int q = 0; q < d.n; ++q) cs.push_back({coordinate::y, q});
    for (int q = 0; q < 2 * d.b; ++q) cs.push_back({coordinate::z, q});
    for (int q = 0; q < d.J; ++q) cs.push_back({coordinate::w, q});
    for (int q = 0; q < d.J; ++q) cs.push_back({coordinate::wb, q});
    std::vector<series> img;
    for (const auto& c : cs) img.push_back(coordinate_image(c, F, cap, r, s, a_exp));
    std::vector<phase_point> unit;
    for (const auto& c : cs) {
        phase_point u = phase_point::zeros(d);
        detail::unit_gradient(u, c);
        unit.push_back(u);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const double rw = std::pow(r, a_exp);
    double worst = 0;
    for (int t = 0; t < samples; ++t) {
        phase_point pt = phase_point::zeros(d);
        for (int q = 0; q < d.n; ++q) {
            pt.x[q] = std::numbers::pi * U(rng);
            pt.y[q] = r * r * U(rng);
        }
        for (auto& v : pt.z) v = r * U(rng) / std::sqrt(double(2 * d.b));
        for (int q = 0; q < d.J; ++q) {
            pt.w[q] = rw * cplx(U(rng), U(rng)) / std::sqrt(2.0 * d.J);
            pt.wb[q] = std::conj(pt.w[q]);
        }
        std::vector<phase_point> g;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            phase_point gi = gradient_at(img[i], pt);
            detail::unit_gradient(gi, cs[i]);
            g.push_back(gi);
        }
        for (std::size_t i = 0; i < cs.size(); ++i)
            for (std::size_t j = i + 1; j < cs.size(); ++j) {
                cplx v = detail::bracket_at(g[i], g[j]) - detail::bracket_at(unit[i], unit[j]);
                worst = std::max(worst, std::abs(v));
            }
    }
    return worst;
}

struct routed_form {
    normal_form N;
    series extra;
};

// Splits a series into normal-form pieces; what fits no class goes to `extra`.
inline routed_form route(const series& S, int m) {
    const dims& d = S.shape();
    routed_form out{normal_form(d), series(d)};
    const cplx I(0, 1);
    for (const auto& [x, c] : S.terms()) {
        if (k_is_zero(x, d) && grade(x, d) == 0 && w_degree(x, d) == 0) {
            out.N.e += c.real();
            if (c.imag() != 0) out.extra.add_term(x, I * c.imag());
            continue;
        }
        if (k_is_zero(x, d) && y_degree(x, d) == 1 && z_degree(x, d) == 0 && w_degree(x, d) == 0) {
            int q = 0;
            while (x.e[d.oy() + q] == 0) ++q;
            out.N.omega[q] += c.real();
            if (c.imag() != 0) out.extra.add_term(x, I * c.imag());
            continue;
        }
        if (k_is_zero(x, d) && grade(x, d) == 0 && w_degree(x, d) == 2) {
            int mode = single_balanced_mode(x, d);
            if (mode >= 0) {
                out.N.Omega[mode] += c.real();
                if (c.imag() != 0) out.extra.add_term(x, I * c.imag());
                continue;
            }
        }
        if (is_pure_z(x, d)) {
            out.N.g.add_term(x, c);
            continue;
        }
        if (in_f_classes(x, d, m)) {
            out.N.f.add_term(x, c);
            continue;
        }
        out.extra.add_term(x, c);
    }
    return out;
}

inline std::vector<cplx> to_complex(const vec& v) {
    std::vector<cplx> out(v.size());
    for (int q = 0; q < v.size(); ++q) out[q] = v[q];
    return out;
}

// Real gradient in z of a series restricted to x = 0, y = 0, w = 0.
inline vecfn z_gradient(const series& G) {
    const dims& d = G.shape();
    std::vector<series> parts;
    series pure = G.filtered([&](const mono& x) { return is_pure_z(x, d); });
    for (int q = 0; q < 2 * d.b; ++q) parts.push_back(d_dz(pure, q));
    return [parts, d](const vec& u) {
        phase_point pt = phase_point::zeros(d);
        for (int q = 0; q < 2 * d.b; ++q) pt.z[q] = u[q];
        vec g(2 * d.b);
        for (int q = 0; q < 2 * d.b; ++q) g[q] = evaluate(parts[q], pt).real();
        return g;
    };
}

enum class hypothesis_policy { halt, record };

struct engine_config {
    structural_constants consts;
    double epsilon = 0;
    double s0 = 1.0;
    double rho0 = 0.08;
    double sigma0 = 1.0;
    double M0 = 1.0;
    weighted_norm norm;  // a, p, p_bar and sites; r, s, a_exp are set per step
    int lmax = 2;
    int m_cap = 0;       // 0 means m
    int K_cap_max = 8;
    int nu_max = 10;
    double stop_norm = 1e-14;
    double homological_tol = 1e-9;
    int lie_max_terms = 40;
    double lie_rel_tol = 1e-16;
    hypothesis_policy policy = hypothesis_policy::halt;
};

inline weighted_norm norm_at(const engine_config& cfg, double r, double s) {
    weighted_norm w = cfg.norm;
    w.r = std::min(r, 1.0);
    w.s = std::min(s, 1.0);
    w.a_exp = cfg.consts.a;
    return w;
}

struct kam_state {
    step_params par;
    normal_form N;
    series P;
    std::vector<double> zeta;
};

struct step_record {
    int nu = 0;
    step_params par;
    hypothesis_report hyp;
    bool hypotheses_ok = false;
    double norm_P = 0;
    double bound_P = 0;
    double norm_R = 0;
    double residual = 0;
    double norm_F = 0;
    int lie_terms = 0;
    double lie_overflow = 0;
    double norm_P_next = 0;
    double bound_P_next = 0;
    bool bound_ok = false;
    std::vector<double> omega, Omega, zeta;
    double grad_g0 = 0;
    double zeta_step = 0;
    double zeta_radius = 0;
    double freq_drift = 0;
    double drift_ratio = 0;
    double phi_minus_id = 0;
    double phi_bound = 0;
    double bookkeeping = 0;
    int equilibrium_roots = 0;
};

inline double weighted_Omega_drift(const std::vector<double>& a, const std::vector<double>& b, const std::vector<int>& sites,
                                   double delta) {
    double s = 0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        double j = q < sites.size() ? sites[q] : double(q + 1);
        s = std::max(s, std::abs(a[q] - b[q]) * std::pow(j, -delta));
    }
    return s;
}

inline double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t q = 0; q < a.size(); ++q) s = std::max(s, std::abs(a[q] - b[q]));
    return s;
}

struct step_result {
    kam_state next;
    step_record rec;
};

// truncate -> solve -> Lie transform -> equilibrium -> translate -> route.
inline step_result kam_step(const kam_state& st, const schedule& sch, const engine_config& cfg) {
    const structural_constants& c = cfg.consts;
    const dims& d = st.N.d;
    const step_params& cur = st.par;
    step_params nxt = sch.next(cur);
    step_record rec;
    rec.nu = cur.nu;
    rec.par = cur;
    rec.hyp = check_hypotheses(c, cur, nxt, cfg.norm.w_sites, cfg.lmax);
    rec.hypotheses_ok = rec.hyp.all_pass();
    weighted_norm ncur = norm_at(cfg, cur.r, cur.s), nnext = norm_at(cfg, nxt.r, nxt.s);
    rec.norm_P = majorant_vf_norm(st.P, ncur);
    rec.bound_P = std::exp(sch.log_bound(cur));

    if (cur.K > 127) throw kam_error(failure::unsupported, "Fourier cutoff beyond the supported index range");
    const int Kt = static_cast<int>(std::floor(cur.K));
    diophantine dio{cur.gamma, c.tau, c.d, c.delta};
    auto mem = resonance_membership(st.N.omega, st.N.Omega, cur.gamma, Kt, dio, cfg.norm.w_sites);
    if (!mem.member) {
        const auto& h = mem.failing.front();
        throw kam_error(failure::resonance, "parameter leaves the non-resonant set at k=(" + format_vec(h.k) + ") l=(" +
                                                format_vec(h.l) + "), " + std::to_string(mem.failing.size()) + " failing pairs");
    }
    grading gr{Kt, c.m, cfg.lmax};
    series R = truncate(st.P, Kt, c.m, cfg.lmax).kept;
    auto sys = assemble(st.N, R, dio, gr, cfg.norm.w_sites);
    auto sol = solve(sys, ncur, cfg.homological_tol);
    rec.norm_R = sol.norm_R;
    rec.residual = sol.residual;
    rec.norm_F = majorant_vf_norm(sol.F, ncur);

    const int mc = cfg.m_cap ? cfg.m_cap : c.m;
    const int Kc = std::min(cfg.K_cap_max, std::max(k_extent(st.P), Kt) + Kt);
    grading cap{Kc, mc, cfg.lmax};
    series N0 = st.N.to_series();
    auto lie = lie_transform(N0 + st.P, sol.F, cap, cur.r, cur.s, c.a, cfg.lie_max_terms, cfg.lie_rel_tol, &nnext);
    rec.lie_terms = lie.terms;
    rec.lie_overflow = lie.overflow_norm;

    const series& Rres = sys.R_res;
    series Nbar = N0 + Rres;
    series rest = lie.H - Nbar;

    vec zeta(2 * d.b);
    for (int q = 0; q < 2 * d.b; ++q) zeta[q] = st.zeta[q];
    rec.zeta_radius = std::pow(std::pow(cur.r, c.m - 1) * std::pow(cur.eta, c.m), 1.0 / c.L);
    auto eq = find_equilibrium(z_gradient(st.N.g), z_gradient(Rres), zeta, rec.zeta_radius);
    rec.equilibrium_roots = eq.roots_found;
    vec h = eq.zeta_plus - zeta;
    rec.zeta_step = h.norm();
    auto hc = to_complex(h);

    auto rt = route(shift_z(Nbar, hc), c.m);
    step_result out;
    out.next.par = nxt;
    out.next.N = rt.N;
    out.next.P = shift_z(rest, hc) + rt.extra;
    out.next.zeta.resize(2 * d.b);
    for (int q = 0; q < 2 * d.b; ++q) out.next.zeta[q] = eq.zeta_plus[q];

    rec.norm_P_next = majorant_vf_norm(out.next.P, nnext) + rec.lie_overflow;
    rec.bound_P_next = std::exp(sch.log_bound(nxt));
    rec.bound_ok = rec.norm_P_next <= rec.bound_P_next;
    rec.omega = rt.N.omega;
    rec.Omega = rt.N.Omega;
    rec.zeta = out.next.zeta;
    rec.grad_g0 = z_gradient(rt.N.g)(vec::Zero(2 * d.b)).norm();
    rec.freq_drift = max_diff(rt.N.omega, st.N.omega) + weighted_Omega_drift(rt.N.Omega, st.N.Omega, cfg.norm.w_sites, c.delta);
    rec.drift_ratio = rec.norm_P > 0 ? rec.freq_drift / rec.norm_P : 0.0;
    rec.phi_minus_id = majorant_vf_norm(sol.F, nnext);
    rec.phi_bound = std::sqrt(std::pow(sch.eta0, 0.5 * c.m)) / std::pow(2.0, cur.nu);
    rec.bookkeeping = coefficient_distance(out.next.N.to_series() + out.next.P, shift_z(lie.H, hc));
    out.rec = rec;
    return out;
}

struct run_report {
    structural_constants consts;
    schedule sch;
    double epsilon = 0;
    double norm_P0 = 0;
    double bound_P0 = 0;
    bool smallness_ok = true;
    std::vector<step_record> steps;
    std::vector<double> omega0, omega_star, zeta_star;
    std::vector<double> omega_increments, zeta_increments;
    double omega_shift = 0;
    double theorem_exponent = 0;
    double theorem_exponent_xi = 0;
    double theorem_constant = 0;
    std::string status = "ok";
    std::optional<failure> fail;
    std::string message;
    normal_form N_final;
    series P_final;
};

inline run_report run(const normal_form& N0, const series& P0, const engine_config& cfg) {
    const structural_constants& c = cfg.consts;
    const dims& d = N0.d;
    run_report rep;
    rep.consts = c;
    rep.epsilon = cfg.epsilon;
    rep.omega0 = N0.omega;
    rep.omega_star = N0.omega;
    rep.zeta_star.assign(2 * d.b, 0.0);
    rep.N_final = N0;
    rep.P_final = P0;
    rep.theorem_exponent = c.theorem_exponent();
    rep.theorem_exponent_xi = c.theorem_exponent_xi();
    if (cfg.epsilon == 0 || P0.empty()) {
        rep.status = "trivial";
        return rep;
    }
    rep.sch = make_schedule(c, cfg.epsilon, cfg.s0, cfg.rho0, cfg.sigma0, cfg.M0);
    const schedule& sch = rep.sch;
    kam_state st{sch.first, N0, P0, std::vector<double>(2 * d.b, 0.0)};
    rep.norm_P0 = majorant_vf_norm(P0, norm_at(cfg, sch.first.r, sch.first.s));
    rep.bound_P0 = std::exp(sch.log_bound(sch.first));
    rep.smallness_ok = rep.norm_P0 <= rep.bound_P0;
    auto stop = [&](failure f, const std::string& msg) {
        rep.fail = f;
        rep.status = failure_name(f);
        rep.message = msg;
    };
    if (!rep.smallness_ok && cfg.policy == hypothesis_policy::halt) {
        stop(failure::smallness, "initial perturbation norm " + std::to_string(rep.norm_P0) + " exceeds " +
                                     std::to_string(rep.bound_P0) + " (ratio " + std::to_string(rep.norm_P0 / rep.bound_P0) + ")");
        return rep;
    }
    for (int v = 0; v < cfg.nu_max; ++v) {
        if (majorant_vf_norm(st.P, norm_at(cfg, st.par.r, st.par.s)) < cfg.stop_norm) {
            rep.status = "converged";
            break;
        }
        step_result sr;
        try {
            if (cfg.policy == hypothesis_policy::halt) {
                auto hyp = check_hypotheses(c, st.par, sch.next(st.par), cfg.norm.w_sites, cfg.lmax);
                if (!hyp.all_pass()) {
                    step_record r;
                    r.nu = st.par.nu;
                    r.par = st.par;
                    r.hyp = hyp;
                    r.norm_P = majorant_vf_norm(st.P, norm_at(cfg, st.par.r, st.par.s));
                    r.bound_P = std::exp(sch.log_bound(st.par));
                    rep.steps.push_back(r);
                    stop(failure::hypothesis, "hypotheses " + hyp.failed() + " fail at step " + std::to_string(r.nu));
                    break;
                }
            }
            sr = kam_step(st, sch, cfg);
        } catch (const kam_error& e) {
            stop(e.kind(), e.what());
            break;
        }
        const auto& r = sr.rec;
        rep.steps.push_back(r);
        rep.omega_increments.push_back(max_diff(sr.next.N.omega, st.N.omega));
        double dz = 0;
        for (int q = 0; q < 2 * d.b; ++q) dz = std::max(dz, std::abs(sr.next.zeta[q] - st.zeta[q]));
        rep.zeta_increments.push_back(dz);
        st = std::move(sr.next);
        if (cfg.policy == hypothesis_policy::halt && !r.bound_ok) {
            stop(failure::step_failed, "perturbation norm " + std::to_string(r.norm_P_next) + " above bound " +
                                           std::to_string(r.bound_P_next) + " after step " + std::to_string(r.nu));
            break;
        }
    }
    rep.N_final = st.N;
    rep.P_final = st.P;
    rep.omega_star = st.N.omega;
    rep.zeta_star = st.zeta;
    rep.omega_shift = max_diff(rep.omega_star, rep.omega0);
    rep.theorem_constant = rep.omega_shift / std::pow(cfg.epsilon, rep.theorem_exponent);
    return rep;
}

}  // namespace kamforge

#endif
