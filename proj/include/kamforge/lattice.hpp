#ifndef KAMFORGE_LATTICE_HPP
#define KAMFORGE_LATTICE_HPP

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "normal_form.hpp"
#include "series.hpp"

namespace kamforge {

// Sites 1..n1 are tangent, n1+1..n2 degenerate (Lambda), n2+1..n2+J normal. Free boundary after n2+J.
struct lattice_config {
    int n1 = 2;
    int n2 = 3;
    int J = 3;
    std::vector<double> alpha;         // tangent parameters, length n1
    std::vector<double> alpha_normal;  // length J; empty means alpha_j = j^2
    std::vector<double> beta;          // length n2 - n1; empty means all ones
    double epsilon = 0.0;
    double hertz_exp = 1.0;
    std::vector<double> y_star;        // length n1; empty means all ones

    int sites() const { return n2 + J; }
    int b() const { return n2 - n1; }
    bool degenerate(int j) const { return j > n1 && j <= n2; }
    double alpha_of(int j) const {
        if (j <= n1) return alpha[j - 1];
        return alpha_normal[j - n2 - 1];
    }
    double beta_of(int j) const { return beta[j - n1 - 1]; }
};

inline lattice_config with_defaults(lattice_config c) {
    if (c.alpha.empty()) {
        for (int j = 1; j <= c.n1; ++j) c.alpha.push_back(1.0 + (j - 1) / std::numbers::phi);
    }
    if (c.alpha_normal.empty())
        for (int j = c.n2 + 1; j <= c.n2 + c.J; ++j) c.alpha_normal.push_back(double(j) * j);
    if (c.beta.empty()) c.beta.assign(c.b(), 1.0);
    if (c.y_star.empty()) c.y_star.assign(c.n1, 1.0);
    return c;
}

inline void validate(const lattice_config& c) {
    if (c.n1 < 1 || c.n2 < c.n1 || c.J < 0) throw kam_error(failure::domain, "lattice requires n1 >= 1, n2 >= n1, J >= 0");
    if (c.hertz_exp != 1.0)
        throw kam_error(failure::unsupported, "hertz_exp must be 1 (the coupling is not analytic at the origin otherwise)");
    if (static_cast<int>(c.alpha.size()) != c.n1 || static_cast<int>(c.alpha_normal.size()) != c.J ||
        static_cast<int>(c.beta.size()) != c.b() || static_cast<int>(c.y_star.size()) != c.n1)
        throw kam_error(failure::domain, "lattice parameter vector lengths do not match n1, n2, J");
    for (double a : c.alpha)
        if (!(a > 0)) throw kam_error(failure::domain, "invalid frequency: alpha must be positive");
    for (double a : c.alpha_normal)
        if (!(a > 0)) throw kam_error(failure::domain, "invalid frequency: alpha must be positive");
    for (double b : c.beta)
        if (b == 0) throw kam_error(failure::domain, "beta must be nonzero on degenerate sites");
    for (double y : c.y_star)
        if (!(y > 0)) throw kam_error(failure::domain, "y_star must be positive");
}

// Real polynomial in (q_1..q_N, p_1..p_N).
using qp_poly = std::map<std::vector<int>, double>;

struct lattice_model {
    lattice_config cfg;

    int size() const { return cfg.sites(); }

    double site_energy(int j, double q, double p) const {
        if (cfg.degenerate(j)) return cfg.beta_of(j) * (q * q * q * q - 6 * q * q * p * p + p * p * p * p);
        double a = cfg.alpha_of(j);
        return 0.5 * a * a * q * q + 0.5 * p * p;
    }

    double coupling(const std::vector<double>& q) const {
        double s = 0;
        for (int j = 0; j + 1 < size(); ++j) s += 0.5 * (q[j + 1] - q[j]) * (q[j + 1] - q[j]);
        return s;
    }

    double energy(const std::vector<double>& q, const std::vector<double>& p) const {
        double s = 0;
        for (int j = 1; j <= size(); ++j) s += site_energy(j, q[j - 1], p[j - 1]);
        return s + cfg.epsilon * coupling(q);
    }

    // dV/dq of the coupling only.
    std::vector<double> coupling_gradient(const std::vector<double>& q) const {
        std::vector<double> g(size(), 0.0);
        for (int j = 0; j + 1 < size(); ++j) {
            double d = q[j + 1] - q[j];
            g[j + 1] += d;
            g[j] -= d;
        }
        return g;
    }

    qp_poly polynomial() const {
        const int N = size();
        qp_poly P;
        auto mon = [&](std::initializer_list<std::pair<int, int>> f, double c) {
            std::vector<int> e(2 * N, 0);
            for (auto [slot, pw] : f) e[slot] += pw;
            P[e] += c;
        };
        for (int j = 1; j <= N; ++j) {
            int qs = j - 1, ps = N + j - 1;
            if (cfg.degenerate(j)) {
                double b = cfg.beta_of(j);
                mon({{qs, 4}}, b);
                mon({{qs, 2}, {ps, 2}}, -6 * b);
                mon({{ps, 4}}, b);
            } else {
                double a = cfg.alpha_of(j);
                mon({{qs, 2}}, 0.5 * a * a);
                mon({{ps, 2}}, 0.5);
            }
        }
        for (int j = 0; j + 1 < N; ++j) {
            mon({{j + 1, 2}}, 0.5 * cfg.epsilon);
            mon({{j, 2}}, 0.5 * cfg.epsilon);
            mon({{j, 1}, {j + 1, 1}}, -cfg.epsilon);
        }
        for (auto it = P.begin(); it != P.end();)
            it = it->second == 0 ? P.erase(it) : std::next(it);
        return P;
    }
};

inline lattice_model build_lattice(const lattice_config& cfg) {
    lattice_config c = with_defaults(cfg);
    validate(c);
    return {c};
}

inline double evaluate_poly(const qp_poly& P, const std::vector<double>& q, const std::vector<double>& p) {
    const std::size_t N = q.size();
    double s = 0;
    for (const auto& [e, c] : P) {
        double v = c;
        for (std::size_t t = 0; t < N; ++t) v *= std::pow(q[t], e[t]) * std::pow(p[t], e[N + t]);
        s += v;
    }
    return s;
}

struct reduced_hamiltonian {
    normal_form N;
    series P;                  // already multiplied by epsilon
    std::vector<int> w_sites;  // lattice site of each normal mode
    std::vector<int> z_sites;  // lattice site of each degenerate mode
};

namespace detail {

// Taylor coefficients of sqrt(y* + Y) up to Y^order.
inline std::vector<double> sqrt_taylor(double ystar, int order) {
    std::vector<double> c(order + 1);
    double binom = 1.0;
    for (int k = 0; k <= order; ++k) {
        c[k] = binom * std::sqrt(ystar) * std::pow(ystar, -k);
        binom *= (0.5 - k) / (k + 1);
    }
    return c;
}

}  // namespace detail

// q_j as a series for every site; tangent q_j uses the truncated sqrt expansion.
inline std::vector<series> site_q_series(const lattice_config& c, const dims& d, int taylor_order) {
    std::vector<series> q;
    for (int j = 1; j <= c.sites(); ++j) {
        series s(d);
        if (j <= c.n1) {
            int t = j - 1;
            auto tc = detail::sqrt_taylor(c.y_star[t], taylor_order);
            double pre = std::sqrt(2.0 / c.alpha_of(j));
            for (int k = 0; k <= taylor_order; ++k)
                for (int sg : {1, -1}) {
                    std::vector<int> kv(d.n, 0), iv(d.n, 0);
                    kv[t] = sg;
                    iv[t] = k;
                    s.add_term(make_mono(d, kv, iv), 0.5 * pre * tc[k]);
                }
        } else if (c.degenerate(j)) {
            int t = j - c.n1 - 1;
            std::vector<int> j1(2 * d.b, 0), j2(2 * d.b, 0);
            j1[t] = 1;
            j2[d.b + t] = 1;
            s.add_term(make_mono(d, {}, {}, j1), 0.5);
            s.add_term(make_mono(d, {}, {}, j2), 0.5);
        } else {
            int t = j - c.n2 - 1;
            std::vector<int> l(d.J, 0);
            l[t] = 1;
            double pre = 1.0 / std::sqrt(2.0 * c.alpha_of(j));
            s.add_term(make_mono(d, {}, {}, {}, l, {}), pre);
            s.add_term(make_mono(d, {}, {}, {}, {}, l), pre);
        }
        q.push_back(std::move(s));
    }
    return q;
}

// Exact q_j^2; the tangent square is (2/alpha)(y*+Y)cos^2 x without expanding sqrt.
inline series site_q_squared(const lattice_config& c, const dims& d, int j, const series& qj) {
    if (j > c.n1) return multiply(qj, qj);
    int t = j - 1;
    double pre = 2.0 / c.alpha_of(j);
    series s(d);
    for (int ydeg = 0; ydeg <= 1; ++ydeg) {
        double yc = ydeg ? 1.0 : c.y_star[t];
        std::vector<int> iv(d.n, 0);
        iv[t] = ydeg;
        for (int kk : {-2, 0, 2}) {
            std::vector<int> kv(d.n, 0);
            kv[t] = kk;
            s.add_term(make_mono(d, kv, iv), pre * yc * (kk == 0 ? 0.5 : 0.25));
        }
    }
    return s;
}

// Reduced Hamiltonian: y -> y* + y, tangent sqrt expanded to `taylor_order` in y.
inline reduced_hamiltonian to_normal_coordinates(const lattice_model& model, int taylor_order) {
    const lattice_config& c = model.cfg;
    if (taylor_order < 0) throw kam_error(failure::domain, "taylor order must be nonnegative");
    dims d{c.n1, c.b(), c.J};
    check_dims(d);
    reduced_hamiltonian out;
    out.N = normal_form(d);
    out.N.omega = c.alpha;
    out.N.Omega = c.alpha_normal;
    for (int j = 1; j <= c.n1; ++j) out.N.e += c.alpha_of(j) * c.y_star[j - 1];
    for (int t = 0; t < d.b; ++t) {
        std::vector<int> j1(2 * d.b, 0), j2(2 * d.b, 0);
        j1[t] = 4;
        j2[d.b + t] = 4;
        double b = c.beta[t];
        out.N.g.add_term(make_mono(d, {}, {}, j1), 0.5 * b);
        out.N.g.add_term(make_mono(d, {}, {}, j2), 0.5 * b);
        out.z_sites.push_back(c.n1 + 1 + t);
    }
    for (int t = 0; t < d.J; ++t) out.w_sites.push_back(c.n2 + 1 + t);

    auto q = site_q_series(c, d, taylor_order);
    series V(d);
    const int N = c.sites();
    for (int j = 1; j <= N; ++j) {
        int times = (j == 1 || j == N) ? 1 : 2;
        if (N == 1) times = 0;
        if (times) V += 0.5 * double(times) * site_q_squared(c, d, j, q[j - 1]);
    }
    for (int j = 1; j < N; ++j) V -= multiply(q[j - 1], q[j]);
    V = V.filtered([&](const mono& x) { return y_degree(x, d) <= std::max(taylor_order, 1); });
    out.P = c.epsilon * V;
    return out;
}

// Normal coordinates of a lattice point (q, p); y is measured from y*.
inline phase_point to_phase_point(const lattice_config& c, const std::vector<double>& q, const std::vector<double>& p) {
    dims d{c.n1, c.b(), c.J};
    phase_point pt = phase_point::zeros(d);
    const cplx I(0, 1);
    for (int j = 1; j <= c.sites(); ++j) {
        double qq = q[j - 1], pp = p[j - 1];
        if (j <= c.n1) {
            double a = c.alpha_of(j);
            double y = (a * a * qq * qq + pp * pp) / (2 * a);
            pt.y[j - 1] = y - c.y_star[j - 1];
            pt.x[j - 1] = std::atan2(pp / std::sqrt(2 * a), qq * std::sqrt(a / 2));
        } else if (c.degenerate(j)) {
            int t = j - c.n1 - 1;
            pt.z[t] = qq - I * pp;
            pt.z[d.b + t] = qq + I * pp;
        } else {
            int t = j - c.n2 - 1;
            double a = c.alpha_of(j);
            pt.w[t] = 0.5 * (std::sqrt(2 * a) * qq - I * std::sqrt(2 / a) * pp);
            pt.wb[t] = 0.5 * (std::sqrt(2 * a) * qq + I * std::sqrt(2 / a) * pp);
        }
    }
    return pt;
}

// Remark-type degenerate term sum_i w0_i^(2p)/(2p) + wb0_i^(2q)/(2q) in real z coordinates.
inline series remark1_g(const dims& d, int p, int q) {
    if (p < 2 || q < 2) throw kam_error(failure::domain, "remark1_g requires integer p, q >= 2");
    series g(d);
    for (int t = 0; t < d.b; ++t) {
        std::vector<int> j1(2 * d.b, 0), j2(2 * d.b, 0);
        j1[t] = 2 * p;
        j2[d.b + t] = 2 * q;
        g.add_term(make_mono(d, {}, {}, j1), 1.0 / (2 * p));
        g.add_term(make_mono(d, {}, {}, j2), 1.0 / (2 * q));
    }
    return g;
}

struct lattice_trajectory {
    std::vector<double> t;
    std::vector<std::vector<double>> q, p;
    double energy0 = 0;
    double max_rel_drift = 0;
};

namespace detail {

inline void check_finite(const std::vector<double>& v, double t) {
    for (double x : v)
        if (!std::isfinite(x)) throw kam_error(failure::blow_up, "non-finite state at t = " + std::to_string(t));
}

// Implicit midpoint for beta*W on one site.
inline void w_site_midpoint(double beta, double h, double& q, double& p) {
    double q0 = q, p0 = p, qn = q, pn = p;
    for (int it = 0; it < 100; ++it) {
        double qm = 0.5 * (q0 + qn), pm = 0.5 * (p0 + pn);
        double dHq = beta * (4 * qm * qm * qm - 12 * qm * pm * pm);
        double dHp = beta * (4 * pm * pm * pm - 12 * qm * qm * pm);
        double qq = q0 + h * dHp, pp = p0 - h * dHq;
        double ch = std::abs(qq - qn) + std::abs(pp - pn);
        qn = qq;
        pn = pp;
        if (ch < 1e-16 * (1 + std::abs(qn) + std::abs(pn))) break;
    }
    q = qn;
    p = pn;
}

}  // namespace detail

// Strang splitting: half coupling kick, exact harmonic rotation plus midpoint W, half kick.
inline lattice_trajectory integrate_lattice(const lattice_model& model, std::vector<double> q, std::vector<double> p,
                                            double T, double dt, int record_every = 0) {
    if (!(dt > 0) || !(T >= dt)) throw kam_error(failure::domain, "integration requires dt > 0 and T >= dt");
    const lattice_config& c = model.cfg;
    const int N = model.size();
    lattice_trajectory out;
    out.energy0 = model.energy(q, p);
    long long steps = std::llround(T / dt);
    auto record = [&](double t) {
        out.t.push_back(t);
        out.q.push_back(q);
        out.p.push_back(p);
    };
    if (record_every > 0) record(0.0);
    for (long long s = 1; s <= steps; ++s) {
        auto kick = [&](double h) {
            if (c.epsilon == 0) return;
            auto g = model.coupling_gradient(q);
            for (int j = 0; j < N; ++j) p[j] -= h * c.epsilon * g[j];
        };
        kick(0.5 * dt);
        for (int j = 1; j <= N; ++j) {
            double& qq = q[j - 1];
            double& pp = p[j - 1];
            if (c.degenerate(j)) {
                detail::w_site_midpoint(c.beta_of(j), dt, qq, pp);
            } else {
                double a = c.alpha_of(j), cs = std::cos(a * dt), sn = std::sin(a * dt);
                double qn = qq * cs + pp * sn / a;
                double pn = -qq * a * sn + pp * cs;
                qq = qn;
                pp = pn;
            }
        }
        kick(0.5 * dt);
        double t = s * dt;
        detail::check_finite(q, t);
        detail::check_finite(p, t);
        double e = model.energy(q, p);
        double scale = std::max(std::abs(out.energy0), 1e-300);
        out.max_rel_drift = std::max(out.max_rel_drift, std::abs(e - out.energy0) / scale);
        if (record_every > 0 && s % record_every == 0) record(t);
    }
    if (record_every <= 0) record(steps * dt);
    return out;
}

inline void write_trajectory_csv(std::ostream& os, const lattice_trajectory& tr) {
    if (tr.q.empty()) return;
    const std::size_t N = tr.q[0].size();
    os << "t";
    for (std::size_t j = 1; j <= N; ++j) os << ",q_" << j;
    for (std::size_t j = 1; j <= N; ++j) os << ",p_" << j;
    os << "\n";
    char buf[64];
    for (std::size_t s = 0; s < tr.t.size(); ++s) {
        std::snprintf(buf, sizeof buf, "%.10g", tr.t[s]);
        os << buf;
        for (double v : tr.q[s]) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            os << buf;
        }
        for (double v : tr.p[s]) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            os << buf;
        }
        os << "\n";
    }
}

// Hamiltonian vector field in the bracket convention of poisson_bracket.
inline phase_point vector_field(const series& H, const phase_point& pt) {
    const dims& d = H.shape();
    phase_point g = gradient_at(H, pt);
    phase_point f = phase_point::zeros(d);
    const cplx I(0, 1);
    for (int q = 0; q < d.n; ++q) {
        f.x[q] = g.y[q];
        f.y[q] = -g.x[q];
    }
    for (int q = 0; q < d.b; ++q) {
        f.z[q] = g.z[d.b + q];
        f.z[d.b + q] = -g.z[q];
    }
    for (int q = 0; q < d.J; ++q) {
        f.w[q] = I * g.wb[q];
        f.wb[q] = -I * g.w[q];
    }
    return f;
}

namespace detail {

inline void axpy(phase_point& out, const phase_point& a, cplx s, const phase_point& b) {
    auto f = [&](std::vector<cplx>& o, const std::vector<cplx>& x, const std::vector<cplx>& y) {
        for (std::size_t q = 0; q < o.size(); ++q) o[q] = x[q] + s * y[q];
    };
    f(out.x, a.x, b.x);
    f(out.y, a.y, b.y);
    f(out.z, a.z, b.z);
    f(out.w, a.w, b.w);
    f(out.wb, a.wb, b.wb);
}

inline double point_distance(const phase_point& a, const phase_point& b) {
    double s = 0;
    auto f = [&](const std::vector<cplx>& x, const std::vector<cplx>& y) {
        for (std::size_t q = 0; q < x.size(); ++q) s = std::max(s, std::abs(x[q] - y[q]));
    };
    f(a.x, b.x);
    f(a.y, b.y);
    f(a.z, b.z);
    f(a.w, b.w);
    f(a.wb, b.wb);
    return s;
}

}  // namespace detail

struct nf_trajectory {
    std::vector<double> t;
    std::vector<phase_point> states;
};

// Strang splitting: exact flow of <omega,y> + sum Omega w wb around an implicit midpoint step of the rest.
inline nf_trajectory integrate_normal_form(const normal_form& N, const series& P, phase_point pt, double T, double dt,
                                           int record_every = 1) {
    if (!(dt > 0) || !(T >= dt)) throw kam_error(failure::domain, "integration requires dt > 0 and T >= dt");
    const dims& d = N.d;
    series rest = N.g + N.f + P;
    const cplx I(0, 1);
    auto linear = [&](phase_point& s, double h) {
        for (int q = 0; q < d.n; ++q) s.x[q] += N.omega[q] * h;
        for (int q = 0; q < d.J; ++q) {
            s.w[q] *= std::exp(I * N.Omega[q] * h);
            s.wb[q] *= std::exp(-I * N.Omega[q] * h);
        }
    };
    nf_trajectory out;
    long long steps = std::llround(T / dt);
    out.t.push_back(0);
    out.states.push_back(pt);
    phase_point mid = pt, next = pt;
    for (long long s = 1; s <= steps; ++s) {
        linear(pt, 0.5 * dt);
        next = pt;
        for (int it = 0; it < 60; ++it) {
            detail::axpy(mid, pt, 1.0, next);
            for (auto* v : {&mid.x, &mid.y, &mid.z, &mid.w, &mid.wb})
                for (auto& e : *v) e *= 0.5;
            phase_point f = vector_field(rest, mid);
            phase_point cand = pt;
            detail::axpy(cand, pt, dt, f);
            double ch = detail::point_distance(cand, next);
            next = cand;
            if (ch < 1e-15) break;
        }
        pt = next;
        linear(pt, 0.5 * dt);
        for (const auto* v : {&pt.x, &pt.y, &pt.z, &pt.w, &pt.wb})
            for (const auto& e : *v)
                if (!std::isfinite(e.real()) || !std::isfinite(e.imag()))
                    throw kam_error(failure::blow_up, "non-finite state at t = " + std::to_string(s * dt));
        if (record_every > 0 && s % record_every == 0) {
            out.t.push_back(s * dt);
            out.states.push_back(pt);
        }
    }
    return out;
}

struct torus_report {
    double sup_y = 0;
    double sup_z = 0;
    double sup_w = 0;
    std::vector<double> omega_fit;
    std::vector<double> omega_star;
    double max_rel_freq_error = 0;
    double T = 0;
};

// Integrates from y = z = w = 0, x = 0 and fits the angle drift by least squares.
inline torus_report torus_diagnostic(const normal_form& N, const series& P, double T, double dt) {
    const dims& d = N.d;
    phase_point start = phase_point::zeros(d);
    int every = std::max(1, static_cast<int>(std::llround(T / dt / 2000)));
    auto tr = integrate_normal_form(N, P, start, T, dt, every);
    torus_report rep;
    rep.T = T;
    rep.omega_star = N.omega;
    for (const auto& s : tr.states) {
        for (const auto& v : s.y) rep.sup_y = std::max(rep.sup_y, std::abs(v));
        double zn = 0, wn = 0;
        for (const auto& v : s.z) zn += std::norm(v);
        for (const auto& v : s.w) wn += std::norm(v);
        rep.sup_z = std::max(rep.sup_z, std::sqrt(zn));
        rep.sup_w = std::max(rep.sup_w, std::sqrt(wn));
    }
    const std::size_t M = tr.t.size();
    double tm = 0;
    for (double t : tr.t) tm += t;
    tm /= M;
    for (int q = 0; q < d.n; ++q) {
        double xm = 0;
        for (const auto& s : tr.states) xm += s.x[q].real();
        xm /= M;
        double num = 0, den = 0;
        for (std::size_t k = 0; k < M; ++k) {
            num += (tr.t[k] - tm) * (tr.states[k].x[q].real() - xm);
            den += (tr.t[k] - tm) * (tr.t[k] - tm);
        }
        double w = num / den;
        rep.omega_fit.push_back(w);
        rep.max_rel_freq_error = std::max(rep.max_rel_freq_error, std::abs(w - N.omega[q]) / std::abs(N.omega[q]));
    }
    return rep;
}

}  // namespace kamforge

#endif
