#ifndef KAMFORGE_HOMOLOGICAL_HPP
#define KAMFORGE_HOMOLOGICAL_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "normal_form.hpp"
#include "norms.hpp"
#include "series.hpp"

namespace kamforge {

struct diophantine {
    double gamma = 0.1;
    double tau = 1.0;
    double d = 2.0;
    double delta = 0.0;
};

inline double bracket_weight(const std::vector<int>& l, const std::vector<int>& sites, double d) {
    double s = 0;
    for (std::size_t q = 0; q < l.size(); ++q) {
        double j = q < sites.size() ? sites[q] : double(q + 1);
        s += std::pow(j, d) * l[q];
    }
    return std::max(1.0, std::abs(s));
}

struct divisor_check {
    bool ok = true;
    double divisor = 0;
    double threshold = 0;
};

inline divisor_check small_divisor_ok(const std::vector<int>& k, const std::vector<int>& l, const std::vector<double>& omega,
                                      const std::vector<double>& Omega, const std::vector<int>& sites, const diophantine& dio) {
    bool zero = true;
    int kn = 0;
    for (int v : k) {
        zero = zero && v == 0;
        kn += std::abs(v);
    }
    for (int v : l) zero = zero && v == 0;
    if (zero) throw kam_error(failure::domain, "divisor requested at (k,l) = (0,0)");
    double s = 0;
    for (std::size_t q = 0; q < k.size(); ++q) s += k[q] * omega[q];
    for (std::size_t q = 0; q < l.size(); ++q) s += l[q] * Omega[q];
    divisor_check out;
    out.divisor = std::abs(s);
    out.threshold = dio.gamma * bracket_weight(l, sites, dio.d) / std::pow(1.0 + kn, dio.tau);
    out.ok = out.divisor >= out.threshold;
    return out;
}

inline std::string format_vec(const std::vector<int>& v) {
    std::string s;
    for (std::size_t q = 0; q < v.size(); ++q) s += (q ? " " : "") + std::to_string(v[q]);
    return s;
}

namespace detail {

inline void enumerate_bounded(int slots, const std::vector<int>& weight, int budget,
                              const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> cur(slots, 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == slots) {
            visit(cur);
            return;
        }
        for (int e = 0; e * weight[pos] <= left; ++e) {
            cur[pos] = e;
            rec(pos + 1, left - e * weight[pos]);
        }
        cur[pos] = 0;
    };
    rec(0, budget);
}

// (i, j) exponent pairs with 2|i| + |j| <= m.
inline std::vector<std::vector<int>> graded_yz(const dims& d, int m) {
    std::vector<int> wt(d.n + 2 * d.b, 1);
    for (int q = 0; q < d.n; ++q) wt[q] = 2;
    std::vector<std::vector<int>> out;
    enumerate_bounded(d.n + 2 * d.b, wt, m, [&](const std::vector<int>& v) { out.push_back(v); });
    return out;
}

// (l1, l2) pairs with |l1| + |l2| <= lmax.
inline std::vector<std::vector<int>> bounded_l(const dims& d, int lmax) {
    std::vector<int> wt(2 * d.J, 1);
    std::vector<std::vector<int>> out;
    enumerate_bounded(2 * d.J, wt, lmax, [&](const std::vector<int>& v) { out.push_back(v); });
    return out;
}

}  // namespace detail

using sparse_cx = Eigen::SparseMatrix<cplx>;

struct homological_block {
    std::vector<int> k;
    std::vector<int> dl;
    std::vector<mono> unknowns;
    Eigen::VectorXcd rhs;
    sparse_cx diag, S, A, B, Bi, C;
    divisor_check div;

    bool balanced() const {
        for (int v : dl)
            if (v != 0) return false;
        return true;
    }
    Eigen::MatrixXcd matrix() const {
        sparse_cx t = diag + S + A + B + Bi + C;
        return Eigen::MatrixXcd(t);
    }
};

struct homological_system {
    dims d{};
    grading grad{};
    normal_form N;
    series R;
    series R_res;
    diophantine dio;
    std::vector<int> w_sites;
    std::vector<homological_block> blocks;
};

// Unknowns of one (k, l1-l2) block, ordered by 2|i|+|j| then lexicographically.
inline std::vector<mono> block_unknowns(const dims& d, const std::vector<int>& k, const std::vector<int>& dl, int m, int lmax) {
    std::vector<std::pair<int, mono>> tmp;
    auto yz = detail::graded_yz(d, m);
    auto ls = detail::bounded_l(d, lmax);
    for (const auto& lv : ls) {
        bool match = true;
        for (int q = 0; q < d.J && match; ++q) match = lv[q] - lv[d.J + q] == dl[q];
        if (!match) continue;
        std::vector<int> l1(lv.begin(), lv.begin() + d.J), l2(lv.begin() + d.J, lv.end());
        for (const auto& v : yz) {
            std::vector<int> i(v.begin(), v.begin() + d.n), j(v.begin() + d.n, v.end());
            mono x = make_mono(d, k, i, j, l1, l2);
            tmp.emplace_back(grade(x, d), x);
        }
    }
    std::sort(tmp.begin(), tmp.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second < b.second;
    });
    std::vector<mono> out;
    for (auto& t : tmp) out.push_back(t.second);
    return out;
}

namespace detail {

inline sparse_cx column_operator(const std::vector<mono>& unknowns, const std::map<mono, int>& row, const dims& d,
                                 const grading& grad, const std::function<series(const series&)>& op) {
    const int n = static_cast<int>(unknowns.size());
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int c = 0; c < n; ++c) {
        series u(d, unknowns[c], 1.0);
        series img = op(u);
        for (const auto& [x, v] : img.terms()) {
            auto it = row.find(x);
            if (it != row.end()) {
                trip.emplace_back(it->second, c, v);
            } else if (grad.contains(x, d) && k_of(x, d) == k_of(unknowns[c], d) && dl_of(x, d) == dl_of(unknowns[c], d)) {
                throw kam_error(failure::structural, "bracket image left the block inside the grading");
            }
        }
    }
    sparse_cx M(n, n);
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

}  // namespace detail

inline homological_system assemble(const normal_form& N, const series& R, const diophantine& dio, const grading& grad,
                                   const std::vector<int>& w_sites) {
    const dims& d = N.d;
    check_shape(N, grad.m);
    homological_system sys;
    sys.d = d;
    sys.grad = grad;
    sys.N = N;
    sys.R = R;
    sys.R_res = resonant_average(R);
    sys.dio = dio;
    sys.w_sites = w_sites;
    for (const auto& [x, c] : R.terms())
        if (!grad.contains(x, d)) throw kam_error(failure::structural, "R has terms outside the grading");

    series g2 = N.g.filtered([&](const mono& x) { return z_degree(x, d) == 2; });
    series g3 = N.g.filtered([&](const mono& x) { return z_degree(x, d) >= 3; });
    series glow = N.g.filtered([&](const mono& x) { return z_degree(x, d) < 2; });
    g3 += glow;

    // f has k = 0, so only its y-, z- and w-dependent terms enter the respective bracket parts.
    series f_y = N.f.filtered([&](const mono& x) { return y_degree(x, d) > 0; });
    series f_z = N.f.filtered([&](const mono& x) { return z_degree(x, d) > 0; });
    series f_w = N.f.filtered([&](const mono& x) { return w_degree(x, d) > 0; });

    std::map<std::vector<int>, std::pair<std::vector<int>, std::vector<int>>> keys;
    series rem = R - sys.R_res;
    for (const auto& [x, c] : rem.terms()) {
        auto k = k_of(x, d), dl = dl_of(x, d);
        std::vector<int> key = k;
        key.insert(key.end(), dl.begin(), dl.end());
        keys.emplace(key, std::make_pair(k, dl));
    }

    for (const auto& [key, kd] : keys) {
        const auto& [k, dl] = kd;
        homological_block blk;
        blk.k = k;
        blk.dl = dl;
        blk.div = small_divisor_ok(k, dl, N.omega, N.Omega, w_sites, dio);
        if (!blk.div.ok)
            throw kam_error(failure::resonance, "small divisor at k=(" + format_vec(k) + ") l=(" + format_vec(dl) +
                                                    "): " + std::to_string(blk.div.divisor) + " < " +
                                                    std::to_string(blk.div.threshold));
        blk.unknowns = block_unknowns(d, k, dl, grad.m, grad.l);
        std::map<mono, int> row;
        for (int q = 0; q < static_cast<int>(blk.unknowns.size()); ++q) row.emplace(blk.unknowns[q], q);
        const int n = static_cast<int>(blk.unknowns.size());
        blk.rhs = Eigen::VectorXcd::Zero(n);
        for (int q = 0; q < n; ++q) blk.rhs[q] = rem.coeff(blk.unknowns[q]);

        double lin = 0;
        for (int q = 0; q < d.n; ++q) lin += k[q] * N.omega[q];
        for (int q = 0; q < d.J; ++q) lin += dl[q] * N.Omega[q];
        blk.diag = sparse_cx(n, n);
        blk.diag.reserve(Eigen::VectorXi::Constant(n, 1));
        for (int q = 0; q < n; ++q) blk.diag.insert(q, q) = cplx(0, lin);
        blk.diag.makeCompressed();

        auto neg = [&](const series& X, unsigned part) {
            return [&X, part](const series& u) { return -poisson_bracket(X, u, part); };
        };
        blk.A = detail::column_operator(blk.unknowns, row, d, grad, neg(f_y, part_xy));
        blk.S = detail::column_operator(blk.unknowns, row, d, grad, neg(g2, part_z));
        blk.Bi = detail::column_operator(blk.unknowns, row, d, grad, neg(g3, part_z));
        blk.B = detail::column_operator(blk.unknowns, row, d, grad, neg(f_z, part_z));
        blk.C = detail::column_operator(blk.unknowns, row, d, grad, neg(f_w, part_w));
        sys.blocks.push_back(std::move(blk));
    }
    return sys;
}

struct block_report {
    std::vector<int> k;
    std::vector<int> dl;
    std::string cls;
    double divisor = 0;
    double threshold = 0;
    double cond = 0;
    double residual = 0;
    double log_det = 0;
    double log_det_bound = 0;
    double lambda_min_S = std::numeric_limits<double>::quiet_NaN();
    int size = 0;
};

struct homological_solution {
    series F;
    series Q;
    double residual = 0;  // majorant norm of the in-grading residual
    double norm_R = 0;
    std::vector<block_report> blocks;
};

inline series apply_N_bracket(const normal_form& N, const series& F) { return poisson_bracket(N.to_series(), F); }

inline homological_solution solve(const homological_system& sys, const weighted_norm& nrm, double tol = 1e-9,
                                  bool spectral_detail = false) {
    const dims& d = sys.d;
    homological_solution out;
    out.F = series(d);
    for (const auto& blk : sys.blocks) {
        Eigen::MatrixXcd M = blk.matrix();
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
        block_report rep;
        rep.k = blk.k;
        rep.dl = blk.dl;
        rep.cls = blk.balanced() ? "balanced" : "unbalanced";
        rep.divisor = blk.div.divisor;
        rep.threshold = blk.div.threshold;
        rep.size = static_cast<int>(M.rows());
        double rc = lu.rcond();
        rep.cond = rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
        const auto& U = lu.matrixLU();
        double ld = 0;
        for (int q = 0; q < U.rows(); ++q) ld += std::log(std::abs(U(q, q)));
        rep.log_det = ld;
        int kn = 0;
        for (int v : blk.k) kn += std::abs(v);
        double lw = std::log(sys.dio.gamma * bracket_weight(blk.dl, sys.w_sites, sys.dio.d));
        rep.log_det_bound = rep.size * (lw - std::log(2.0) - sys.dio.tau * std::log(1.0 + kn));
        if (!(rc > 1e-15) || !std::isfinite(ld))
            throw kam_error(failure::resonance, "singular block at k=(" + format_vec(blk.k) + ") l=(" + format_vec(blk.dl) + ")");
        Eigen::VectorXcd sol = lu.solve(blk.rhs);
        double rn = blk.rhs.norm();
        rep.residual = rn > 0 ? (M * sol - blk.rhs).norm() / rn : 0.0;
        if (spectral_detail && blk.S.nonZeros() > 0) {
            Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(blk.S), false);
            double mn = std::numeric_limits<double>::infinity();
            for (int q = 0; q < es.eigenvalues().size(); ++q) mn = std::min(mn, std::abs(es.eigenvalues()[q]));
            rep.lambda_min_S = mn;
        }
        for (int q = 0; q < sol.size(); ++q) out.F.add_term(blk.unknowns[q], sol[q]);
        out.blocks.push_back(rep);
    }
    const grading& gr = sys.grad;
    series gf = sys.N.g + sys.N.f;
    auto zb = poisson_bracket(gf, out.F, part_z);
    out.Q = zb.filtered([&](const mono& x) { return !gr.contains(x, d); });
    series res = apply_N_bracket(sys.N, out.F) + sys.R - sys.R_res - out.Q;
    res = res.filtered([&](const mono& x) { return gr.contains(x, d); });
    out.residual = majorant_vf_norm(res, nrm);
    out.norm_R = majorant_vf_norm(sys.R, nrm);
    if (out.residual > tol * out.norm_R && out.residual > 0)
        throw kam_error(failure::solver, "homological residual " + std::to_string(out.residual) + " exceeds tolerance");
    return out;
}

inline void write_block_csv(std::ostream& os, const std::vector<block_report>& blocks) {
    os << "k,class,divisor,threshold,cond,residual\n";
    char buf[256];
    for (const auto& b : blocks) {
        std::snprintf(buf, sizeof buf, ",%s,%.10e,%.10e,%.6e,%.6e\n", b.cls.c_str(), b.divisor, b.threshold, b.cond, b.residual);
        os << '"' << format_vec(b.k) << ";" << format_vec(b.dl) << '"' << buf;
    }
}

inline double log_binom(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

// Number of k in Z^n with sum |k_i| = q.
inline double log_shell_count(int n, long long q) {
    if (q == 0) return 0.0;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    for (int i = 1; i <= n && i <= q; ++i)
        terms.push_back(i * std::log(2.0) + log_binom(n, i) + log_binom(double(q - 1), double(i - 1)));
    for (double t : terms) best = std::max(best, t);
    double s = 0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
}

struct a_rho_inputs {
    int n = 1;
    int b = 1;
    int J = 0;
    int m = 0;
    int lmax = 2;
    double K = 1;
    double rho = 0.1;
    double tau = 1;
    double d = 2;
    std::vector<int> w_sites;
};

// log A_rho; the sum spans 0 < |k| <= K, 2|i|+|j| <= m, |l| <= lmax.
inline double log_A_rho(const a_rho_inputs& in) {
    const double ninf = -std::numeric_limits<double>::infinity();
    long long K = static_cast<long long>(std::floor(in.K));
    if (K < 1) return ninf;
    if (K > 50000000LL) throw kam_error(failure::unsupported, "A_rho enumeration beyond supported K");
    dims d{in.n, in.b, in.J};
    std::map<int, double> yz_count;
    for (const auto& v : detail::graded_yz(d, in.m)) {
        int s = 0;
        for (int e : v) s += e;
        yz_count[s] += 1;
    }
    std::map<std::pair<int, double>, double> l_count;
    for (const auto& lv : detail::bounded_l(d, in.lmax)) {
        int s = 0;
        std::vector<int> dl(in.J);
        for (int q = 0; q < in.J; ++q) {
            s += lv[q] + lv[in.J + q];
            dl[q] = lv[q] - lv[in.J + q];
        }
        l_count[{s, bracket_weight(dl, in.w_sites, in.d)}] += 1;
    }
    const double two_b = 2.0 * in.b;
    std::vector<double> logs;
    for (long long q = 1; q <= K; ++q) {
        double lc = log_shell_count(in.n, q);
        for (const auto& [s1, c1] : yz_count)
            for (const auto& [key, c2] : l_count) {
                double E = std::pow(two_b, s1 + key.first);
                double lt = 2.0 * ((1.0 + E * in.tau) * std::log(1.0 + q) - E * std::log(key.second)) - 2.0 * q * in.rho;
                logs.push_back(lt + lc + std::log(c1) + std::log(c2));
            }
    }
    double mx = ninf;
    for (double v : logs) mx = std::max(mx, v);
    double s = 0;
    for (double v : logs) s += std::exp(v - mx);
    return 0.5 * (mx + std::log(s));
}

inline double compute_A_rho(const a_rho_inputs& in) { return std::exp(log_A_rho(in)); }

}  // namespace kamforge

#endif
