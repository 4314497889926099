#ifndef KAMFORGE_DEGREE_HPP
#define KAMFORGE_DEGREE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"

namespace kamforge {

using vec = Eigen::VectorXd;
using vecfn = std::function<vec(const vec&)>;

struct box {
    vec lo;
    vec hi;
    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const vec& z) const {
        for (int q = 0; q < dim(); ++q)
            if (z[q] < lo[q] || z[q] > hi[q]) return false;
        return true;
    }
};

inline box symmetric_box(int dim, double half) { return {vec::Constant(dim, -half), vec::Constant(dim, half)}; }

struct degree_problem {
    vecfn map;
    box O;
    vec target;              // empty means 0
    double boundary_margin = 1e-9;
};

namespace detail {

// Calls visit(vertices) for every Kuhn simplex of the facet grid with coordinate `axis` pinned to lo or hi.
inline void facet_simplices(const box& O, int axis, bool upper, int res,
                            const std::function<void(const std::vector<vec>&)>& visit) {
    const int n = O.dim();
    std::vector<int> free;
    for (int q = 0; q < n; ++q)
        if (q != axis) free.push_back(q);
    const int f = static_cast<int>(free.size());
    vec h = (O.hi - O.lo) / res;
    std::vector<int> cell(f, 0), perm(f);
    std::iota(perm.begin(), perm.end(), 0);
    long long cells = 1;
    for (int q = 0; q < f; ++q) cells *= res;
    for (long long c = 0; c < cells; ++c) {
        long long t = c;
        for (int q = 0; q < f; ++q) {
            cell[q] = static_cast<int>(t % res);
            t /= res;
        }
        vec base(n);
        base[axis] = upper ? O.hi[axis] : O.lo[axis];
        for (int q = 0; q < f; ++q) base[free[q]] = O.lo[free[q]] + cell[q] * h[free[q]];
        std::iota(perm.begin(), perm.end(), 0);
        do {
            std::vector<vec> v{base};
            for (int q = 0; q < f; ++q) {
                vec nx = v.back();
                int ax = free[perm[q]];
                nx[ax] = O.lo[ax] + (cell[perm[q]] + 1) * h[ax];
                v.push_back(nx);
            }
            visit(v);
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
}

inline int sign_of(double v) { return (v > 0) - (v < 0); }

}  // namespace detail

// Degree of the piecewise-linear interpolant on a boundary grid with `res` cells per edge.
inline int degree_at_resolution(const degree_problem& prob, int res, unsigned seed = 12345) {
    const box& O = prob.O;
    const int n = O.dim();
    if (n < 1) throw kam_error(failure::domain, "degree requires dimension >= 1");
    if (n > 4) throw kam_error(failure::unsupported, "degree supported for dimension <= 4, got " + std::to_string(n));
    if (res < 1) throw kam_error(failure::domain, "resolution must be >= 1");
    vec target = prob.target.size() ? prob.target : vec::Zero(n);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    vec v(n);
    for (int q = 0; q < n; ++q) v[q] = nd(rng);
    v.normalize();

    double worst = std::numeric_limits<double>::infinity();
    int deg = 0;
    for (int axis = 0; axis < n; ++axis)
        for (int up = 0; up < 2; ++up) {
            vec nu = vec::Zero(n);
            nu[axis] = up ? 1.0 : -1.0;
            detail::facet_simplices(O, axis, up == 1, res, [&](const std::vector<vec>& p) {
                std::vector<vec> Fp;
                for (const auto& x : p) {
                    Fp.push_back(prob.map(x) - target);
                    worst = std::min(worst, Fp.back().norm());
                }
                Eigen::MatrixXd D(n, n), Or(n, n);
                Or.col(0) = nu;
                D.col(0) = v;
                for (int q = 1; q < n; ++q) {
                    Or.col(q) = p[q] - p[0];
                    D.col(q) = Fp[q] - Fp[0];
                }
                // solve Fp0 + sum lam_q (Fp_q - Fp0) = t v
                Eigen::MatrixXd M(n, n);
                M.col(0) = -v;
                for (int q = 1; q < n; ++q) M.col(q) = Fp[q] - Fp[0];
                Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
                if (!lu.isInvertible()) return;
                vec sol = lu.solve(-Fp[0]);
                double t = sol[0], lsum = 0;
                for (int q = 1; q < n; ++q) {
                    if (sol[q] < 0) return;
                    lsum += sol[q];
                }
                if (lsum > 1 || t <= 0) return;
                deg += detail::sign_of(Or.determinant()) * detail::sign_of(D.determinant());
            });
        }
    if (worst < prob.boundary_margin)
        throw kam_error(failure::ill_posed_boundary,
                        "map comes within " + std::to_string(worst) + " of the target on the boundary");
    return deg;
}

// Refines from `resolution` until two successive refinements agree.
inline int brouwer_degree(const degree_problem& prob, int resolution = 8, int max_doublings = 5) {
    int prev = degree_at_resolution(prob, resolution);
    int res = resolution;
    for (int q = 0; q < max_doublings; ++q) {
        res *= 2;
        int cur = degree_at_resolution(prob, res);
        if (cur == prev) return cur;
        prev = cur;
    }
    throw kam_error(failure::ill_posed_boundary, "degree did not stabilize under refinement");
}

inline Eigen::MatrixXd numeric_jacobian(const vecfn& F, const vec& z, double h = 1e-7) {
    vec f0 = F(z);
    Eigen::MatrixXd Jm(f0.size(), z.size());
    for (int q = 0; q < z.size(); ++q) {
        double s = h * std::max(1.0, std::abs(z[q]));
        vec zp = z, zm = z;
        zp[q] += s;
        zm[q] -= s;
        Jm.col(q) = (F(zp) - F(zm)) / (2 * s);
    }
    return Jm;
}

// Levenberg-Marquardt Newton; returns true when |F| <= tol.
inline bool newton_solve(const vecfn& F, vec& z, double tol = 1e-10, int max_iter = 200) {
    double lambda = 1e-6;
    vec f = F(z);
    double fn = f.norm();
    for (int it = 0; it < max_iter && fn > tol; ++it) {
        if (!std::isfinite(fn)) return false;
        Eigen::MatrixXd Jm = numeric_jacobian(F, z);
        Eigen::MatrixXd A = Jm.transpose() * Jm;
        vec g = Jm.transpose() * f;
        bool moved = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd Am = A;
            Am.diagonal().array() += lambda * (1.0 + A.diagonal().array());
            vec step = Am.ldlt().solve(-g);
            vec zn = z + step;
            vec fnew = F(zn);
            if (std::isfinite(fnew.norm()) && fnew.norm() < fn) {
                z = zn;
                f = fnew;
                fn = fnew.norm();
                lambda = std::max(lambda / 10, 1e-15);
                moved = true;
                break;
            }
            lambda *= 10;
        }
        if (!moved) break;
    }
    return fn <= tol;
}

struct equilibrium_result {
    vec zeta_plus;
    double residual = 0;
    double distance = 0;
    bool via_homotopy = false;
    int roots_found = 0;
};

// Root of H_1(z) = grad_g(z - zeta) - grad_g(0) + grad_r(z - zeta) closest to zeta inside the ball of `radius`.
inline equilibrium_result find_equilibrium(const vecfn& grad_g, const vecfn& grad_r, const vec& zeta, double radius,
                                           int homotopy_steps = 64, int seeds_per_dim = 5) {
    const int n = static_cast<int>(zeta.size());
    vec g0 = grad_g(vec::Zero(n));
    auto H = [&](double t) {
        return vecfn([&, t](const vec& z) { return vec(grad_g(z - zeta) - g0 + t * grad_r(z - zeta)); });
    };
    const double tol = 1e-10;
    std::vector<std::pair<vec, bool>> roots;

    vec z = zeta;
    bool ok = true;
    for (int s = 1; s <= homotopy_steps && ok; ++s) {
        double t = double(s) / homotopy_steps;
        ok = newton_solve(H(t), z, s == homotopy_steps ? tol : 1e-12 + tol * 100);
    }
    if (ok) ok = H(1.0)(z).norm() <= tol;
    if (ok && (z - zeta).norm() <= radius) roots.emplace_back(z, true);

    std::vector<int> idx(n, 0);
    long long total = 1;
    for (int q = 0; q < n; ++q) total *= seeds_per_dim;
    for (long long c = 0; c < total; ++c) {
        long long t = c;
        vec seed(n);
        for (int q = 0; q < n; ++q) {
            int i = static_cast<int>(t % seeds_per_dim);
            t /= seeds_per_dim;
            double u = seeds_per_dim > 1 ? -1.0 + 2.0 * i / (seeds_per_dim - 1) : 0.0;
            seed[q] = zeta[q] + u * radius / std::sqrt(double(n));
        }
        if (!newton_solve(H(1.0), seed, tol)) continue;
        if ((seed - zeta).norm() > radius) continue;
        bool dup = false;
        for (const auto& r : roots) dup = dup || (r.first - seed).norm() < 1e-8;
        if (!dup) roots.emplace_back(seed, false);
    }
    if (roots.empty())
        throw kam_error(failure::equilibrium, "no equilibrium within radius " + std::to_string(radius));

    auto better = [&](const std::pair<vec, bool>& a, const std::pair<vec, bool>& b) {
        double da = (a.first - zeta).norm(), db = (b.first - zeta).norm();
        if (std::abs(da - db) > 1e-12 * std::max(1.0, da)) return da < db;
        return std::lexicographical_compare(a.first.data(), a.first.data() + n, b.first.data(), b.first.data() + n);
    };
    auto best = *std::min_element(roots.begin(), roots.end(), better);
    equilibrium_result out;
    out.zeta_plus = best.first;
    out.residual = H(1.0)(best.first).norm();
    out.distance = (best.first - zeta).norm();
    out.via_homotopy = best.second;
    out.roots_found = static_cast<int>(roots.size());
    return out;
}

struct convexity_result {
    bool pass = true;
    double min_ratio = std::numeric_limits<double>::infinity();
    vec z;
    vec z_star;
};

// Weighted l2 norm with weights w_q (all ones when empty).
inline double weighted_l2(const vec& v, const std::vector<double>& w) {
    double s = 0;
    for (int q = 0; q < v.size(); ++q) {
        double wq = q < static_cast<int>(w.size()) ? w[q] : 1.0;
        s += v[q] * v[q] * wq * wq;
    }
    return std::sqrt(s);
}

// Sampling falsifier for |grad g(z) - grad g(z*)|_{p_bar} >= sigma |z - z*|^L_p.
inline convexity_result weak_convexity_check(const vecfn& grad_g, const box& O, double L, double sigma, int sample_count,
                                             unsigned seed = 1, const std::vector<double>& w_p = {},
                                             const std::vector<double>& w_pbar = {}) {
    if (L < 2 || sigma <= 0) throw kam_error(failure::domain, "weak convexity requires L >= 2 and sigma > 0");
    const int n = O.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uniform = [&] {
        vec z(n);
        for (int q = 0; q < n; ++q) z[q] = O.lo[q] + (O.hi[q] - O.lo[q]) * U(rng);
        return z;
    };
    auto on_boundary = [&] {
        vec z = uniform();
        int ax = std::uniform_int_distribution<int>(0, n - 1)(rng);
        z[ax] = U(rng) < 0.5 ? O.lo[ax] : O.hi[ax];
        return z;
    };
    convexity_result out;
    for (int s = 0; s < sample_count; ++s) {
        vec z, zs;
        switch (s % 5) {
            case 0: z = uniform(); zs = uniform(); break;
            case 1: z = on_boundary(); zs = uniform(); break;
            case 2: z = on_boundary(); zs = on_boundary(); break;
            case 3: {
                z = uniform();
                zs = z;
                int ax = std::uniform_int_distribution<int>(0, n - 1)(rng);
                zs[ax] = O.lo[ax] + (O.hi[ax] - O.lo[ax]) * U(rng);
                break;
            }
            default: {
                z = uniform();
                zs = z;
                double scale = std::pow(10.0, -4.0 * U(rng));
                for (int q = 0; q < n; ++q)
                    zs[q] = std::clamp(z[q] + scale * (O.hi[q] - O.lo[q]) * (U(rng) - 0.5), O.lo[q], O.hi[q]);
            }
        }
        double dz = weighted_l2(z - zs, w_p);
        if (dz == 0) continue;
        double ratio = weighted_l2(grad_g(z) - grad_g(zs), w_pbar) / std::pow(dz, L);
        if (ratio < out.min_ratio) {
            out.min_ratio = ratio;
            out.z = z;
            out.z_star = zs;
        }
    }
    out.pass = out.min_ratio >= sigma;
    return out;
}

}  // namespace kamforge

#endif
