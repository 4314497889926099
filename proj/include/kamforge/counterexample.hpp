#pragma once

#include <cmath>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kamforge/degree.hpp"
#include "kamforge/errors.hpp"

namespace kamforge {

struct counterexample_config {
    int sigma_exp = 1;
    int ell_exp = 1;
    std::vector<double> eps_grid;  // decreasing, inside (0, 0.5)
};

// Decreasing grid of `count` points uniform in 1/eps between eps_hi and eps_lo (both excluded).
inline std::vector<double> reciprocal_grid(double eps_lo, double eps_hi, int count) {
    if (!(eps_lo > 0 && eps_hi > eps_lo) || count < 2) throw kam_error(failure::domain, "reciprocal_grid needs 0 < lo < hi and count >= 2");
    std::vector<double> g;
    const double a = 1 / eps_hi, b = 1 / eps_lo;
    for (int i = 1; i <= count; ++i) g.push_back(1 / (a + (b - a) * i / (count + 1.0)));
    return g;
}

inline void validate(const counterexample_config& c) {
    if (c.sigma_exp < 1) throw kam_error(failure::domain, "sigma_exp must be >= 1");
    if (c.ell_exp < 1) throw kam_error(failure::domain, "ell_exp must be >= 1");
    for (std::size_t i = 0; i < c.eps_grid.size(); ++i) {
        double e = c.eps_grid[i];
        if (!(e > 0 && e < 0.5)) throw kam_error(failure::domain, "eps_grid must lie in (0, 0.5)");
        if (i > 0 && !(e < c.eps_grid[i - 1])) throw kam_error(failure::domain, "eps_grid must be decreasing");
    }
}

struct counterexample_model {
    int sigma = 1;
    int ell = 1;

    // Zero on [-1, 1], -(-w-1)^sigma below, (w-1)^sigma above.
    double grad_g1(double w0) const {
        if (w0 < -1) return -std::pow(-w0 - 1, sigma);
        if (w0 > 1) return std::pow(w0 - 1, sigma);
        return 0.0;
    }
    double grad_g2(double wb0) const { return wb0; }

    vec grad_g(const vec& z) const {
        vec r(2);
        r << grad_g1(z[0]), grad_g2(z[1]);
        return r;
    }
    vecfn field() const {
        return [m = *this](const vec& z) { return m.grad_g(z); };
    }

    // P_0(0) = 0, P_0(eps) = eps^ell sin(1/eps).
    double P0(double eps) const { return eps == 0 ? 0.0 : std::pow(eps, ell) * std::sin(1 / eps); }

    // Real gradient of g + P_0(eps) wb0 in (w0, wb0).
    vecfn perturbed_field(double eps) const {
        return [m = *this, p = P0(eps)](const vec& z) {
            vec r = m.grad_g(z);
            r[1] += p;
            return r;
        };
    }
};

inline counterexample_model build(const counterexample_config& cfg) {
    validate(cfg);
    return {cfg.sigma_exp, cfg.ell_exp};
}

inline box counterexample_box() { return symmetric_box(2, 2.0); }

struct a0_report {
    int degree = 0;
    int degree_fine = 0;
    int resolution = 0;
    bool degree_nonzero = false;
    bool degree_odd = false;
    vec witness_z, witness_z_star;
    double witness_grad_gap = 0;  // |grad g(z) - grad g(z*)|
    double witness_distance = 0;  // |z - z*|
    bool convexity_fails = false;
    double sampled_min_ratio = 0;  // sampling falsifier with L = 2, sigma = 1e-12
    double linear_part_ratio = 0;  // min |grad g2(a) - grad g2(b)| / |a - b|
};

inline a0_report verify_A0_split(const counterexample_config& cfg, int resolution = 8, int samples = 2000, unsigned seed = 3) {
    auto m = build(cfg);
    a0_report r;
    degree_problem prob{m.field(), counterexample_box(), vec(), 1e-9};
    r.resolution = resolution;
    r.degree = degree_at_resolution(prob, resolution);
    r.degree_fine = degree_at_resolution(prob, 2 * resolution);
    r.degree_nonzero = r.degree != 0 && r.degree_fine != 0;
    r.degree_odd = std::abs(r.degree) % 2 == 1 && std::abs(r.degree_fine) % 2 == 1;

    r.witness_z = vec(2);
    r.witness_z << 0.2, 0.0;
    r.witness_z_star = vec(2);
    r.witness_z_star << 0.5, 0.0;
    r.witness_grad_gap = (m.grad_g(r.witness_z) - m.grad_g(r.witness_z_star)).norm();
    r.witness_distance = (r.witness_z - r.witness_z_star).norm();
    r.convexity_fails = r.witness_grad_gap == 0 && r.witness_distance > 0;

    auto sampled = weak_convexity_check(m.field(), symmetric_box(2, 1.0), 2.0, 1e-12, samples, seed);
    r.sampled_min_ratio = sampled.min_ratio;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    r.linear_part_ratio = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        double a = U(rng), b = U(rng);
        if (a == b) continue;
        r.linear_part_ratio = std::min(r.linear_part_ratio, std::abs(m.grad_g2(a) - m.grad_g2(b)) / std::abs(a - b));
    }
    return r;
}

struct oscillation_row {
    double eps = 0;
    double wb0 = 0;      // solved equilibrium in the wb0 direction
    int sign = 0;
    double ratio = 0;    // wb0 / eps^ell
    double residual = 0; // |grad g2(wb0) + P_0(eps)|
    double w0_preimage = 0;  // grad g1^{-1}(-P_0) off the plateau; 0 on it
    int w0_side = 0;         // +1 for (1, 2), -1 for (-2, -1), 0 for the plateau
};

struct oscillation_report {
    std::vector<oscillation_row> rows;
    int sign_changes = 0;
    int side_alternations = 0;
    double max_identity_error = 0;   // max |ratio + sin(1/eps)|
    double tail_ratio_spread = 0;    // sup - inf of wb0 / eps^ell over the smallest decade of the grid
    bool cauchy = true;
};

inline int count_sign_changes(const std::vector<int>& s) {
    int changes = 0, last = 0;
    for (int v : s) {
        if (v == 0) continue;
        if (last != 0 && v != last) ++changes;
        last = v;
    }
    return changes;
}

// Newton on grad g2(wb0) + P_0(eps) = 0, then the w0 response read through grad g1 for the same forcing.
inline oscillation_report equilibrium_oscillation(const counterexample_config& cfg) {
    auto m = build(cfg);
    if (cfg.eps_grid.size() < 2) throw kam_error(failure::domain, "eps_grid needs at least two points");
    if (std::round(std::log10(cfg.eps_grid.front() / cfg.eps_grid.back())) < 2) throw kam_error(failure::domain, "eps_grid must span at least two decades");
    oscillation_report rep;
    std::vector<int> signs, sides;
    for (double eps : cfg.eps_grid) {
        oscillation_row row;
        row.eps = eps;
        const double p = m.P0(eps);
        double w = 0;
        for (int it = 0; it < 50; ++it) {
            double f = m.grad_g2(w) + p;
            if (f == 0) break;
            w -= f;
        }
        row.wb0 = w;
        row.sign = (w > 0) - (w < 0);
        row.ratio = w / std::pow(eps, m.ell);
        row.residual = std::abs(m.grad_g2(w) + p);
        const double target = -p;
        if (target > 0) {
            row.w0_preimage = 1 + std::pow(target, 1.0 / m.sigma);
            row.w0_side = 1;
        } else if (target < 0) {
            row.w0_preimage = -1 - std::pow(-target, 1.0 / m.sigma);
            row.w0_side = -1;
        }
        rep.max_identity_error = std::max(rep.max_identity_error, std::abs(row.ratio + std::sin(1 / eps)));
        signs.push_back(row.sign);
        sides.push_back(row.w0_side);
        rep.rows.push_back(row);
    }
    rep.sign_changes = count_sign_changes(signs);
    rep.side_alternations = count_sign_changes(sides);
    const double tail_top = cfg.eps_grid.back() * 10;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rep.rows)
        if (r.eps <= tail_top) {
            lo = std::min(lo, r.ratio);
            hi = std::max(hi, r.ratio);
        }
    rep.tail_ratio_spread = hi - lo;
    rep.cauchy = rep.tail_ratio_spread < 1e-6;
    return rep;
}

inline void write_oscillation_csv(std::ostream& os, const oscillation_report& rep) {
    os << "epsilon,equilibrium,sign\n";
    os.precision(17);
    for (const auto& r : rep.rows) os << r.eps << ',' << r.wb0 << ',' << r.sign << '\n';
}

}  // namespace kamforge
