#ifndef KAMFORGE_NORMAL_FORM_HPP
#define KAMFORGE_NORMAL_FORM_HPP

#include <vector>

#include "series.hpp"

namespace kamforge {

// N = e + <omega,y> + <w,Omega wb> + g(z) + f, with the degenerate block of Omega identically zero.
struct normal_form {
    dims d{};
    double e = 0.0;
    std::vector<double> omega;
    std::vector<double> Omega;
    series g;
    series f;

    normal_form() = default;
    explicit normal_form(dims dd) : d(dd), omega(dd.n, 0.0), Omega(dd.J, 0.0), g(dd), f(dd) {}

    series linear_part() const {
        series s(d);
        s.add_term(mono{}, e);
        for (int q = 0; q < d.n; ++q) {
            std::vector<int> i(d.n, 0);
            i[q] = 1;
            s.add_term(make_mono(d, {}, i), omega[q]);
        }
        for (int q = 0; q < d.J; ++q) {
            std::vector<int> l(d.J, 0);
            l[q] = 1;
            s.add_term(make_mono(d, {}, {}, {}, l, l), Omega[q]);
        }
        return s;
    }

    series to_series() const { return linear_part() + g + f; }
};

inline bool is_pure_z(const mono& m, const dims& d) {
    return k_is_zero(m, d) && y_degree(m, d) == 0 && w_degree(m, d) == 0;
}

inline int single_balanced_mode(const mono& m, const dims& d) {
    int mode = -1;
    for (int q = 0; q < d.J; ++q) {
        int a = m.e[d.ow() + q], b = m.e[d.owb() + q];
        if (a != b) return -2;
        if (a == 0) continue;
        if (a != 1 || mode != -1) return -2;
        mode = q;
    }
    return mode;
}

// Monomial classes admitted in f: y^i (4 <= 2|i| <= m), y^i z^j (|i|,|j| >= 1), y^i z^j w_q wb_q (0 < 2|i|+|j|).
inline bool in_f_classes(const mono& x, const dims& d, int m) {
    if (!k_is_zero(x, d)) return false;
    int gr = grade(x, d);
    if (gr > m) return false;
    int mode = single_balanced_mode(x, d);
    if (mode == -2) return false;
    int iy = y_degree(x, d), jz = z_degree(x, d);
    if (mode >= 0) return gr > 0;
    if (jz == 0) return 2 * iy >= 4;
    return iy >= 1 && jz >= 1;
}

inline void check_shape(const normal_form& N, int m, double linear_tol = 1e-8) {
    const dims& d = N.d;
    if (static_cast<int>(N.omega.size()) != d.n || static_cast<int>(N.Omega.size()) != d.J)
        throw kam_error(failure::structural, "normal form frequency lengths do not match dims");
    for (const auto& [x, c] : N.g.terms()) {
        if (!is_pure_z(x, d)) throw kam_error(failure::structural, "g contains a non pure-z monomial");
        int jz = z_degree(x, d);
        if (jz == 0 || (jz == 1 && std::abs(c) > linear_tol))
            throw kam_error(failure::structural, "g contains a constant or linear term");
    }
    for (const auto& [x, c] : N.f.terms())
        if (!in_f_classes(x, d, m)) throw kam_error(failure::structural, "f contains a monomial outside its classes");
}

}  // namespace kamforge

#endif
