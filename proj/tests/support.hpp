#ifndef KAMFORGE_TEST_SUPPORT_HPP
#define KAMFORGE_TEST_SUPPORT_HPP

#include <map>
#include <random>
#include <vector>

#include "kamforge/series.hpp"

namespace ktest {

using kamforge::cplx;
using kamforge::dims;
using kamforge::mono;
using kamforge::series;

// Random series with total degree (|i|+|j|+|l|) <= maxdeg and |k_q| <= maxk.
inline series random_series(const dims& d, int nterms, int maxdeg, int maxk, std::mt19937_64& rng, bool real = false) {
    std::uniform_int_distribution<int> kd(-maxk, maxk);
    std::uniform_real_distribution<double> cd(-1.0, 1.0);
    series s(d);
    int slots = d.len() - d.n;
    for (int t = 0; t < nterms; ++t) {
        mono m;
        for (int q = 0; q < d.n; ++q) m.e[q] = static_cast<std::int8_t>(kd(rng));
        int budget = std::uniform_int_distribution<int>(0, maxdeg)(rng);
        for (int u = 0; u < budget && slots > 0; ++u) {
            int slot = d.n + std::uniform_int_distribution<int>(0, slots - 1)(rng);
            m.e[slot] += 1;
        }
        cplx c(cd(rng), real ? 0.0 : cd(rng));
        if (real) {
            c = cplx(cd(rng), cd(rng));
            s.add_term(m, c);
            s.add_term(kamforge::conjugate_index(m, d, false), std::conj(c));
        } else {
            s.add_term(m, c);
        }
    }
    return s;
}

// Independent dense-vector polynomial used by the oracles.
using poly = std::map<std::vector<int>, cplx>;

inline poly to_poly(const series& s) {
    poly p;
    int len = s.shape().len();
    for (const auto& [m, c] : s.terms()) p[std::vector<int>(m.e.begin(), m.e.begin() + len)] += c;
    return p;
}

inline series from_poly(const dims& d, const poly& p) {
    series s(d);
    for (const auto& [v, c] : p) {
        mono m;
        for (std::size_t q = 0; q < v.size(); ++q) m.e[q] = static_cast<std::int8_t>(v[q]);
        s.add_term(m, c);
    }
    return s;
}

inline poly poly_mul(const poly& a, const poly& b) {
    poly r;
    for (const auto& [va, ca] : a)
        for (const auto& [vb, cb] : b) {
            std::vector<int> v(va.size());
            for (std::size_t q = 0; q < v.size(); ++q) v[q] = va[q] + vb[q];
            r[v] += ca * cb;
        }
    return r;
}

inline poly poly_add(poly a, const poly& b, cplx s = 1.0) {
    for (const auto& [v, c] : b) a[v] += s * c;
    return a;
}

// Derivative with respect to a power slot, or i*k for an angle slot.
inline poly poly_diff(const poly& a, int slot, bool angle) {
    poly r;
    for (const auto& [v, c] : a) {
        if (angle) {
            if (v[slot] != 0) r[v] += c * cplx(0, v[slot]);
        } else if (v[slot] > 0) {
            auto u = v;
            u[slot] -= 1;
            r[u] += c * double(v[slot]);
        }
    }
    return r;
}

inline poly bracket_oracle(const dims& d, const poly& A, const poly& B) {
    const cplx I(0, 1);
    poly s1, s2, s3, s4, s5;
    for (int q = 0; q < d.n; ++q) {
        s1 = poly_add(s1, poly_mul(poly_diff(A, d.oy() + q, false), poly_diff(B, d.ox() + q, true)), -1.0);
        s2 = poly_add(s2, poly_mul(poly_diff(A, d.ox() + q, true), poly_diff(B, d.oy() + q, false)));
    }
    for (int q = 0; q < d.b; ++q) {
        int p1 = d.oz() + q, p2 = d.oz() + d.b + q;
        s3 = poly_add(s3, poly_mul(poly_diff(A, p1, false), poly_diff(B, p2, false)));
        s3 = poly_add(s3, poly_mul(poly_diff(A, p2, false), poly_diff(B, p1, false)), -1.0);
    }
    for (int q = 0; q < d.J; ++q) {
        s4 = poly_add(s4, poly_mul(poly_diff(A, d.owb() + q, false), poly_diff(B, d.ow() + q, false)), -I);
        s5 = poly_add(s5, poly_mul(poly_diff(A, d.ow() + q, false), poly_diff(B, d.owb() + q, false)), I);
    }
    poly r = poly_add(poly_add(poly_add(poly_add(s1, s2), s3), s4), s5);
    return r;
}

inline double poly_distance(const poly& a, const poly& b) {
    double worst = 0;
    for (const auto& [v, c] : a) {
        auto it = b.find(v);
        worst = std::max(worst, std::abs(c - (it == b.end() ? cplx{} : it->second)));
    }
    for (const auto& [v, c] : b)
        if (!a.count(v)) worst = std::max(worst, std::abs(c));
    return worst;
}

}  // namespace ktest

#endif
