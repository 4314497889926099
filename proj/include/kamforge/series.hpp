#ifndef KAMFORGE_SERIES_HPP
#define KAMFORGE_SERIES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace kamforge {

using cplx = std::complex<double>;

inline constexpr double prune_threshold = 1e-300;
inline constexpr int max_index_len = 40;

// Layout of a multi-index: k (n) | i (n) | j (2b) | l1 (J) | l2 (J).
struct dims {
    int n = 1;
    int b = 0;
    int J = 0;

    int len() const { return 2 * n + 2 * b + 2 * J; }
    int ox() const { return 0; }
    int oy() const { return n; }
    int oz() const { return 2 * n; }
    int ow() const { return 2 * n + 2 * b; }
    int owb() const { return 2 * n + 2 * b + J; }
    bool operator==(const dims&) const = default;
};

inline void check_dims(const dims& d) {
    if (d.n < 0 || d.b < 0 || d.J < 0 || d.len() > max_index_len)
        throw kam_error(failure::structural, "unsupported dimensions");
}

struct mono {
    std::array<std::int8_t, max_index_len> e{};
    auto operator<=>(const mono&) const = default;
    bool operator==(const mono&) const = default;
};

inline mono make_mono(const dims& d, const std::vector<int>& k = {}, const std::vector<int>& i = {},
                      const std::vector<int>& j = {}, const std::vector<int>& l1 = {},
                      const std::vector<int>& l2 = {}) {
    mono m;
    auto put = [&](const std::vector<int>& v, int off, int len, bool signed_ok) {
        if (v.empty()) return;
        if (static_cast<int>(v.size()) != len) throw kam_error(failure::structural, "multi-index length mismatch");
        for (int q = 0; q < len; ++q) {
            if (!signed_ok && v[q] < 0) throw kam_error(failure::structural, "negative degree in multi-index");
            if (v[q] > 127 || v[q] < -127) throw kam_error(failure::structural, "multi-index entry out of range");
            m.e[off + q] = static_cast<std::int8_t>(v[q]);
        }
    };
    put(k, d.ox(), d.n, true);
    put(i, d.oy(), d.n, false);
    put(j, d.oz(), 2 * d.b, false);
    put(l1, d.ow(), d.J, false);
    put(l2, d.owb(), d.J, false);
    return m;
}

inline int k_norm(const mono& m, const dims& d) {
    int s = 0;
    for (int q = 0; q < d.n; ++q) s += std::abs(int(m.e[d.ox() + q]));
    return s;
}
inline int y_degree(const mono& m, const dims& d) {
    int s = 0;
    for (int q = 0; q < d.n; ++q) s += m.e[d.oy() + q];
    return s;
}
inline int z_degree(const mono& m, const dims& d) {
    int s = 0;
    for (int q = 0; q < 2 * d.b; ++q) s += m.e[d.oz() + q];
    return s;
}
inline int w_degree(const mono& m, const dims& d) {
    int s = 0;
    for (int q = 0; q < 2 * d.J; ++q) s += m.e[d.ow() + q];
    return s;
}
inline int grade(const mono& m, const dims& d) { return 2 * y_degree(m, d) + z_degree(m, d); }
inline bool k_is_zero(const mono& m, const dims& d) {
    for (int q = 0; q < d.n; ++q)
        if (m.e[d.ox() + q] != 0) return false;
    return true;
}
inline bool l_balanced(const mono& m, const dims& d) {
    for (int q = 0; q < d.J; ++q)
        if (m.e[d.ow() + q] != m.e[d.owb() + q]) return false;
    return true;
}
inline std::vector<int> k_of(const mono& m, const dims& d) {
    std::vector<int> v(d.n);
    for (int q = 0; q < d.n; ++q) v[q] = m.e[d.ox() + q];
    return v;
}
inline std::vector<int> dl_of(const mono& m, const dims& d) {
    std::vector<int> v(d.J);
    for (int q = 0; q < d.J; ++q) v[q] = int(m.e[d.ow() + q]) - int(m.e[d.owb() + q]);
    return v;
}

// Retained index lattice: |k| <= K, 2|i|+|j| <= m, |l1|+|l2| <= l.
struct grading {
    int K = 0;
    int m = 0;
    int l = 2;
    bool contains(const mono& x, const dims& d) const {
        return k_norm(x, d) <= K && grade(x, d) <= m && w_degree(x, d) <= l;
    }
};

class series {
public:
    using map_type = std::map<mono, cplx>;

    series() = default;
    explicit series(dims d) : d_(d) { check_dims(d); }
    series(dims d, const mono& m, cplx c) : d_(d) {
        check_dims(d);
        add_term(m, c);
    }

    const dims& shape() const { return d_; }
    const map_type& terms() const { return t_; }
    std::size_t size() const { return t_.size(); }
    bool empty() const { return t_.empty(); }

    std::optional<grading> caps;

    cplx coeff(const mono& m) const {
        auto it = t_.find(m);
        return it == t_.end() ? cplx{} : it->second;
    }

    void add_term(const mono& m, cplx c) {
        auto [it, fresh] = t_.try_emplace(m, c);
        if (!fresh) it->second += c;
        if (std::abs(it->second) <= prune_threshold) t_.erase(it);
    }

    void set_term(const mono& m, cplx c) {
        if (std::abs(c) <= prune_threshold)
            t_.erase(m);
        else
            t_[m] = c;
    }

    series& operator+=(const series& o) {
        require_same(o);
        for (const auto& [m, c] : o.t_) add_term(m, c);
        return *this;
    }
    series& operator-=(const series& o) {
        require_same(o);
        for (const auto& [m, c] : o.t_) add_term(m, -c);
        return *this;
    }
    series& operator*=(cplx s) {
        if (std::abs(s) == 0.0) {
            t_.clear();
            return *this;
        }
        for (auto it = t_.begin(); it != t_.end();) {
            it->second *= s;
            if (std::abs(it->second) <= prune_threshold)
                it = t_.erase(it);
            else
                ++it;
        }
        return *this;
    }

    series filtered(const std::function<bool(const mono&)>& keep) const {
        series out(d_);
        for (const auto& [m, c] : t_)
            if (keep(m)) out.t_.emplace_hint(out.t_.end(), m, c);
        return out;
    }

    double max_abs() const {
        double s = 0;
        for (const auto& kv : t_) s = std::max(s, std::abs(kv.second));
        return s;
    }

    void require_same(const series& o) const {
        if (!(d_ == o.d_)) throw kam_error(failure::structural, "series dimension mismatch");
    }

    // Accumulation without per-insert pruning; call canonicalize afterwards.
    map_type& raw() { return t_; }
    void canonicalize() {
        for (auto it = t_.begin(); it != t_.end();) {
            if (std::abs(it->second) <= prune_threshold)
                it = t_.erase(it);
            else
                ++it;
        }
    }

private:
    dims d_{};
    map_type t_;
};

inline series operator+(series a, const series& b) { return a += b; }
inline series operator-(series a, const series& b) { return a -= b; }
inline series operator*(series a, cplx s) { return a *= s; }
inline series operator*(cplx s, series a) { return a *= s; }
inline series operator-(series a) { return a *= -1.0; }

inline series add(const series& a, const series& b) { return a + b; }

struct split_series {
    series kept;
    series overflow;
};

inline mono mono_sum(const mono& a, const mono& b, int len) {
    mono r;
    for (int q = 0; q < len; ++q) {
        int v = int(a.e[q]) + int(b.e[q]);
        if (v > 127 || v < -127) throw kam_error(failure::structural, "multi-index overflow in product");
        r.e[q] = static_cast<std::int8_t>(v);
    }
    return r;
}

namespace detail {

struct mono_hash {
    std::size_t operator()(const mono& m) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (std::int8_t v : m.e) h = (h ^ static_cast<std::uint8_t>(v)) * 1099511628211ull;
        return static_cast<std::size_t>(h);
    }
};

using accumulator = std::unordered_map<mono, cplx, mono_hash>;

inline void drain(accumulator& acc, series& out) {
    std::vector<std::pair<mono, cplx>> v(acc.begin(), acc.end());
    acc.clear();
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& raw = out.raw();
    for (auto& [m, c] : v) raw.emplace_hint(raw.end(), m, c);
}

}  // namespace detail

inline split_series multiply(const series& a, const series& b, const std::optional<grading>& cap) {
    a.require_same(b);
    const dims& d = a.shape();
    split_series out{series(d), series(d)};
    detail::accumulator kept, over;
    for (const auto& [ma, ca] : a.terms())
        for (const auto& [mb, cb] : b.terms()) {
            mono m = mono_sum(ma, mb, d.len());
            auto& dst = (!cap || cap->contains(m, d)) ? kept : over;
            dst[m] += ca * cb;
        }
    detail::drain(kept, out.kept);
    detail::drain(over, out.overflow);
    out.kept.canonicalize();
    out.overflow.canonicalize();
    out.kept.caps = cap;
    return out;
}

inline series multiply(const series& a, const series& b) { return multiply(a, b, std::nullopt).kept; }

enum bracket_part : unsigned { part_xy = 1u, part_z = 2u, part_w = 4u, part_all = 7u };

// Total order on series values; used to evaluate {A,B} and {B,A} with identical operand roles.
inline bool series_less(const series& a, const series& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    auto ia = a.terms().begin();
    auto ib = b.terms().begin();
    for (; ia != a.terms().end(); ++ia, ++ib) {
        if (ia->first != ib->first) return ia->first < ib->first;
        if (ia->second.real() != ib->second.real()) return ia->second.real() < ib->second.real();
        if (ia->second.imag() != ib->second.imag()) return ia->second.imag() < ib->second.imag();
    }
    return false;
}

using overflow_sink = std::function<void(const mono&, double)>;

namespace detail {

// {A,B} = -A_y.B_x + A_x.B_y + A_z J B_z - i A_wb.B_w + i A_w.B_wb, with J = [[0,I],[-I,0]].
inline split_series bracket_kernel(const series& a, const series& b, const std::optional<grading>& cap,
                                   unsigned parts, const overflow_sink* sink) {
    a.require_same(b);
    const dims& d = a.shape();
    const cplx I(0, 1);
    split_series out{series(d), series(d)};
    accumulator kept, over;
    kept.reserve(std::min<std::size_t>(a.size() * b.size(), 1u << 16));
    auto emit = [&](const mono& m, cplx v) {
        if (!cap || cap->contains(m, d))
            kept[m] += v;
        else if (sink)
            (*sink)(m, std::abs(v));
        else
            over[m] += v;
    };
    for (const auto& [ma, ca] : a.terms())
        for (const auto& [mb, cb] : b.terms()) {
            const cplx cc = ca * cb;
            mono s = mono_sum(ma, mb, d.len());
            if (parts & part_xy)
                for (int q = 0; q < d.n; ++q) {
                    int ka = ma.e[d.ox() + q], kb = mb.e[d.ox() + q];
                    int ia = ma.e[d.oy() + q], ib = mb.e[d.oy() + q];
                    int f = ka * ib - ia * kb;
                    if (f == 0) continue;
                    mono m = s;
                    m.e[d.oy() + q] -= 1;
                    emit(m, cc * I * double(f));
                }
            if (parts & part_z)
                for (int q = 0; q < d.b; ++q) {
                    int p1 = d.oz() + q, p2 = d.oz() + q + d.b;
                    int f = int(ma.e[p1]) * mb.e[p2] - int(ma.e[p2]) * mb.e[p1];
                    if (f == 0) continue;
                    mono m = s;
                    m.e[p1] -= 1;
                    m.e[p2] -= 1;
                    emit(m, cc * double(f));
                }
            if (parts & part_w)
                for (int q = 0; q < d.J; ++q) {
                    int w1 = d.ow() + q, w2 = d.owb() + q;
                    int f = int(ma.e[w1]) * mb.e[w2] - int(ma.e[w2]) * mb.e[w1];
                    if (f == 0) continue;
                    mono m = s;
                    m.e[w1] -= 1;
                    m.e[w2] -= 1;
                    emit(m, cc * I * double(f));
                }
        }
    drain(kept, out.kept);
    drain(over, out.overflow);
    out.kept.canonicalize();
    out.overflow.canonicalize();
    out.kept.caps = cap;
    return out;
}

}  // namespace detail

// With a sink, overflow products go to it one by one as |coefficient| and the returned overflow stays empty.
inline split_series poisson_bracket(const series& a, const series& b, const std::optional<grading>& cap,
                                    unsigned parts = part_all, const overflow_sink* sink = nullptr) {
    if (series_less(b, a)) {
        split_series r = detail::bracket_kernel(b, a, cap, parts, sink);
        r.kept *= -1.0;
        r.overflow *= -1.0;
        return r;
    }
    return detail::bracket_kernel(a, b, cap, parts, sink);
}

inline series poisson_bracket(const series& a, const series& b, unsigned parts = part_all) {
    return poisson_bracket(a, b, std::nullopt, parts).kept;
}

// Partial derivatives. Variable slots follow the multi-index layout.
inline series d_dx(const series& a, int q) {
    const dims& d = a.shape();
    series out(d);
    for (const auto& [m, c] : a.terms()) {
        int k = m.e[d.ox() + q];
        if (k != 0) out.raw().emplace_hint(out.raw().end(), m, c * cplx(0, double(k)));
    }
    return out;
}

inline series d_dslot(const series& a, int slot) {
    const dims& d = a.shape();
    series out(d);
    for (const auto& [m, c] : a.terms()) {
        int e = m.e[slot];
        if (e == 0) continue;
        mono r = m;
        r.e[slot] -= 1;
        out.raw()[r] += c * double(e);
    }
    out.canonicalize();
    return out;
}
inline series d_dy(const series& a, int q) { return d_dslot(a, a.shape().oy() + q); }
inline series d_dz(const series& a, int q) { return d_dslot(a, a.shape().oz() + q); }
inline series d_dw(const series& a, int q) { return d_dslot(a, a.shape().ow() + q); }
inline series d_dwb(const series& a, int q) { return d_dslot(a, a.shape().owb() + q); }

inline split_series truncate(const series& p, int K, int m, int lmax = 2) {
    grading g{K, m, lmax};
    const dims& d = p.shape();
    split_series out{p.filtered([&](const mono& x) { return g.contains(x, d); }),
                     p.filtered([&](const mono& x) { return !g.contains(x, d); })};
    out.kept.caps = g;
    return out;
}

inline series average(const series& p) {
    const dims& d = p.shape();
    return p.filtered([&](const mono& x) { return k_is_zero(x, d); });
}

// The x-average restricted to l1 == l2: the part a normal form can absorb.
inline series resonant_average(const series& p) {
    const dims& d = p.shape();
    return p.filtered([&](const mono& x) { return k_is_zero(x, d) && l_balanced(x, d); });
}

struct phase_point {
    std::vector<cplx> x, y, z, w, wb;

    static phase_point zeros(const dims& d) {
        return {std::vector<cplx>(d.n), std::vector<cplx>(d.n), std::vector<cplx>(2 * d.b),
                std::vector<cplx>(d.J), std::vector<cplx>(d.J)};
    }
};

inline cplx evaluate_term(const mono& m, const dims& d, const phase_point& pt) {
    cplx v(1.0, 0.0);
    cplx phase(0.0, 0.0);
    for (int q = 0; q < d.n; ++q) phase += double(m.e[d.ox() + q]) * pt.x[q];
    v *= std::exp(cplx(0, 1) * phase);
    for (int q = 0; q < d.n; ++q) v *= std::pow(pt.y[q], int(m.e[d.oy() + q]));
    for (int q = 0; q < 2 * d.b; ++q) v *= std::pow(pt.z[q], int(m.e[d.oz() + q]));
    for (int q = 0; q < d.J; ++q) {
        v *= std::pow(pt.w[q], int(m.e[d.ow() + q]));
        v *= std::pow(pt.wb[q], int(m.e[d.owb() + q]));
    }
    return v;
}

inline cplx evaluate(const series& a, const phase_point& pt) {
    cplx s{};
    for (const auto& [m, c] : a.terms()) s += c * evaluate_term(m, a.shape(), pt);
    return s;
}

// All first partials of a series at a point, evaluated in one pass.
inline phase_point gradient_at(const series& H, const phase_point& pt) {
    const dims& d = H.shape();
    phase_point g = phase_point::zeros(d);
    const int L = d.len();
    std::vector<cplx> vals(L), pw(L), dpw(L), pre(L + 1), suf(L + 1);
    for (int q = 0; q < d.n; ++q) vals[d.oy() + q] = pt.y[q];
    for (int q = 0; q < 2 * d.b; ++q) vals[d.oz() + q] = pt.z[q];
    for (int q = 0; q < d.J; ++q) {
        vals[d.ow() + q] = pt.w[q];
        vals[d.owb() + q] = pt.wb[q];
    }
    const cplx I(0, 1);
    for (const auto& [m, c] : H.terms()) {
        cplx phase{};
        for (int q = 0; q < d.n; ++q) phase += double(m.e[q]) * pt.x[q];
        cplx head = c * std::exp(I * phase);
        for (int s = d.n; s < L; ++s) {
            int e = m.e[s];
            if (e == 0) {
                pw[s] = 1.0;
                dpw[s] = 0.0;
            } else {
                cplx base = std::pow(vals[s], e - 1);
                pw[s] = base * vals[s];
                dpw[s] = double(e) * base;
            }
        }
        pre[d.n] = 1.0;
        for (int s = d.n; s < L; ++s) pre[s + 1] = pre[s] * pw[s];
        suf[L] = 1.0;
        for (int s = L - 1; s >= d.n; --s) suf[s] = suf[s + 1] * pw[s];
        cplx val = head * pre[L];
        for (int q = 0; q < d.n; ++q)
            if (m.e[q]) g.x[q] += I * double(m.e[q]) * val;
        for (int s = d.n; s < L; ++s) {
            if (m.e[s] == 0) continue;
            cplx v = head * pre[s] * dpw[s] * suf[s + 1];
            if (s < d.oz()) g.y[s - d.oy()] += v;
            else if (s < d.ow()) g.z[s - d.oz()] += v;
            else if (s < d.owb()) g.w[s - d.ow()] += v;
            else g.wb[s - d.owb()] += v;
        }
    }
    return g;
}

// Substitution z -> z + h.
inline series shift_z(const series& a, const std::vector<cplx>& h) {
    const dims& d = a.shape();
    if (static_cast<int>(h.size()) != 2 * d.b) throw kam_error(failure::structural, "shift length mismatch");
    bool zero = std::all_of(h.begin(), h.end(), [](cplx v) { return v == cplx{}; });
    if (zero) return a;
    series out(d);
    for (const auto& [m, c] : a.terms()) {
        std::vector<std::pair<mono, cplx>> acc{{m, c}};
        for (int q = 0; q < 2 * d.b; ++q) {
            int e = m.e[d.oz() + q];
            if (e == 0) continue;
            std::vector<std::pair<mono, cplx>> next;
            for (const auto& [mm, cc] : acc) {
                double binom = 1.0;
                cplx hp(1.0, 0.0);
                for (int t = 0; t <= e; ++t) {
                    mono r = mm;
                    r.e[d.oz() + q] = static_cast<std::int8_t>(e - t);
                    next.emplace_back(r, cc * binom * hp);
                    binom = binom * double(e - t) / double(t + 1);
                    hp *= h[q];
                }
            }
            acc.swap(next);
        }
        for (const auto& [mm, cc] : acc) out.raw()[mm] += cc;
    }
    out.canonicalize();
    return out;
}

inline mono conjugate_index(const mono& m, const dims& d, bool z_pairing) {
    mono r = m;
    for (int q = 0; q < d.n; ++q) r.e[d.ox() + q] = static_cast<std::int8_t>(-m.e[d.ox() + q]);
    if (z_pairing)
        for (int q = 0; q < d.b; ++q) std::swap(r.e[d.oz() + q], r.e[d.oz() + q + d.b]);
    for (int q = 0; q < d.J; ++q) std::swap(r.e[d.ow() + q], r.e[d.owb() + q]);
    return r;
}

// Largest |c(m) - conj c(m*)|. z real by default (the convention under which the J-bracket preserves reality).
inline double reality_defect(const series& a, bool z_pairing = false) {
    double worst = 0;
    for (const auto& [m, c] : a.terms()) {
        cplx partner = a.coeff(conjugate_index(m, a.shape(), z_pairing));
        worst = std::max(worst, std::abs(c - std::conj(partner)));
    }
    return worst;
}

inline double coefficient_distance(const series& a, const series& b) {
    return (a - b).max_abs();
}

// Line format: "k | i | j | l1 | l2 | re | im", preceded by "# dims n b J".
inline void write_text(std::ostream& os, const series& a) {
    const dims& d = a.shape();
    os << "# dims " << d.n << ' ' << d.b << ' ' << d.J << '\n';
    auto field = [&](const mono& m, int off, int len) {
        for (int q = 0; q < len; ++q) os << (q ? " " : "") << int(m.e[off + q]);
    };
    char buf[64];
    for (const auto& [m, c] : a.terms()) {
        field(m, d.ox(), d.n);
        os << " | ";
        field(m, d.oy(), d.n);
        os << " | ";
        field(m, d.oz(), 2 * d.b);
        os << " | ";
        field(m, d.ow(), d.J);
        os << " | ";
        field(m, d.owb(), d.J);
        std::snprintf(buf, sizeof buf, "%.17g", c.real());
        os << " | " << buf;
        std::snprintf(buf, sizeof buf, "%.17g", c.imag());
        os << " | " << buf << '\n';
    }
}

inline std::string to_text(const series& a) {
    std::ostringstream os;
    write_text(os, a);
    return os.str();
}

inline series read_text(std::istream& is) {
    std::string line;
    int lineno = 0;
    std::optional<series> out;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string tag;
            dims d;
            if (hs >> tag && tag == "dims" && hs >> d.n >> d.b >> d.J) out.emplace(d);
            continue;
        }
        if (!out) throw kam_error(failure::structural, "series text: missing dims header before line " + std::to_string(lineno));
        const dims& d = out->shape();
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : line) {
            if (ch == '|') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        parts.push_back(cur);
        if (parts.size() != 7) throw kam_error(failure::structural, "series text: expected 7 fields at line " + std::to_string(lineno));
        auto ints = [&](const std::string& s, int len) {
            std::istringstream ss(s);
            std::vector<int> v;
            int x;
            while (ss >> x) v.push_back(x);
            if (static_cast<int>(v.size()) != len)
                throw kam_error(failure::structural, "series text: wrong index length at line " + std::to_string(lineno));
            return v;
        };
        auto k = ints(parts[0], d.n), i = ints(parts[1], d.n), j = ints(parts[2], 2 * d.b);
        auto l1 = ints(parts[3], d.J), l2 = ints(parts[4], d.J);
        double re = 0, im = 0;
        try {
            re = std::stod(parts[5]);
            im = std::stod(parts[6]);
        } catch (const std::exception&) {
            throw kam_error(failure::structural, "series text: bad coefficient at line " + std::to_string(lineno));
        }
        out->add_term(make_mono(d, k, i, j, l1, l2), cplx(re, im));
    }
    if (!out) throw kam_error(failure::structural, "series text: missing dims header");
    return *out;
}

inline series from_text(const std::string& s) {
    std::istringstream is(s);
    return read_text(is);
}

}  // namespace kamforge

#endif
