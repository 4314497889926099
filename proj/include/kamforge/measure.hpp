#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "kamforge/engine.hpp"
#include "kamforge/errors.hpp"
#include "kamforge/homological.hpp"
#include "kamforge/lattice.hpp"

namespace kamforge {

using frequency_map = std::function<std::vector<double>(const std::vector<double>&)>;

struct parameter_box {
    std::vector<double> lo, hi;
    frequency_map omega_map;
    frequency_map Omega_map;
    std::vector<int> w_sites;
    int samples = 10000;
    bool grid = false;
    std::uint64_t seed = 1;
    int threads = 0;

    int dim() const { return static_cast<int>(lo.size()); }
    double volume() const {
        double v = 1;
        for (int i = 0; i < dim(); ++i) v *= hi[i] - lo[i];
        return v;
    }
};

inline void validate(const parameter_box& box) {
    if (box.lo.empty() || box.lo.size() != box.hi.size()) throw kam_error(failure::domain, "parameter box needs matching nonempty bounds");
    for (int i = 0; i < box.dim(); ++i)
        if (!(box.hi[i] > box.lo[i])) throw kam_error(failure::domain, "parameter box is empty along axis " + std::to_string(i));
    if (!box.omega_map || !box.Omega_map) throw kam_error(failure::domain, "parameter box needs frequency maps");
    if (box.samples < 1) throw kam_error(failure::domain, "parameter box needs at least one sample");
}

// Tangent frequencies are the parameters themselves; normal frequencies are the fixed alpha_j, j > n2.
inline parameter_box lattice_box(const lattice_config& cfg, double lo = 1.0, double hi = 2.0, int samples = 10000) {
    lattice_config c = with_defaults(cfg);
    parameter_box box;
    box.lo.assign(c.n1, lo);
    box.hi.assign(c.n1, hi);
    box.omega_map = [](const std::vector<double>& xi) { return xi; };
    std::vector<double> Om = c.alpha_normal;
    box.Omega_map = [Om](const std::vector<double>&) { return Om; };
    for (int j = 1; j <= c.J; ++j) box.w_sites.push_back(c.n2 + j);
    box.samples = samples;
    return box;
}

// Monte Carlo points from the seed, or a regular grid of cell centres with ceil(samples^(1/n)) points per axis.
inline std::vector<std::vector<double>> sample_points(const parameter_box& box) {
    validate(box);
    const int n = box.dim();
    std::vector<std::vector<double>> pts;
    if (box.grid) {
        int per = static_cast<int>(std::ceil(std::pow(double(box.samples), 1.0 / n) - 1e-9));
        std::vector<int> idx(n, 0);
        while (true) {
            std::vector<double> xi(n);
            for (int i = 0; i < n; ++i) xi[i] = box.lo[i] + (idx[i] + 0.5) * (box.hi[i] - box.lo[i]) / per;
            pts.push_back(xi);
            int a = 0;
            while (a < n && ++idx[a] == per) idx[a++] = 0;
            if (a == n) break;
        }
        return pts;
    }
    std::mt19937_64 rng(box.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    pts.resize(box.samples, std::vector<double>(n));
    for (auto& xi : pts)
        for (int i = 0; i < n; ++i) xi[i] = box.lo[i] + U(rng) * (box.hi[i] - box.lo[i]);
    return pts;
}

// KAMFORGE_THREADS caps the worker count.
inline int worker_count(int requested = 0) {
    int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    int w = requested > 0 ? requested : hw;
    if (const char* env = std::getenv("KAMFORGE_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0) w = std::min(w, cap);
    }
    return std::max(1, w);
}

// Static contiguous chunks; f(i) must only write to slot i.
template <class F>
void parallel_for(int count, int threads, F&& f) {
    int w = std::min(worker_count(threads), std::max(1, count));
    if (w == 1) {
        for (int i = 0; i < count; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) {
        int a = static_cast<int>(std::int64_t(count) * t / w), b = static_cast<int>(std::int64_t(count) * (t + 1) / w);
        pool.emplace_back([a, b, &f] {
            for (int i = a; i < b; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct proportion {
    int hits = 0;
    int total = 0;
    double fraction = 0;
    double ci_lo = 0;
    double ci_hi = 0;
};

inline proportion wilson(int hits, int total, double z = 1.959963984540054) {
    proportion p;
    p.hits = hits;
    p.total = total;
    if (total == 0) return p;
    const double nn = total, ph = hits / nn, z2 = z * z;
    const double centre = (ph + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z / (1 + z2 / nn) * std::sqrt(ph * (1 - ph) / nn + z2 / (4 * nn * nn));
    p.fraction = ph;
    p.ci_lo = std::max(0.0, centre - half);
    p.ci_hi = std::min(1.0, centre + half);
    return p;
}

struct resonance_pair {
    std::vector<int> k, l;
    int knorm = 0;
    double weight = 1;  // <l>_d
};

// Pairs with K_lo < |k| <= K_hi, |l| <= 2, (k,l) != 0, in the enumeration order of resonance_membership.
inline std::vector<resonance_pair> resonance_pairs(int n, int J, int K_lo, int K_hi, const std::vector<int>& w_sites, double d) {
    std::vector<std::vector<int>> ls;
    detail::for_each_k(J, 2, [&](const std::vector<int>& l) { ls.push_back(l); });
    std::vector<resonance_pair> out;
    detail::for_each_k(n, K_hi, [&](const std::vector<int>& k) {
        int kn = 0;
        for (int v : k) kn += std::abs(v);
        if (kn <= K_lo) return;
        for (const auto& l : ls) {
            bool zero = kn == 0 && std::all_of(l.begin(), l.end(), [](int v) { return v == 0; });
            if (zero) continue;
            out.push_back({k, l, kn, bracket_weight(l, w_sites, d)});
        }
    });
    return out;
}

inline std::optional<resonance_hit> first_resonance(const std::vector<double>& omega, const std::vector<double>& Omega,
                                                    const std::vector<resonance_pair>& pairs, double gamma, double tau) {
    for (const auto& p : pairs) {
        double s = 0;
        for (std::size_t q = 0; q < p.k.size(); ++q) s += p.k[q] * omega[q];
        for (std::size_t q = 0; q < p.l.size(); ++q) s += p.l[q] * Omega[q];
        if (std::abs(s) >= gamma * p.weight) continue;
        double thr = gamma * p.weight / std::pow(1.0 + p.knorm, tau);
        if (std::abs(s) < thr) return resonance_hit{p.k, p.l, std::abs(s), thr};
    }
    return std::nullopt;
}

struct fraction_estimate {
    double gamma = 0;
    int K = 0;
    proportion p;
};

inline std::vector<bool> excluded_mask(const parameter_box& box, const std::vector<std::vector<double>>& pts, double gamma,
                                       double tau, int K, double d) {
    if (K < 1) throw kam_error(failure::domain, "excluded_fraction requires K >= 1");
    const int J = static_cast<int>(box.w_sites.size());
    auto pairs = resonance_pairs(box.dim(), J, -1, K, box.w_sites, d);
    std::vector<char> hit(pts.size(), 0);
    parallel_for(static_cast<int>(pts.size()), box.threads, [&](int i) {
        hit[i] = first_resonance(box.omega_map(pts[i]), box.Omega_map(pts[i]), pairs, gamma, tau).has_value();
    });
    return {hit.begin(), hit.end()};
}

inline fraction_estimate excluded_fraction(const parameter_box& box, double gamma, double tau, int K, double d) {
    auto pts = sample_points(box);
    auto mask = excluded_mask(box, pts, gamma, tau, K, d);
    int hits = static_cast<int>(std::count(mask.begin(), mask.end(), true));
    return {gamma, K, wilson(hits, static_cast<int>(pts.size()))};
}

inline void write_fraction_csv(std::ostream& os, const std::vector<fraction_estimate>& rows) {
    os << "gamma,K,fraction,ci_lo,ci_hi\n";
    os.precision(17);
    for (const auto& r : rows) os << r.gamma << ',' << r.K << ',' << r.p.fraction << ',' << r.p.ci_lo << ',' << r.p.ci_hi << '\n';
}

struct shell_loss {
    int nu = 0;
    int K_prev = 0;
    int K = 0;
    double gamma = 0;
    proportion p;
    double measure = 0;     // fraction times box volume
    double measure_lo = 0;  // lower CI end times box volume
    double envelope = 0;    // c gamma0 / (1 + K_prev)
    bool within = true;
};

struct loss_report {
    std::vector<shell_loss> shells;
    double c_fit = 0;
    bool decreasing = true;
    bool envelope_ok = true;
};

// Shell nu removes the points of Pi_{nu-1} resonant at some K_{nu-1} < |k| <= K_nu with gamma_nu.
// Frequencies are frozen at the unperturbed maps. c is the smallest constant covering the first
// `fit_shells` shells (default: half, rounded up); the remaining shells are checked against
// c gamma0 / (1 + K_{nu-1}) at the lower end of their CI.
inline loss_report stepwise_loss(const parameter_box& box, const std::vector<std::pair<double, int>>& gamma_K, double gamma0,
                                 double tau, double d, int fit_shells = -1) {
    auto pts = sample_points(box);
    const int J = static_cast<int>(box.w_sites.size());
    const int N = static_cast<int>(pts.size());
    std::vector<char> alive(N, 1);
    std::vector<std::vector<double>> om(N), Om(N);
    for (int i = 0; i < N; ++i) {
        om[i] = box.omega_map(pts[i]);
        Om[i] = box.Omega_map(pts[i]);
    }
    loss_report rep;
    for (std::size_t v = 1; v < gamma_K.size(); ++v) {
        shell_loss sl;
        sl.nu = static_cast<int>(v);
        sl.K_prev = gamma_K[v - 1].second;
        sl.K = gamma_K[v].second;
        sl.gamma = gamma_K[v].first;
        std::vector<char> hit(N, 0);
        if (sl.K > sl.K_prev) {
            auto pairs = resonance_pairs(box.dim(), J, sl.K_prev, sl.K, box.w_sites, d);
            parallel_for(N, box.threads, [&](int i) {
                if (alive[i]) hit[i] = first_resonance(om[i], Om[i], pairs, sl.gamma, tau).has_value();
            });
        }
        int hits = 0;
        for (int i = 0; i < N; ++i)
            if (hit[i]) {
                ++hits;
                alive[i] = 0;
            }
        sl.p = wilson(hits, N);
        sl.measure = sl.p.fraction * box.volume();
        sl.measure_lo = sl.p.ci_lo * box.volume();
        rep.shells.push_back(sl);
    }
    const int nfit = fit_shells >= 0 ? fit_shells : (static_cast<int>(rep.shells.size()) + 1) / 2;
    for (int i = 0; i < nfit && i < static_cast<int>(rep.shells.size()); ++i)
        rep.c_fit = std::max(rep.c_fit, rep.shells[i].measure * (1.0 + rep.shells[i].K_prev) / gamma0);
    for (std::size_t i = 0; i < rep.shells.size(); ++i) {
        auto& sl = rep.shells[i];
        sl.envelope = rep.c_fit * gamma0 / (1.0 + sl.K_prev);
        sl.within = sl.measure_lo <= sl.envelope * (1 + 1e-12);
        rep.envelope_ok = rep.envelope_ok && sl.within;
        if (i > 0 && sl.measure > rep.shells[i - 1].measure) rep.decreasing = false;
    }
    return rep;
}

// Largest finite-difference quotient over all sample pairs: a lower bound of the Lipschitz semi-norm.
// Values are compared in the max norm, parameters in the Euclidean norm.
inline double lipschitz_seminorm(const std::vector<std::vector<double>>& xi, const std::vector<std::vector<double>>& values) {
    if (xi.size() < 2 || xi.size() != values.size()) throw kam_error(failure::domain, "lipschitz_seminorm needs >= 2 matched samples");
    double best = 0;
    for (std::size_t i = 0; i < xi.size(); ++i)
        for (std::size_t j = i + 1; j < xi.size(); ++j) {
            double dx = 0, dv = 0;
            for (std::size_t q = 0; q < xi[i].size(); ++q) dx += (xi[i][q] - xi[j][q]) * (xi[i][q] - xi[j][q]);
            for (std::size_t q = 0; q < values[i].size(); ++q) dv = std::max(dv, std::abs(values[i][q] - values[j][q]));
            dx = std::sqrt(dx);
            if (dx > 0) best = std::max(best, dv / dx);
        }
    return best;
}

inline double lipschitz_seminorm(const frequency_map& f, const std::vector<std::vector<double>>& xi) {
    std::vector<std::vector<double>> v;
    for (const auto& x : xi) v.push_back(f(x));
    return lipschitz_seminorm(xi, v);
}

// |w_* - w| + (gamma / 2M) |w_* - w|^Lip over the samples.
inline double frequency_shift_combination(const std::vector<std::vector<double>>& xi, const std::vector<std::vector<double>>& shift,
                                          double gamma, double M) {
    double sup = 0;
    for (const auto& s : shift)
        for (double v : s) sup = std::max(sup, std::abs(v));
    return sup + gamma / (2 * M) * lipschitz_seminorm(xi, shift);
}

// Smallest |omega(a) - omega(b)| / |a - b| over sample pairs; positive means injective on the samples.
inline double injectivity_ratio(const frequency_map& f, const std::vector<std::vector<double>>& xi) {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xi.size(); ++i)
        for (std::size_t j = i + 1; j < xi.size(); ++j) {
            auto a = f(xi[i]), b = f(xi[j]);
            double dx = 0, dv = 0;
            for (std::size_t q = 0; q < xi[i].size(); ++q) dx += (xi[i][q] - xi[j][q]) * (xi[i][q] - xi[j][q]);
            for (std::size_t q = 0; q < a.size(); ++q) dv += (a[q] - b[q]) * (a[q] - b[q]);
            if (dx > 0) worst = std::min(worst, std::sqrt(dv / dx));
        }
    return worst;
}

struct zero_set_probe {
    int sign_changes = 0;  // along the grid lines parallel to axis 0
    double thickness = 0;  // fraction of grid points with |<k,omega> + <l,Omega>| < tol
};

// Spot check of the zero set of <k,omega(xi)> + <l,Omega(xi)> on a regular grid.
inline zero_set_probe probe_zero_set(const parameter_box& box, const std::vector<int>& k, const std::vector<int>& l, int per_axis,
                                     double tol) {
    validate(box);
    const int n = box.dim();
    zero_set_probe out;
    std::vector<int> idx(n, 0);
    int total = 0, thin = 0;
    auto value = [&](const std::vector<double>& xi) {
        auto om = box.omega_map(xi), Om = box.Omega_map(xi);
        double s = 0;
        for (int q = 0; q < n && q < static_cast<int>(k.size()); ++q) s += k[q] * om[q];
        for (std::size_t q = 0; q < l.size(); ++q) s += l[q] * Om[q];
        return s;
    };
    while (true) {
        double prev = 0;
        for (int a = 0; a < per_axis; ++a) {
            std::vector<double> xi(n);
            xi[0] = box.lo[0] + (a + 0.5) * (box.hi[0] - box.lo[0]) / per_axis;
            for (int q = 1; q < n; ++q) xi[q] = box.lo[q] + (idx[q] + 0.5) * (box.hi[q] - box.lo[q]) / per_axis;
            double v = value(xi);
            if (a > 0 && ((prev < 0 && v >= 0) || (prev > 0 && v <= 0))) ++out.sign_changes;
            if (std::abs(v) < tol) ++thin;
            ++total;
            prev = v;
        }
        int q = 1;
        while (q < n && ++idx[q] == per_axis) idx[q++] = 0;
        if (q >= n) break;
    }
    out.thickness = total ? double(thin) / total : 0.0;
    return out;
}

}  // namespace kamforge
