#ifndef KAMFORGE_NORMS_HPP
#define KAMFORGE_NORMS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "series.hpp"

namespace kamforge {

struct weighted_norm {
    double a = 0.0;      // spatial weight
    double p = 1.0;      // Sobolev weight of the domain
    double p_bar = 1.0;  // Sobolev weight of the target
    double r = 0.5;
    double s = 0.5;
    double a_exp = 2.0;  // w-ball radius is r^a_exp
    std::vector<int> z_sites;  // lattice site of each degenerate mode (length b)
    std::vector<int> w_sites;  // lattice site of each retained normal mode (length J)

    double site_weight(int j, double pw) const { return std::pow(double(j), pw) * std::exp(a * j); }
    int z_site(const dims& d, int q) const {
        int i = q % std::max(d.b, 1);
        return i < static_cast<int>(z_sites.size()) ? z_sites[i] : i + 1;
    }
    int w_site(const dims& d, int q) const {
        return q < static_cast<int>(w_sites.size()) ? w_sites[q] : d.b + q + 1;
    }
    void validate() const {
        if (!(p >= 1.0) || !(p_bar >= p) || !(r > 0 && r <= 1) || !(s > 0 && s <= 1) || !(a >= 0) || !(a_exp >= 2))
            throw kam_error(failure::domain, "weighted norm parameters out of range");
    }
};

inline double ellap_norm(const std::vector<cplx>& v, const std::vector<int>& sites, double a, double p) {
    double s = 0;
    for (std::size_t q = 0; q < v.size(); ++q) {
        double j = q < sites.size() ? sites[q] : double(q + 1);
        double wgt = std::pow(j, p) * std::exp(a * j);
        s += std::norm(v[q]) * wgt * wgt;
    }
    return std::sqrt(s);
}

struct vf_norm_parts {
    double x_block = 0;   // |P_y| / r^(a-2)
    double y_block = 0;   // |P_x| / r^a
    double z_block = 0;   // ||(P_z)||_{a,p_bar} / r^(a-1)
    double w_block = 0;   // ||P_wb|| + ||P_w||
    double total() const { return x_block + y_block + z_block + w_block; }
};

// Weighted-l1 majorant of the Hamiltonian vector field X_P = (P_y, -P_x, iP_wb, -iP_w) over D(s,r),
// accumulated one term at a time.
class vf_majorant {
public:
    vf_majorant(const dims& d, const weighted_norm& nrm)
        : d_(d), nrm_(nrm), log_r_(std::log(nrm.r)), ys_(d.n, 0.0), xs_(d.n, 0.0), zs_(2 * d.b, 0.0), ws_(d.J, 0.0),
          wbs_(d.J, 0.0) {}

    void add(const mono& m, double abs_c) {
        if (abs_c == 0) return;
        const dims& d = d_;
        double T = std::exp(std::log(abs_c) + k_norm(m, d) * nrm_.s + log_r_ * (grade(m, d) + nrm_.a_exp * w_degree(m, d)));
        for (int q = 0; q < d.n; ++q) {
            ys_[q] += m.e[d.oy() + q] * T;
            xs_[q] += std::abs(int(m.e[d.ox() + q])) * T;
        }
        for (int q = 0; q < 2 * d.b; ++q) zs_[q] += m.e[d.oz() + q] * T;
        for (int q = 0; q < d.J; ++q) {
            ws_[q] += m.e[d.ow() + q] * T;
            wbs_[q] += m.e[d.owb() + q] * T;
        }
    }

    vf_norm_parts parts() const {
        const dims& d = d_;
        const double r = nrm_.r, A = nrm_.a_exp;
        vf_norm_parts out;
        double ymax = 0, xmax = 0;
        for (int q = 0; q < d.n; ++q) {
            ymax = std::max(ymax, ys_[q] / (r * r));
            xmax = std::max(xmax, xs_[q]);
        }
        out.x_block = ymax / std::pow(r, A - 2);
        out.y_block = xmax / std::pow(r, A);
        double zsq = 0;
        for (int q = 0; q < 2 * d.b; ++q) {
            double v = nrm_.site_weight(nrm_.z_site(d, q), nrm_.p_bar) * zs_[q] / r;
            zsq += v * v;
        }
        out.z_block = std::sqrt(zsq) / std::pow(r, A - 1);
        double usq = 0, vsq = 0;
        for (int q = 0; q < d.J; ++q) {
            double wgt = nrm_.site_weight(nrm_.w_site(d, q), nrm_.p_bar) / std::pow(r, A);
            usq += std::pow(wgt * wbs_[q], 2);
            vsq += std::pow(wgt * ws_[q], 2);
        }
        out.w_block = std::sqrt(usq) + std::sqrt(vsq);
        return out;
    }

private:
    dims d_;
    weighted_norm nrm_;
    double log_r_;
    std::vector<double> ys_, xs_, zs_, ws_, wbs_;
};

inline vf_norm_parts majorant_vf_parts(const series& P, const weighted_norm& nrm) {
    vf_majorant acc(P.shape(), nrm);
    for (const auto& [m, c] : P.terms()) acc.add(m, std::abs(c));
    return acc.parts();
}

inline double majorant_vf_norm(const series& P, const weighted_norm& nrm) { return majorant_vf_parts(P, nrm).total(); }

}  // namespace kamforge

#endif
