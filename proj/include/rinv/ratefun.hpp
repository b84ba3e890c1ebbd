// rinv/ratefun.hpp
//
// Index functions psi, the conjugate (-psi)^*, the derived rate functions
// phi^{-1}, phi and psi~, the rate lemma bounds and the frozen Newton schedule.

#ifndef RINV_RATEFUN_HPP
#define RINV_RATEFUN_HPP

#include "rinv/core.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace rinv {

struct IndexFunction {
    enum class Family { hoelder, logarithmic };

    Family family = Family::hoelder;
    double mu = 0.5;              // Hoelder exponent, 0 < mu <= 1
    double nu = 1.0;              // logarithmic exponent, nu > 0
    double t0 = 1.0 / M_E;        // logarithmic cut-off, 0 < t0 <= 1/e

    static IndexFunction hoelder(double mu) {
        IndexFunction f;
        f.family = Family::hoelder;
        f.mu = mu;
        f.validate();
        return f;
    }

    static IndexFunction logarithmic(double nu, double t0 = 1.0 / M_E) {
        IndexFunction f;
        f.family = Family::logarithmic;
        f.nu = nu;
        f.t0 = t0;
        f.validate();
        return f;
    }

    void validate() const {
        if (family == Family::hoelder) {
            require(mu > 0.0 && mu <= 1.0, ErrorKind::domain, "hoelder exponent must lie in (0,1]");
        } else {
            require(nu > 0.0, ErrorKind::domain, "logarithmic exponent must be positive");
            require(t0 > 0.0 && t0 <= 1.0 / M_E + 1e-15, ErrorKind::domain, "t0 must lie in (0,1/e]");
        }
    }

    std::string describe() const {
        if (family == Family::hoelder) return "hoelder(mu=" + std::to_string(mu) + ")";
        return "log(nu=" + std::to_string(nu) + ",t0=" + std::to_string(t0) + ")";
    }
};

inline double eval_psi(const IndexFunction& f, double t) {
    require(t >= 0.0, ErrorKind::domain, "index function evaluated at negative argument");
    if (t == 0.0) return 0.0;
    if (f.family == IndexFunction::Family::hoelder) return std::pow(t, f.mu);
    double tc = std::clamp(t, 1e-300, f.t0);
    return std::pow(-std::log(tc), -f.nu);
}

inline double eval_psi_derivative(const IndexFunction& f, double t) {
    require(t >= 0.0, ErrorKind::domain, "index function derivative at negative argument");
    if (f.family == IndexFunction::Family::hoelder) {
        if (f.mu == 1.0) return 1.0;
        if (t == 0.0) return kInf;
        return f.mu * std::pow(t, f.mu - 1.0);
    }
    if (t >= f.t0) return 0.0;
    if (t == 0.0) return kInf;
    double tc = std::max(t, 1e-300);
    double l = -std::log(tc);
    return f.nu * std::pow(l, -f.nu - 1.0) / tc;
}

// sup_{0 <= t <= t_max} (s t + psi(t)) by a geometric scan followed by
// golden-section refinement of the best bracket.
inline double conj_neg_psi_numeric(const IndexFunction& f, double s, double t_max = 1e6) {
    require(s <= 0.0, ErrorKind::domain, "(-psi)^* is +infinity for positive arguments");
    auto g = [&](double t) { return s * t + eval_psi(f, t); };

    constexpr int per_decade = 16;
    const int steps = per_decade * 306;
    std::vector<double> ts;
    ts.reserve(steps + 2);
    for (int k = 0; k <= steps; ++k) ts.push_back(t_max * std::pow(10.0, -double(k) / per_decade));
    ts.push_back(0.0);

    std::size_t best = ts.size() - 1;
    double best_val = g(0.0);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        double v = g(ts[k]);
        if (v > best_val) {
            best_val = v;
            best = k;
        }
    }
    if (best == ts.size() - 1) return best_val;

    double a = (best + 1 < ts.size()) ? ts[best + 1] : 0.0;
    double b = (best == 0) ? ts[0] : ts[best - 1];
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double gc = g(c), gd = g(d);
    for (int it = 0; it < 200; ++it) {
        if (b - a <= std::max(1e-12 * (std::abs(a) + std::abs(b)), 1e-300)) break;
        if (gc > gd) {
            b = d;
            d = c;
            gd = gc;
            c = b - invphi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + invphi * (b - a);
            gd = g(d);
        }
    }
    return std::max({best_val, gc, gd, g(0.5 * (a + b))});
}

// (-psi)^*(s) = sup_{t >= 0} (s t + psi(t)) for s <= 0.
inline double conj_neg_psi(const IndexFunction& f, double s) {
    require(s <= 0.0, ErrorKind::domain, "(-psi)^* is +infinity for positive arguments");
    if (f.family == IndexFunction::Family::hoelder) {
        if (s == 0.0) return kInf;
        if (f.mu == 1.0) return s <= -1.0 ? 0.0 : kInf;
        double mu = f.mu;
        double e = mu / (1.0 - mu);
        double c_mu = std::pow(mu, e) - std::pow(mu, 1.0 / (1.0 - mu));
        return c_mu * std::pow(-1.0 / s, e);
    }
    if (s == 0.0) return eval_psi(f, f.t0);
    return conj_neg_psi_numeric(f, s);
}

inline double phi_inverse(const IndexFunction& f, double Cbar, double alpha) {
    require(alpha > 0.0, ErrorKind::domain, "phi^{-1} requires alpha > 0");
    require(Cbar > 0.0, ErrorKind::domain, "phi^{-1} requires Cbar > 0");
    return alpha * conj_neg_psi(f, -1.0 / (2.0 * Cbar * alpha));
}

// Inverse of phi^{-1} by bisection on log(alpha).
inline double phi(const IndexFunction& f, double Cbar, double t) {
    require(t > 0.0, ErrorKind::domain, "phi requires t > 0");
    double lo = 1.0, hi = 1.0;
    while (phi_inverse(f, Cbar, lo) > t) {
        lo *= 1e-4;
        if (lo < 1e-290) fail(ErrorKind::no_bracket, "phi: no lower bracket");
    }
    while (phi_inverse(f, Cbar, hi) < t) {
        hi *= 1e4;
        if (hi > 1e290) fail(ErrorKind::no_bracket, "phi: no upper bracket");
    }
    double llo = std::log(lo), lhi = std::log(hi);
    for (int it = 0; it < 200 && lhi - llo > 1e-15; ++it) {
        double lm = 0.5 * (llo + lhi);
        if (phi_inverse(f, Cbar, std::exp(lm)) < t) llo = lm;
        else lhi = lm;
    }
    double alpha = std::exp(0.5 * (llo + lhi));
    double back = phi_inverse(f, Cbar, alpha);
    if (!(std::abs(back - t) <= 1e-6 * t))
        fail(ErrorKind::no_bracket, "phi: phi^{-1} has no preimage for the requested value");
    return alpha;
}

inline double psi_tilde(const IndexFunction& f, double Cbar, double tau_bar, double d) {
    require(d > 0.0, ErrorKind::domain, "psi~ requires d > 0");
    require(tau_bar > 0.0, ErrorKind::domain, "psi~ requires tau_bar > 0");
    double a = phi(f, Cbar, tau_bar * d);
    return conj_neg_psi(f, -1.0 / (2.0 * Cbar * a));
}

struct RateInstance {
    double c1 = 1.0, c2 = 1.0, C3 = 1.0;
    double alpha = 1.0;
    double d = 0.0;
    double res = 0.0, err = 0.0;
};

struct RateBounds {
    double err_bound = 0.0;
    double res_bound = 0.0;
};

inline bool rate_feasible(const RateInstance& r, const IndexFunction& f, double slack = 1e-13) {
    double lhs = r.c1 * r.res + r.c2 * r.alpha * r.err;
    double rhs = r.d + r.alpha * eval_psi(f, r.C3 * r.res);
    return lhs <= rhs + slack * std::max(1.0, std::abs(rhs));
}

// Bound on lambda c1 res + c2 alpha err obtained by splitting res into
// lambda res + (1 - lambda) res and absorbing the second part into psi.
inline double rate_split_bound(const RateInstance& r, const IndexFunction& f, double lambda) {
    require(lambda >= 0.0 && lambda < 1.0, ErrorKind::domain, "splitting parameter must lie in [0,1)");
    require(r.c1 > 0 && r.C3 > 0 && r.alpha > 0, ErrorKind::domain, "rate constants must be positive");
    double ct = r.c1 / r.C3;
    return r.d + r.alpha * conj_neg_psi(f, -(1.0 - lambda) * ct / r.alpha);
}

inline RateBounds rate_bounds(const RateInstance& r, const IndexFunction& f) {
    require(r.c1 > 0 && r.c2 > 0 && r.C3 > 0 && r.alpha > 0 && r.d >= 0, ErrorKind::domain,
            "rate lemma requires positive constants and d >= 0");
    require(rate_feasible(r, f), ErrorKind::precondition, "instance violates the rate lemma hypothesis");
    double ct = r.c1 / r.C3;
    RateBounds b;
    b.err_bound = (r.d / r.alpha + conj_neg_psi(f, -ct / r.alpha)) / r.c2;
    b.res_bound = 2.0 / r.c1 * (r.d + r.alpha * conj_neg_psi(f, -ct / (2.0 * r.alpha)));
    return b;
}

// max over the grid of psi(a + b) - psi(a) - psi(b), clipped at zero.
inline double check_subadditive(const IndexFunction& f, std::span<const std::pair<double, double>> pts) {
    double worst = 0.0;
    for (auto [a, b] : pts) {
        require(a > 0.0 && b > 0.0, ErrorKind::domain, "subadditivity grid must be positive");
        worst = std::max(worst, eval_psi(f, a + b) - eval_psi(f, a) - eval_psi(f, b));
    }
    return worst;
}

inline double check_subadditive(const IndexFunction& f, std::span<const double> axis) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(axis.size() * axis.size());
    for (double a : axis)
        for (double b : axis) pts.emplace_back(a, b);
    return check_subadditive(f, std::span<const std::pair<double, double>>(pts));
}

struct NewtonSchedule {
    double alpha0 = 1.0;
    double q = 0.5;
    double C_eta = 1.0;
    double tau = 1.0;
    double p = 2.0;
    double Cbar = 1.0;
    double C_conj_growth = 2.0;
    int max_steps = 200;
};

struct ScheduleResult {
    std::vector<double> alphas;   // alpha_0 .. alpha_{n*}
    std::vector<double> etas;
    int n_star = 0;
    double alpha_target = 0.0;    // phi(tau delta^p)
    double growth_measured = 1.0;
    bool growth_ok = true;
};

inline ScheduleResult newton_schedule(const IndexFunction& f, const NewtonSchedule& s, double delta) {
    require(s.alpha0 > 0.0, ErrorKind::domain, "alpha0 must be positive");
    require(s.q > 0.0 && s.q < 1.0, ErrorKind::domain, "decay factor must lie in (0,1)");
    require(delta > 0.0, ErrorKind::domain, "noise level must be positive");
    ScheduleResult out;
    out.alpha_target = phi(f, s.Cbar, s.tau * std::pow(delta, s.p));
    double a = s.alpha0;
    for (int n = 0;; ++n) {
        out.alphas.push_back(a);
        out.etas.push_back(s.C_eta * phi_inverse(f, s.Cbar, a));
        if (a <= out.alpha_target * (1.0 + 1e-9)) {
            out.n_star = n;
            break;
        }
        if (n >= s.max_steps) fail(ErrorKind::no_bracket, "Newton schedule exceeded the step cap");
        a *= s.q;
    }
    double g = 1.0;
    for (int n = 0; n < out.n_star; ++n) {
        double num = conj_neg_psi(f, -1.0 / (2.0 * s.Cbar * out.alphas[n]));
        double den = conj_neg_psi(f, -1.0 / (2.0 * s.Cbar * out.alphas[n + 1]));
        if (den > 0.0) g = std::max(g, num / den);
    }
    out.growth_measured = g;
    out.growth_ok = g <= s.C_conj_growth * (1.0 + 1e-9);
    return out;
}

// Admissible upper bound for the tangential cone constant.
inline double c_tcr_bound(double p, double C_growth) {
    return std::pow(2.0, 2.0 - 2.0 * p) / std::max(1.0, C_growth * (1.0 + std::pow(2.0, 1.0 - p)) + 1.0);
}

// Admissible upper bound for beta_n / alpha_n.
inline double c_beta_alpha_bound(double b, double gamma, double C_psi = 1.0, double CQ_tilde = 1.0) {
    return std::min(1.0 - b, gamma - C_psi) / (4.0 * CQ_tilde);
}

}  // namespace rinv

#endif
