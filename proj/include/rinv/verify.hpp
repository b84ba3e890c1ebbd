// rinv/verify.hpp
//
// Invariant checks shared by `rinv_cli verify` and the acceptance runner.

#ifndef RINV_VERIFY_HPP
#define RINV_VERIFY_HPP

#include "rinv/bench.hpp"
#include "rinv/eit.hpp"

namespace rinv {

struct CheckRow {
    std::string name;
    bool pass = false;
    double value = 0.0;
    std::string detail;
};

inline std::vector<double> log_axis(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = std::pow(10.0, lo + (hi - lo) * k / (n - 1));
    return v;
}

// Closed-form Hoelder conjugate against the numeric supremum, max relative error.
inline double conjugate_oracle_error(std::span<const double> mus, int points) {
    double worst = 0.0;
    for (double mu : mus) {
        IndexFunction f = IndexFunction::hoelder(mu);
        for (double s : log_axis(-1.0, 2.0, points)) {  // keeps the maximiser inside the scan window
            double exact = conj_neg_psi(f, -s), num = conj_neg_psi_numeric(f, -s);
            worst = std::max(worst, std::abs(num - exact) / exact);
        }
    }
    return worst;
}

struct RateLemmaStats {
    int accepted = 0;
    long attempts = 0;
    int err_violations = 0;
    int res_violations = 0;
    double worst_err_margin = -kInf;  // max (err - bound) / bound
    double worst_res_margin = -kInf;
};

// Rejection-sampled feasible instances of c1 res + c2 alpha err <= d + alpha psi(C3 res).
inline RateLemmaStats check_rate_lemma(const IndexFunction& f, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto logu = [&](double lo, double hi) { return std::pow(10.0, lo + (hi - lo) * u(rng)); };
    RateLemmaStats st;
    while (st.accepted < count) {
        require(++st.attempts < 100L * count + 100000, ErrorKind::solver, "rate lemma sampler starved");
        RateInstance r;
        r.c1 = logu(-1, 1);
        r.c2 = logu(-1, 1);
        r.C3 = logu(-1, 1);
        r.alpha = logu(-6, 0);
        r.d = u(rng) < 0.1 ? 0.0 : logu(-8, 0);
        // scale the unknowns to the size the hypothesis allows
        double res_cap = (r.d + r.alpha) / r.c1;
        r.res = res_cap * logu(-6, 0.3);
        r.err = (r.d / r.alpha + 1.0) / r.c2 * logu(-6, 0.3);
        if (!rate_feasible(r, f, 0.0)) continue;
        ++st.accepted;
        RateBounds b = rate_bounds(r, f);
        double me = (r.err - b.err_bound) / std::max(b.err_bound, 1e-300);
        double mr = std::isfinite(b.res_bound) ? (r.res - b.res_bound) / std::max(b.res_bound, 1e-300) : -kInf;
        st.worst_err_margin = std::max(st.worst_err_margin, me);
        st.worst_res_margin = std::max(st.worst_res_margin, mr);
        if (r.err > b.err_bound * (1.0 + 1e-12)) ++st.err_violations;
        if (r.res > b.res_bound * (1.0 + 1e-12)) ++st.res_violations;
    }
    return st;
}

inline double subadditivity_violation(const IndexFunction& f, int n = 100) {
    double hi = f.family == IndexFunction::Family::hoelder ? 2.0 : std::log10(f.t0) - 1e-9;
    std::vector<double> axis = log_axis(-8.0, hi, n);
    return check_subadditive(f, std::span<const double>(axis));
}

inline double worst_range_invariance(const RangeInvariantModel& m, double radius, int samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int k = 0; k < samples; ++k) {
        Vector x = sample_admissible(m, rng, m.x0(), radius);
        worst = std::max(worst, range_invariance_residual(m, x));
    }
    return worst;
}

// Central difference of r against r'(x) h, relative.
inline double r_jacobian_fd_error(const RangeInvariantModel& m, const Vector& x, const Vector& h, double eps = 1e-6) {
    Vector fd = (m.r(x + eps * h) - m.r(x - eps * h)) / (2.0 * eps);
    Vector an = m.r_jacobian(x)->apply(h);
    return (fd - an).norm() / std::max(an.norm(), 1e-300);
}

inline double r_inverse_jacobian_fd_error(const RangeInvariantModel& m, const Vector& rh, const Vector& h,
                                          double eps = 1e-6) {
    Vector fd = (m.r_inverse(rh + eps * h) - m.r_inverse(rh - eps * h)) / (2.0 * eps);
    Vector an = m.r_inverse_jacobian(rh)->apply(h);
    return (fd - an).norm() / std::max(an.norm(), 1e-300);
}

inline double forward_fd_error(const ForwardMap& F, const Vector& q, const Vector& h, double eps = 1e-6) {
    Vector fd = (F.eval(q + eps * h) - F.eval(q - eps * h)) / (2.0 * eps);
    Vector an = F.jacobian(q)->apply(h);
    return (fd - an).norm() / std::max(an.norm(), 1e-300);
}

// |<A v, w> - <v, A^T w>| / (|A v| |w|) for random v, w.
inline double adjoint_error(const LinearOperator& A, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(A.cols()), w(A.rows());
    for (Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
    for (Index i = 0; i < w.size(); ++i) w[i] = nd(rng);
    Vector Av = A.apply(v);
    double den = std::max(Av.norm() * w.norm(), v.norm() * A.adjoint(w).norm());
    return std::abs(Av.dot(w) - v.dot(A.adjoint(w))) / std::max(den, 1e-300);
}

inline Vector random_direction(Index n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = nd(rng);
    return scale * v / v.norm();
}

// ------------------------------------------------------- Liouville accuracy

struct LiouvilleErrors {
    std::vector<int> sizes;
    std::vector<double> inverse, forward, roundtrip;
};

// Discrete transforms against a smooth radial pair sqrt(sigma) = 1 + a (1 - r^2/R^2)^5.
inline LiouvilleErrors liouville_errors(std::vector<int> sizes, double R_factor = 0.3, double amp = 0.5) {
    LiouvilleErrors out;
    out.sizes = sizes;
    for (int n : sizes) {
        Grid2D G = Grid2D::square(n);
        const Eigen::Vector2d c0 = G.center();
        const double R = R_factor * G.side(), rho = 0.35 * G.side();
        auto pair = [&](double x, double y, bool want_sigma) {
            double r2 = (Eigen::Vector2d(x, y) - c0).squaredNorm(), w = 1.0 - r2 / (R * R);
            if (w <= 0.0) return want_sigma ? 1.0 : 0.0;
            double s = 1.0 + amp * std::pow(w, 5);
            double lap = -20.0 * amp * std::pow(w, 4) / (R * R) + 80.0 * amp * r2 * std::pow(w, 3) / std::pow(R, 4);
            return want_sigma ? s * s : lap / s;
        };
        Vector sig = G.sample([&](double x, double y) { return pair(x, y, true); });
        Vector cex = G.sample([&](double x, double y) { return pair(x, y, false); });
        auto l2 = [&](const Vector& v) { return std::sqrt((G.volumes().array() * v.array().square()).sum()); };
        Vector sh = liouville_inverse(G, cex, rho, 1.0);
        Vector ch = liouville_forward(G, sig);
        Vector back = liouville_inverse(G, ch, rho, 1.0);
        out.inverse.push_back(l2(sh - sig) / l2(sig.array() - 1.0));
        out.forward.push_back(l2(ch - cex) / l2(cex));
        out.roundtrip.push_back(l2(back - sig) / l2(sig));
    }
    return out;
}

// |Lambda_kk - 1/k| of the unit-disk N-t-D matrix for sigma = 1, per ring count.
inline std::vector<std::vector<double>> disk_ntd_errors(const std::vector<int>& rings, int freqs = 3) {
    std::vector<std::vector<double>> out;
    for (int nr : rings) {
        Grid2D G = Grid2D::disk(nr);
        BoundaryBasis B = trig_boundary_basis(G, 2 * freqs);
        Matrix L = ntd_matrix(G, Vector::Ones(G.num_nodes()), B);
        std::vector<double> e;
        for (int n = 0; n < 2 * freqs; ++n) e.push_back(std::abs(L(n, n) - 1.0 / double(n / 2 + 1)));
        out.push_back(e);
    }
    return out;
}

// Median tangential ratio of r over random pairs in a model ball.
inline double median_tangential_ratio(const RangeInvariantModel& m, double radius, int pairs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> v;
    for (int k = 0; k < pairs; ++k) {
        Vector a = sample_admissible(m, rng, m.x0(), radius);
        Vector b = sample_admissible(m, rng, m.x0(), radius);
        v.push_back(tangential_ratio_r(m, a, b));
    }
    return median(v);
}

// -------------------------------------------------------------- battery

inline double ri_tolerance(const RangeInvariantModel& m) {
    std::string n = m.name();
    if (n == "canonical") return 1e-12;
    if (n == "schroedinger_aao") return 1e-10;
    return 1e-9;
}

inline std::vector<CheckRow> verify_battery(const RangeInvariantModel& m, double radius, std::uint64_t seed = 1) {
    std::vector<CheckRow> rows;
    auto add = [&](std::string name, bool pass, double value, std::string detail = "") {
        rows.push_back({std::move(name), pass, value, std::move(detail)});
    };
    {
        std::vector<double> mus{0.3, 0.5, 0.75};
        double e = conjugate_oracle_error(mus, 20);
        add("conjugate_oracle", e <= 1e-8, e);
    }
    for (IndexFunction f : {IndexFunction::hoelder(0.5), IndexFunction::logarithmic(1.0)}) {
        RateLemmaStats st = check_rate_lemma(f, 200, seed);
        add("rate_lemma_" + f.describe(), st.err_violations + st.res_violations == 0,
            double(st.err_violations + st.res_violations));
    }
    for (IndexFunction f : {IndexFunction::hoelder(0.3), IndexFunction::hoelder(1.0), IndexFunction::logarithmic(1.0)}) {
        double v = subadditivity_violation(f);
        add("subadditivity_" + f.describe(), v <= 1e-12, v);
    }
    {
        double tol = ri_tolerance(m);
        double v = worst_range_invariance(m, radius, 10, seed);
        add("range_invariance_" + m.name(), v <= tol, v);
    }
    {
        std::mt19937_64 rng(seed + 1);
        Vector x = sample_admissible(m, rng, m.x0(), 0.5 * radius);
        Vector h = random_direction(m.dim_x(), seed + 2, 1.0);
        double e = r_jacobian_fd_error(m, x, h);
        add("r_jacobian_fd", e <= 1e-5, e);
        Vector rh = m.r(x);
        Vector g = random_direction(m.dim_rhat(), seed + 3, 1.0);
        double ei = r_inverse_jacobian_fd_error(m, rh, g);
        add("r_inverse_jacobian_fd", ei <= 1e-5, ei);
        double a = std::max({adjoint_error(m.K(), seed), adjoint_error(m.P(), seed + 1),
                             adjoint_error(*m.r_jacobian(x), seed + 2), adjoint_error(*m.reg().readout, seed + 3)});
        add("adjoint_probes", a <= 1e-10, a);
    }
    {
        LiouvilleErrors le = liouville_errors({17, 33, 65});
        double r1 = le.inverse[0] / le.inverse[1], r2 = le.inverse[1] / le.inverse[2];
        add("liouville_ratio", r1 >= 3 && r1 <= 5 && r2 >= 3 && r2 <= 5, std::min(r1, r2));
        double rt = *std::max_element(le.roundtrip.begin(), le.roundtrip.end());
        add("liouville_discrete_roundtrip", rt <= 1e-10, rt);
    }
    return rows;
}

}  // namespace rinv

#endif
