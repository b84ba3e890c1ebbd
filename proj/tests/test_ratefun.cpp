#include "rinv/verify.hpp"

#include <gtest/gtest.h>

using namespace rinv;

namespace {

// Brute-force sup_{t in [0, tmax]} (s t + psi(t)): log grid, then ternary refinement.
double sup_oracle(const IndexFunction& f, double s, double tmax = 1e6) {
    auto g = [&](double t) { return s * t + eval_psi(f, t); };
    double best_t = 0.0, best = g(0.0);
    const int N = 20000;
    for (int k = 0; k <= N; ++k) {
        double t = tmax * std::pow(10.0, -18.0 * k / N);
        if (g(t) > best) {
            best = g(t);
            best_t = t;
        }
    }
    double a = best_t * std::pow(10.0, -18.0 / N), b = std::min(tmax, best_t * std::pow(10.0, 18.0 / N));
    for (int it = 0; it < 300; ++it) {
        double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
        if (g(m1) < g(m2))
            a = m1;
        else
            b = m2;
    }
    return std::max(best, g(0.5 * (a + b)));
}

const IndexFunction H05 = IndexFunction::hoelder(0.5);
const IndexFunction H1 = IndexFunction::hoelder(1.0);
const IndexFunction L1 = IndexFunction::logarithmic(1.0);

}  // namespace

TEST(Psi, Values) {
    EXPECT_DOUBLE_EQ(eval_psi(H05, 0.25), 0.5);
    for (double t : {0.0, 0.3, 7.0}) EXPECT_DOUBLE_EQ(eval_psi(H1, t), t);
    EXPECT_NEAR(eval_psi(L1, std::exp(-4.0)), 0.25, 1e-15);
    EXPECT_EQ(eval_psi(L1, 0.0), 0.0);
    // plateau past the cut-off
    EXPECT_DOUBLE_EQ(eval_psi(L1, 1.0), eval_psi(L1, 1.0 / M_E));
}

TEST(Psi, DomainErrors) {
    EXPECT_THROW(eval_psi(H05, -1.0), Error);
    EXPECT_THROW(IndexFunction::hoelder(1.5), Error);
    EXPECT_THROW(IndexFunction::hoelder(0.0), Error);
    EXPECT_THROW(IndexFunction::logarithmic(-1.0), Error);
    EXPECT_THROW(IndexFunction::logarithmic(1.0, 0.5), Error);
    EXPECT_THROW(conj_neg_psi(H05, 0.1), Error);
}

TEST(Psi, MonotoneProperty) {
    for (const IndexFunction& f : {H05, H1, L1, IndexFunction::hoelder(0.3), IndexFunction::logarithmic(2.0, 0.1)}) {
        double prev = eval_psi(f, 0.0);
        EXPECT_EQ(prev, 0.0);
        for (double t : log_axis(-12, 2, 300)) {
            double v = eval_psi(f, t);
            EXPECT_LE(prev, v);
            prev = v;
        }
    }
}

TEST(Psi, LowRateBound) {
    // psi(t) >= c_psi t on (0, 1] with c_psi = inf psi(t)/t
    for (const IndexFunction& f : {H05, IndexFunction::hoelder(0.9), L1}) {
        double c = kInf;
        std::vector<double> ts = log_axis(-10, 0, 200);
        for (double t : ts) c = std::min(c, eval_psi(f, t) / t);
        EXPECT_GT(c, 0.0);
        for (double t : ts) EXPECT_GE(eval_psi(f, t), c * t * (1 - 1e-14));
    }
}

TEST(Psi, DerivativeFiniteDifference) {
    for (const IndexFunction& f : {H05, L1}) {
        for (double t : {1e-4, 1e-2, 0.2}) {
            double h = 1e-6 * t;
            double fd = (eval_psi(f, t + h) - eval_psi(f, t - h)) / (2 * h);
            EXPECT_NEAR(eval_psi_derivative(f, t), fd, 1e-6 * std::abs(fd));
        }
    }
}

TEST(Conjugate, HoelderExamples) {
    EXPECT_NEAR(conj_neg_psi(H05, -1.0 / 8.0), 2.0, 1e-14);
    EXPECT_NEAR(sup_oracle(H05, -1.0 / 8.0), 2.0, 1e-9);
    EXPECT_EQ(conj_neg_psi(H1, -1.0), 0.0);
    EXPECT_EQ(conj_neg_psi(H1, -0.5), kInf);
}

TEST(Conjugate, LogMatchesOracle) {
    double v = conj_neg_psi(L1, -100.0);
    EXPECT_NEAR(v, sup_oracle(L1, -100.0), 1e-8 * v);
    for (double s : {-1.0, -10.0, -1e3, -1e5}) {
        double c = conj_neg_psi(L1, s);
        EXPECT_NEAR(c, sup_oracle(L1, s), 1e-8 * c) << s;
    }
}

TEST(Conjugate, ClosedFormAgainstOracle) {
    for (double mu : {0.3, 0.5, 0.75}) {
        IndexFunction f = IndexFunction::hoelder(mu);
        for (double s : log_axis(-1, 2, 50)) {
            double exact = conj_neg_psi(f, -s);
            EXPECT_NEAR(sup_oracle(f, -s), exact, 1e-8 * exact) << "mu=" << mu << " s=" << s;
        }
    }
}

TEST(Phi, InverseExamples) {
    EXPECT_NEAR(phi_inverse(H05, 0.5, 1.0), 0.25, 1e-15);
    for (double a : {1e-3, 0.1, 1.0}) EXPECT_EQ(phi_inverse(H1, 1.0, a * 0.5), 0.0);
    double prev = 0.0;
    for (double a : log_axis(-6, 0, 20)) {
        double v = phi_inverse(H05, 2.0, a);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(Phi, Roundtrip) {
    EXPECT_NEAR(phi(H05, 0.5, 0.25), 1.0, 1e-10);
    for (double a : log_axis(-6, 0, 13)) EXPECT_NEAR(phi(H05, 1.0, phi_inverse(H05, 1.0, a)), a, 1e-8 * a);
    for (double t : log_axis(-8, -2, 10)) {
        double a = phi(L1, 1.0, t);
        EXPECT_NEAR(phi_inverse(L1, 1.0, a), t, 1e-8 * t);
    }
}

TEST(PsiTilde, HoelderExponent) {
    // psi~ reduces to const * d^mu for the Hoelder family
    for (double mu : {0.3, 0.5, 0.75}) {
        IndexFunction f = IndexFunction::hoelder(mu);
        std::vector<std::pair<double, double>> pts;
        for (double d : log_axis(-6, -2, 9)) pts.emplace_back(d, psi_tilde(f, 0.5, 1.0, d));
        auto [slope, c, r2] = fit_loglog(pts);
        EXPECT_NEAR(slope, mu, 1e-6);
        EXPECT_GT(r2, 1.0 - 1e-10);
        (void)c;
    }
}

TEST(PsiTilde, Monotone) {
    double prev = 0.0;
    for (double d : log_axis(-8, -1, 20)) {
        double v = psi_tilde(L1, 1.0, 2.0, d);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(PsiTilde, LogMatchesPsiRate) {
    std::vector<double> ratio;
    for (double d : {1e-8, 1e-7, 1e-6}) ratio.push_back(psi_tilde(L1, 1.0, 1.0, d) / eval_psi(L1, d));
    double lo = *std::min_element(ratio.begin(), ratio.end()), hi = *std::max_element(ratio.begin(), ratio.end());
    EXPECT_LT(hi / lo - 1.0, 0.10);
}

TEST(RateLemma, LinearPsiForcesZeroError) {
    RateInstance r;  // c1 = c2 = C3 = alpha = 1, d = 0
    r.res = 0.7;
    r.err = 0.0;
    ASSERT_TRUE(rate_feasible(r, H1));
    RateBounds b = rate_bounds(r, H1);
    EXPECT_EQ(b.err_bound, 0.0);
    r.err = 1e-3;
    EXPECT_FALSE(rate_feasible(r, H1));
}

TEST(RateLemma, InfeasibleRejected) {
    RateInstance r;
    r.res = 10.0;
    r.err = 10.0;
    EXPECT_THROW(rate_bounds(r, H05), Error);
}

TEST(RateLemma, SplitHalfGivesResidualBound) {
    RateInstance r{2.0, 0.5, 3.0, 1e-2, 1e-3, 0.0, 0.0};
    for (const IndexFunction& f : {H05, L1}) {
        RateBounds b = rate_bounds(r, f);
        EXPECT_NEAR(b.res_bound, 2.0 / r.c1 * rate_split_bound(r, f, 0.5), 1e-14 * b.res_bound);
        EXPECT_NEAR(b.err_bound, rate_split_bound(r, f, 0.0) / (r.alpha * r.c2), 1e-12 * b.err_bound);
    }
}

TEST(RateLemma, RandomFeasibleInstances) {
    for (const IndexFunction& f : {H05, L1}) {
        RateLemmaStats st = check_rate_lemma(f, 1000, 42);
        EXPECT_EQ(st.accepted, 1000);
        EXPECT_EQ(st.err_violations, 0) << f.describe();
        EXPECT_EQ(st.res_violations, 0) << f.describe();
    }
}

TEST(Subadditivity, Grids) {
    std::vector<double> hg = log_axis(-8, 2, 100);
    std::vector<double> lg = log_axis(-8, std::log10(1.0 / M_E) - 1e-9, 100);
    EXPECT_LE(check_subadditive(H05, std::span<const double>(hg)), 1e-12);
    EXPECT_LE(check_subadditive(L1, std::span<const double>(lg)), 1e-12);
    // mu = 1 is additive; only rounding remains
    EXPECT_LE(check_subadditive(H1, std::span<const double>(hg)), 1e-13);
    std::vector<std::pair<double, double>> bad{{0.0, 1.0}};
    EXPECT_THROW(check_subadditive(H05, std::span<const std::pair<double, double>>(bad)), Error);
}

TEST(NewtonSchedule, ZeroStepsWhenAlreadyBelow) {
    NewtonSchedule s;
    s.Cbar = 1.0;
    double delta = 1e-2;
    s.alpha0 = phi(H05, s.Cbar, s.tau * delta * delta);
    ScheduleResult r = newton_schedule(H05, s, delta);
    EXPECT_EQ(r.n_star, 0);
}

TEST(NewtonSchedule, StepCountAndGrowth) {
    NewtonSchedule s;
    s.q = 0.5;
    for (double delta : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
        ScheduleResult r = newton_schedule(H05, s, delta);
        int expect = std::max(0, int(std::ceil(std::log2(s.alpha0 / r.alpha_target) - 1e-9)));
        EXPECT_EQ(r.n_star, expect) << delta;
        EXPECT_NEAR(r.growth_measured, 2.0, 1e-9);
        EXPECT_TRUE(r.growth_ok);
        for (std::size_t k = 1; k < r.alphas.size(); ++k) {
            EXPECT_LT(r.alphas[k], r.alphas[k - 1]);
            EXPECT_LT(r.etas[k], r.etas[k - 1]);
        }
    }
}

TEST(NewtonSchedule, StepCap) {
    NewtonSchedule s;
    s.q = 0.99;
    s.max_steps = 5;
    EXPECT_THROW(newton_schedule(H05, s, 1e-4), Error);
}
