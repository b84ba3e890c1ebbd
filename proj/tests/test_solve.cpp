#include "rinv/bench.hpp"
#include "rinv/verify.hpp"

#include <gtest/gtest.h>

using namespace rinv;

namespace {

// x in R^n with r(x) = x, K = I, F(x0) = 0, P = 0 and the plain squared norm.
class IdentityModel final : public RangeInvariantModel {
public:
    explicit IdentityModel(Index n) : n_(n), x0_(Vector::Zero(n)) {
        I_ = make_dense(Matrix::Identity(n, n));
        Z_ = make_dense(Matrix::Zero(n, n));
        reg_.readout = I_;
        reg_.center = Vector::Zero(n);
    }
    std::string name() const override { return "identity"; }
    Index dim_x() const override { return n_; }
    Index dim_rhat() const override { return n_; }
    Index dim_y() const override { return n_; }
    const Vector& x0() const override { return x0_; }
    const Vector& Fx0() const override { return x0_; }
    Vector forward(const Vector& x) const override { return x; }
    const LinearOperator& K() const override { return *I_; }
    Vector r(const Vector& x) const override { return x; }
    OperatorPtr r_jacobian(const Vector&) const override { return I_; }
    Vector r_inverse(const Vector& rh) const override { return rh; }
    OperatorPtr r_inverse_jacobian(const Vector&) const override { return I_; }
    const LinearOperator& P() const override { return *Z_; }
    const RegNorm& reg() const override { return reg_; }
    bool admissible(const Vector&) const override { return true; }

private:
    Index n_;
    Vector x0_;
    OperatorPtr I_, Z_;
    RegNorm reg_;
};

struct LinearSetup {
    Matrix A;
    Vector q0, q_true;
    std::shared_ptr<CanonicalRelaxation> m;
    Vector x_true() const {
        Vector x = Vector::Zero(m->dim_x());
        x.head(q_true.size()) = q_true;
        return x;
    }
};

LinearSetup linear_setup() {
    LinearSetup s;
    s.A.resize(4, 3);
    s.A << 1.0, 0.5, 0.0, 0.0, 1.0, 0.2, 0.3, 0.0, 1.0, 0.1, 0.1, 0.1;
    s.q0 = Vector::Constant(3, 0.1);
    s.q_true.resize(3);
    s.q_true << 0.6, -0.4, 0.3;
    s.m = canonical_relaxation(std::make_shared<LinearForwardMap>(make_dense(s.A)), s.q0);
    return s;
}

RegConfig fixed_alpha_config(double alpha, RegVariant v = RegVariant::plain) {
    RegConfig c;
    c.alpha_rule = AlphaRule::fixed;
    c.alpha = alpha;
    c.variant = v;
    c.Cbar = 1.0;
    c.C_P = 1.0;
    return c;
}

DiagonalTestbed small_testbed() { return make_diagonal_testbed(300, 1.0, 1.0, 0.75, 200, 1); }

RegConfig testbed_config(const DiagonalTestbed& tb, Scheme s) {
    RegConfig c;
    c.psi = tb.psi;
    ModelConstants mc = estimate_constants(*tb.model, 1.0, 20);
    return resolve_config(c, mc, s);
}

double fd_term_error(const detail::Term& t, const Vector& v, const Vector& h) {
    const double e = 1e-6;
    Vector fd = (t.residual(v + e * h) - t.residual(v - e * h)) / (2 * e);
    Vector an = t.jacobian(v)->apply(h);
    return (fd - an).norm() / std::max(an.norm(), 1e-12);
}

}  // namespace

TEST(RegFunctional, PenaltyVanishesOnManifold) {
    LinearSetup s = linear_setup();
    RegConfig c = fixed_alpha_config(1e-2);
    Vector rh = s.m->r(s.x_true());
    EXPECT_EQ(reg_functional(*s.m, c, RegVariant::plain, rh), reg_functional(*s.m, c, RegVariant::penalized, rh));
}

TEST(RegFunctional, LinearCanonicalClosedForm) {
    LinearSetup s = linear_setup();
    RegConfig c = fixed_alpha_config(1e-2);
    Vector rh = random_direction(s.m->dim_rhat(), 3);
    double expect = (s.q0 + rh.head(3)).squaredNorm();
    EXPECT_NEAR(reg_functional(*s.m, c, RegVariant::plain, rh), expect, 1e-12);
}

TEST(RegFunctional, GammaScaling) {
    LinearSetup s = linear_setup();
    RegConfig c = fixed_alpha_config(1e-2);
    Vector rh = random_direction(s.m->dim_rhat(), 4);
    double plain = reg_functional(*s.m, c, RegVariant::plain, rh);
    double d1 = reg_functional(*s.m, c, RegVariant::penalized, rh) - plain;
    c.gamma *= 2.0;
    double d2 = reg_functional(*s.m, c, RegVariant::penalized, rh) - plain;
    EXPECT_GT(d1, 0.0);
    EXPECT_NEAR(d2, 2.0 * d1, 1e-14 * d2);
}

TEST(ChooseAlpha, HoelderHalfClosedForm) {
    // phi^{-1}(alpha) = alpha^2 / 4 for mu = 1/2 and Cbar = 1/2
    IndexFunction f = IndexFunction::hoelder(0.5);
    for (double d : {1e-1, 1e-2, 1e-3}) EXPECT_NEAR(choose_alpha_apriori(f, 0.5, 1.0, 1.0, d, 2.0), 2.0 * d, 1e-10 * d);
    EXPECT_THROW(choose_alpha_apriori(f, 0.5, 1.0, 1.0, 0.0, 2.0), Error);
}

TEST(ChooseAlpha, BracketProperty) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const IndexFunction& f : {IndexFunction::hoelder(0.5), IndexFunction::logarithmic(1.0)}) {
        for (int k = 0; k < 20; ++k) {
            double delta = std::pow(10.0, -1.0 - 4.0 * u(rng));
            double lo = 0.2 + 0.8 * u(rng), hi = lo * (1.0 + 4.0 * u(rng));
            double a = choose_alpha_apriori(f, 1.5, lo, hi, delta, 2.0);
            double t = phi_inverse(f, 1.5, a);
            EXPECT_GE(t, lo * delta * delta * (1 - 1e-9));
            EXPECT_LE(t, hi * delta * delta * (1 + 1e-9));
        }
    }
}

TEST(ChooseAlpha, LogShortcut) {
    RegConfig c;
    c.alpha_rule = AlphaRule::log_shortcut;
    c.alpha_exponent = 2.0;
    EXPECT_EQ(choose_alpha(c, 1e-3), std::pow(1e-3, 2.0));
    c.alpha_exponent = 1.5;
    EXPECT_EQ(choose_alpha(c, 1e-2), std::pow(1e-2, 1.5));
}

TEST(ResolveConfig, DefaultsAndErrors) {
    ModelConstants mc{2.0, 1.5, 0.5};
    RegConfig c;
    RegConfig v = resolve_config(c, mc, Scheme::variational);
    double KL = 9.0;
    EXPECT_DOUBLE_EQ(v.C_P, 2.0 * KL);
    EXPECT_DOUBLE_EQ(v.Cbar, 4.0 * std::max({1.0, KL, KL * 0.25 / c.beta}));
    EXPECT_DOUBLE_EQ(v.c_beta_alpha, std::min(1.0 - c.b, c.gamma - 1.0) / 4.0);
    EXPECT_DOUBLE_EQ(resolve_config(c, mc, Scheme::newton).Cbar, 4.0);
    RegConfig bad = c;
    bad.p = 1.5;
    EXPECT_THROW(resolve_config(bad, mc, Scheme::variational), Error);
    bad = c;
    bad.gamma = 1.0;
    EXPECT_THROW(resolve_config(bad, mc, Scheme::variational), Error);
}

TEST(ConjugateGradient, SolvesSpdSystem) {
    Matrix M(3, 3);
    M << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    Vector b(3);
    b << 1, -2, 0.5;
    auto cg = detail::conjugate_gradient([&](const Vector& v) { return Vector(M * v); }, b, 1e-14, 50);
    EXPECT_LE((M * cg.x - b).norm(), 1e-12);
    EXPECT_LE(cg.iterations, 4);
}

TEST(Variational, ScalarTikhonov) {
    IdentityModel m(5);
    Vector y = random_direction(5, 6, 2.0);
    for (double alpha : {1e-2, 0.5, 3.0}) {
        RegConfig c = fixed_alpha_config(alpha);
        ReconResult R = minimize_variational(m, c, y, 1e-3);
        EXPECT_EQ(R.status, "converged");
        EXPECT_LE((R.r_hat - y / (1.0 + alpha)).norm(), 1e-10 * y.norm()) << alpha;
        EXPECT_LE((R.x - R.r_hat).norm(), 1e-10 * y.norm());
    }
}

TEST(Variational, ExactDataLimitOnLinearMap) {
    LinearSetup s = linear_setup();
    Vector y = s.m->forward(s.x_true());
    double prev = kInf;
    for (double alpha : {1e-2, 1e-4, 1e-6}) {
        RegConfig c = fixed_alpha_config(alpha, RegVariant::penalized);
        ReconResult R = minimize_variational(*s.m, c, y, 0.0);
        // Tikhonov on the reduced problem, regularizer |q|^2
        Vector oracle = (s.A.transpose() * s.A + alpha * Matrix::Identity(3, 3))
                            .ldlt()
                            .solve(s.A.transpose() * y);
        Vector q = R.x.head(3);
        EXPECT_LE((q - oracle).norm(), 1e-7) << alpha;
        double err = (q - s.q_true).norm();
        EXPECT_LT(err, prev);
        prev = err;
    }
    EXPECT_LT(prev, 1e-5);
}

TEST(Variational, CertificateAndResidualControl) {
    DiagonalTestbed tb = small_testbed();
    RegConfig c = testbed_config(tb, Scheme::variational);
    const double delta = 1e-3;
    Vector xt = tb.x_true();
    Vector yd = add_noise(tb.y_exact(), delta, 7);
    ReconResult R = minimize_variational(*tb.model, c, yd, delta, &xt);
    EXPECT_EQ(R.status, "converged");
    EXPECT_TRUE(R.eta_certified()) << R.certificates["eta_violation"];
    EXPECT_LE(R.certificates["eta_gap_vs_truth"], R.certificates["eta"]);
    for (std::size_t k = 1; k < R.objective_trace.size(); ++k)
        EXPECT_LE(R.objective_trace[k], R.objective_trace[k - 1] * (1 + 1e-14));

    const auto& m = *tb.model;
    Vector rt = m.r(xt);
    double res = (m.K().apply(R.r_hat) + m.Fx0() - yd).norm();
    double res_t = (m.K().apply(rt) + m.Fx0() - yd).norm();
    double bound = res_t + std::sqrt(R.alpha * reg_functional(m, c, c.variant, rt) + R.certificates["eta"]);
    EXPECT_LE(res, bound);
}

TEST(Split, RequiresPenalizedRegularizer) {
    LinearSetup s = linear_setup();
    Vector y = s.m->forward(s.x_true());
    EXPECT_THROW(minimize_split(*s.m, fixed_alpha_config(1e-2), y, 1e-3), Error);
}

TEST(Split, StageTwoClosedForm) {
    LinearSetup s = linear_setup();
    const double beta = 2.5;
    RegConfig c = fixed_alpha_config(1e-2, RegVariant::penalized);
    c.beta = beta;
    Vector y = add_noise(s.m->forward(s.x_true()), 1e-2, 8);
    ReconResult R = minimize_split(*s.m, c, y, 1e-2);
    // r(x) = x - x0 here, so q = q0 + r^_q and z = beta r^_z / (1 + beta)
    Vector expect(7);
    expect.head(3) = s.q0 + R.r_hat.head(3);
    expect.tail(4) = beta / (1.0 + beta) * R.r_hat.tail(4);
    EXPECT_LE((R.x - expect).norm(), 1e-10);
}

TEST(Split, ExtensionDrivenToConsistentValue) {
    LinearSetup s = linear_setup();
    Vector y = s.m->forward(s.x_true());
    ReconResult R = minimize_split(*s.m, fixed_alpha_config(1e-4, RegVariant::penalized), y, 0.0);
    // the Taylor remainder of a linear map is zero, so r^_z should be too
    EXPECT_LE(R.r_hat.tail(4).norm(), 1e-6);
    EXPECT_LE((R.x.head(3) - s.q_true).norm(), 1e-3);

    // control: stage 1 without the penalty lets r^_z absorb the data
    RegConfig c = fixed_alpha_config(1e-4);
    detail::Functional f{s.m.get(), &c, &y, 1e-4, 1.0, RegVariant::plain, {}, {}, nullptr};
    detail::RhatParam prm{s.m.get(), false};
    std::vector<detail::Term> T;
    detail::alpha_terms(T, f, prm, prm.dim());
    detail::GnResult g = detail::gauss_newton_mm(T, s.m->r(s.m->x0()), nullptr, detail::GnOptions{});
    EXPECT_LE((s.q0 + g.v.head(3)).norm(), 1e-6);
    EXPECT_LE((g.v.tail(4) - y).norm(), 1e-6);
}

TEST(Split, RateParityWithVariational) {
    DiagonalTestbed tb = small_testbed();
    RegConfig cv = testbed_config(tb, Scheme::variational);
    RegConfig cs = testbed_config(tb, Scheme::split);
    Vector xt = tb.x_true();
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        Vector yd = add_noise(tb.y_exact(), delta, 9);
        double ev = observe(*tb.model, xt, reconstruct(*tb.model, cv, Scheme::variational, yd, delta, &xt)).err_norm;
        ReconResult Rs = reconstruct(*tb.model, cs, Scheme::split, yd, delta, &xt);
        double es = observe(*tb.model, xt, Rs).err_norm;
        EXPECT_TRUE(Rs.eta_certified()) << delta;
        EXPECT_LE(ev, 2.0 * es) << delta;
        EXPECT_LE(es, 2.0 * ev) << delta;
    }
}

TEST(Newton, ScheduleFiniteForModerateNoise) {
    DiagonalTestbed tb = small_testbed();
    RegConfig c = testbed_config(tb, Scheme::newton);
    NewtonSchedule ns;
    ns.Cbar = c.Cbar;
    ns.q = 0.5;
    ns.alpha0 = 1.0;
    for (double delta : {1e-1, 1e-3, 1e-5}) {
        ScheduleResult s = newton_schedule(c.psi, ns, delta);
        EXPECT_GE(s.n_star, 0);
        EXPECT_LE(s.n_star, 60);
    }
}

TEST(Newton, LinearMapMatchesVariational) {
    LinearSetup s = linear_setup();
    Vector xt = s.x_true();
    const double delta = 1e-3;
    Vector y = s.m->forward(xt);
    RegConfig c = fixed_alpha_config(1.0, RegVariant::penalized);
    c.alpha_rule = AlphaRule::apriori;
    c.psi = IndexFunction::hoelder(0.5);
    c.Cbar = 4.0;
    ReconResult N = run_frozen_newton(*s.m, c, y, delta, &xt);
    ASSERT_GT(N.n_stop, 0);
    EXPECT_TRUE(N.eta_certified());
    RegConfig cv = fixed_alpha_config(N.alpha, RegVariant::penalized);
    ReconResult V = minimize_variational(*s.m, cv, y, delta);
    EXPECT_LE((N.r_hat - V.r_hat).norm(), 1e-5 * V.r_hat.norm());
    EXPECT_THROW(run_frozen_newton(*s.m, c, y, 0.0), Error);
}

TEST(Gradients, TermJacobiansMatchFiniteDifferences) {
    auto m = canonical_relaxation(std::make_shared<QuadraticToyMap>(), Vector::Constant(1, 0.3));
    Vector y = m->forward(m->x0() + random_direction(m->dim_x(), 11, 0.4));
    RegConfig c = fixed_alpha_config(0.1, RegVariant::penalized);
    for (bool manifold : {false, true}) {
        detail::RhatParam prm{m.get(), manifold};
        detail::Functional f{m.get(), &c, &y, 0.1, 1.0, RegVariant::penalized, {}, {}, nullptr};
        std::vector<detail::Term> T;
        const Index nv = prm.dim() + m->dim_x();
        detail::alpha_terms(T, f, prm, nv);
        detail::beta_terms(T, f, &prm, nullptr);
        for (std::uint64_t k = 0; k < 5; ++k) {
            Vector v = random_direction(nv, 20 + k, 0.5);
            v.tail(m->dim_x()) += m->x0();
            Vector h = random_direction(nv, 40 + k);
            for (const detail::Term& t : T) EXPECT_LE(fd_term_error(t, v, h), 1e-5);
        }
    }
}

TEST(Errors, WrongDataDimension) {
    IdentityModel m(3);
    RegConfig c = fixed_alpha_config(0.1);
    EXPECT_THROW(minimize_variational(m, c, Vector::Zero(2), 0.1), Error);
    EXPECT_THROW(minimize_variational(m, c, Vector::Zero(3), -0.1), Error);
}
