// rinv/solve.hpp
//
// Lifted Tikhonov schemes on a range-invariant model:
//   variational   min over (r^, x) of J_alpha(r^) + J_beta(r^, x)
//   split         stage 1 min J_alpha(r^) (penalized), stage 2 min J_beta(r^_sm, x)
//   newton        frozen Newton steps with a geometric alpha schedule
// with
//   J_alpha(r^)    = |K r^ + F(x0) - y|^2 + alpha R(r^)
//   J_beta(r^, x)  = beta |r(x) - r^|^2 + |P x|^2
//   R(r^)          = Rc((I-P) r^{-1}(r^)) [+ gamma psi(C_P |P r^{-1}(r^)|^2)]
// All norms are squared (p = 2).

#ifndef RINV_SOLVE_HPP
#define RINV_SOLVE_HPP

#include "rinv/model.hpp"
#include "rinv/ratefun.hpp"

#include <map>
#include <optional>

namespace rinv {

enum class Scheme { variational, split, newton };
enum class RegVariant { plain, penalized };
enum class InnerScheme { joint, alternating };
enum class AlphaRule { apriori, log_shortcut, fixed };

inline const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::variational: return "variational";
        case Scheme::split: return "split";
        case Scheme::newton: return "newton";
    }
    return "?";
}

struct RegConfig {
    IndexFunction psi = IndexFunction::hoelder(0.5);
    double p = 2.0;
    AlphaRule alpha_rule = AlphaRule::apriori;
    double alpha = 0.0;          // used by AlphaRule::fixed and for exact data
    double alpha_exponent = 2.0; // log shortcut alpha = delta^exponent
    double beta = 1.0;
    double gamma = 2.0;          // must exceed C_psi = 1
    double C_P = 0.0;            // 0: 2^{p-1} |K|^p L_r^p
    double Cbar = 0.0;           // 0: scheme dependent default
    double C_eta = 1.0;
    double tau = 1.0, tau_lo = 0.5, tau_hi = 2.0;
    double b = 0.75;
    double CQ_tilde = 1.0;
    RegVariant variant = RegVariant::plain;
    InnerScheme inner = InnerScheme::joint;
    // frozen Newton
    double alpha0 = 1.0;
    double q = 0.5;
    double c_beta_alpha = 0.0;   // 0: admissible upper bound
    double C_conj_growth = 2.0;
    // numerics
    int max_outer = 60;
    double cg_tol = 1e-10;
    int cg_max_iter = 4000;
    double rel_tol = 1e-12;
};

struct ModelConstants {
    double K_norm = 0.0;
    double L_r = 0.0;
    double C_Q = 0.0;
};

inline ModelConstants estimate_constants(const RangeInvariantModel& m, double radius, int samples = 100) {
    ModelConstants c;
    c.K_norm = estimate_K_norm(m);
    c.L_r = estimate_L_r(m, radius, samples);
    c.C_Q = estimate_C_Q(m, radius, samples);
    return c;
}

// Fills Cbar and C_P left at zero from the model constants.
inline RegConfig resolve_config(RegConfig cfg, const ModelConstants& mc, Scheme s) {
    require(cfg.p == 2.0, ErrorKind::config, "the lifted solvers support p = 2 only");
    require(cfg.gamma > 1.0, ErrorKind::config, "gamma must exceed C_psi = 1");
    require(cfg.beta > 0.0, ErrorKind::config, "beta must be positive");
    const double p = cfg.p;
    double KL = std::pow(mc.K_norm * mc.L_r, p);
    if (cfg.Cbar <= 0.0) {
        if (s == Scheme::variational)
            cfg.Cbar = std::pow(2.0, 2 * p - 2) * std::max({1.0, KL, KL * std::pow(mc.C_Q, p) / cfg.beta});
        else
            cfg.Cbar = std::pow(2.0, 2 * p - 2);
    }
    if (cfg.C_P <= 0.0) cfg.C_P = std::max(std::pow(2.0, p - 1) * KL, 1e-12);
    if (cfg.c_beta_alpha <= 0.0) cfg.c_beta_alpha = c_beta_alpha_bound(cfg.b, cfg.gamma, 1.0, cfg.CQ_tilde);
    return cfg;
}

inline double choose_alpha_apriori(const IndexFunction& f, double Cbar, double tau_lo, double tau_hi, double delta,
                                   double p) {
    require(delta > 0.0, ErrorKind::domain, "a priori choice needs delta > 0");
    require(tau_lo > 0.0 && tau_lo <= tau_hi, ErrorKind::domain, "need 0 < tau_lo <= tau_hi");
    return phi(f, Cbar, std::sqrt(tau_lo * tau_hi) * std::pow(delta, p));
}

inline double choose_alpha(const RegConfig& cfg, double delta) {
    if (cfg.alpha_rule == AlphaRule::fixed || (delta == 0.0 && cfg.alpha > 0.0)) {
        require(cfg.alpha > 0.0, ErrorKind::config, "fixed alpha must be positive");
        return cfg.alpha;
    }
    // exact data without an explicit alpha: use a tiny nominal noise level
    double d = delta > 0.0 ? delta : 1e-8;
    if (cfg.alpha_rule == AlphaRule::log_shortcut) return std::pow(d, cfg.alpha_exponent);
    return choose_alpha_apriori(cfg.psi, cfg.Cbar, cfg.tau_lo, cfg.tau_hi, d, cfg.p);
}

inline double penalty_value(const RegConfig& cfg, double sq) { return cfg.gamma * eval_psi(cfg.psi, cfg.C_P * sq); }

inline double reg_functional(const RangeInvariantModel& m, const RegConfig& cfg, RegVariant variant, const Vector& rhat) {
    Vector x = m.r_inverse(rhat);
    double v = m.reg_value(x);
    if (variant == RegVariant::penalized) v += penalty_value(cfg, m.apply_P(x).squaredNorm());
    return v;
}

struct ReconResult {
    Vector x;
    Vector r_hat;
    double alpha = 0.0;
    double beta = 0.0;
    int outer_iterations = 0;
    int n_stop = 0;
    std::string status;
    std::vector<double> objective_trace;
    std::map<std::string, double> certificates;

    bool eta_certified() const {
        auto it = certificates.find("eta_violation");
        return it == certificates.end() || it->second <= 0.0;
    }
};

// ------------------------------------------------------------ numerics core

namespace detail {

struct CgResult {
    Vector x;
    int iterations = 0;
    double rel_residual = 0.0;
};

// Conjugate gradients for H x = b with H symmetric positive semidefinite.
inline CgResult conjugate_gradient(const std::function<Vector(const Vector&)>& H, const Vector& b, double tol,
                                   int max_iter) {
    CgResult out;
    out.x = Vector::Zero(b.size());
    Vector r = b, p = b;
    double rs = r.squaredNorm();
    double bn = std::sqrt(rs);
    if (bn == 0.0) return out;
    for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
        Vector Hp = H(p);
        double pHp = p.dot(Hp);
        if (!(pHp > 0.0)) break;
        double a = rs / pHp;
        out.x += a * p;
        r -= a * Hp;
        double rs_new = r.squaredNorm();
        if (std::sqrt(rs_new) <= tol * bn) {
            rs = rs_new;
            ++out.iterations;
            break;
        }
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    out.rel_residual = std::sqrt(rs) / bn;
    return out;
}

// One summand weight * outer(res^T M res) of a composite objective.
struct Term {
    double weight = 1.0;
    std::function<Vector(const Vector&)> residual;
    std::function<OperatorPtr(const Vector&)> jacobian;
    std::function<Vector(const Vector&)> metric;         // empty: identity
    std::function<double(double)> outer, outer_deriv;    // empty: identity

    double quad(const Vector& res) const { return metric ? res.dot(metric(res)) : res.squaredNorm(); }
    double value(const Vector& res) const {
        double t = quad(res);
        return weight * (outer ? outer(t) : t);
    }
};

inline double evaluate(const std::vector<Term>& terms, const Vector& v) {
    try {
        double s = 0.0;
        for (const Term& t : terms) s += t.value(t.residual(v));
        return std::isfinite(s) ? s : kInf;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::admissibility || e.kind() == ErrorKind::domain || e.kind() == ErrorKind::solver)
            return kInf;
        throw;
    }
}

struct GnOptions {
    int max_iter = 60;
    double rel_tol = 1e-12;
    double abs_tol = 0.0;
    double cg_tol = 1e-10;
    int cg_max_iter = 4000;
    double weight_cap = 1e6;
};

struct GnResult {
    Vector v;
    double value = kInf;
    std::vector<double> trace;
    int iterations = 0;
    double grad_norm = 0.0;
    std::string status = "converged";
};

// Gauss-Newton with majorize-minimize weights for concave outer functions and
// a backtracking line search on the true objective.
inline GnResult gauss_newton_mm(const std::vector<Term>& terms, Vector v, const std::function<bool(const Vector&)>& admissible,
                                const GnOptions& opt) {
    GnResult out;
    auto value = [&](const Vector& u) { return (admissible && !admissible(u)) ? kInf : evaluate(terms, u); };
    double J = value(v);
    require(std::isfinite(J), ErrorKind::admissibility, "solver start point is not admissible");
    out.trace.push_back(J);
    for (out.iterations = 0; out.iterations < opt.max_iter;) {
        std::vector<Vector> res(terms.size());
        std::vector<OperatorPtr> jac(terms.size());
        std::vector<double> w(terms.size());
        Vector g = Vector::Zero(v.size());
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const Term& t = terms[k];
            res[k] = t.residual(v);
            jac[k] = t.jacobian(v);
            double om = t.weight;
            if (t.outer) om *= t.outer_deriv(t.quad(res[k]));
            w[k] = std::min(om, opt.weight_cap);
            Vector Mr = t.metric ? t.metric(res[k]) : res[k];
            g += w[k] * jac[k]->adjoint(Mr);
        }
        out.grad_norm = 2.0 * g.norm();
        if (out.grad_norm == 0.0) break;
        auto H = [&](const Vector& d) {
            Vector o = Vector::Zero(d.size());
            for (std::size_t k = 0; k < terms.size(); ++k) {
                if (w[k] == 0.0) continue;
                Vector Jd = jac[k]->apply(d);
                if (terms[k].metric) Jd = terms[k].metric(Jd);
                o += w[k] * jac[k]->adjoint(Jd);
            }
            return o;
        };
        CgResult cg = conjugate_gradient(H, -g, opt.cg_tol, opt.cg_max_iter);
        Vector d = cg.x;
        double slope = 2.0 * g.dot(d);
        if (!(slope < 0.0)) {
            d = -g;
            slope = -2.0 * g.squaredNorm();
        }
        double t = 1.0, Jn = kInf;
        Vector vn;
        for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
            vn = v + t * d;
            Jn = value(vn);
            if (Jn <= J + 1e-4 * t * slope) break;
        }
        ++out.iterations;
        if (!(Jn < J)) {
            // a failed search at round-off level is convergence
            if (-slope > 1e-9 * std::abs(J) + 1e-300) out.status = "stalled";
            break;
        }
        double dec = J - Jn;
        v = vn;
        J = Jn;
        out.trace.push_back(J);
        if (dec <= std::max(opt.rel_tol * std::abs(J), opt.abs_tol)) break;
        if (out.iterations == opt.max_iter) out.status = "max_iterations";
    }
    out.v = std::move(v);
    out.value = J;
    return out;
}

// v = (a, b) -> A a + B b; either block may be null.
inline OperatorPtr hcat(OperatorPtr A, Index na, OperatorPtr B, Index nb, Index rows) {
    return std::make_shared<FunctionOperator>(
        rows, na + nb,
        [A, B, na, nb, rows](const Vector& v) {
            Vector o = Vector::Zero(rows);
            if (A) o += A->apply(v.head(na));
            if (B) o += B->apply(v.tail(nb));
            return o;
        },
        [A, B, na, nb](const Vector& w) {
            Vector o = Vector::Zero(na + nb);
            if (A) o.head(na) = A->adjoint(w);
            if (B) o.tail(nb) = B->adjoint(w);
            return o;
        });
}

inline OperatorPtr compose(OperatorPtr A, OperatorPtr B) {
    return std::make_shared<FunctionOperator>(
        A->rows(), B->cols(), [A, B](const Vector& v) { return A->apply(B->apply(v)); },
        [A, B](const Vector& w) { return B->adjoint(A->adjoint(w)); });
}

inline OperatorPtr borrow(const LinearOperator& op) { return OperatorPtr(&op, [](const LinearOperator*) {}); }

// r^ either free (w = r^) or on the manifold r^ = r((I-P) w) where P r^{-1}(r^) = 0.
struct RhatParam {
    const RangeInvariantModel* m = nullptr;
    bool manifold = false;

    Index dim() const { return manifold ? m->dim_x() : m->dim_rhat(); }
    Vector rhat(const Vector& w) const { return manifold ? m->r(m->apply_ImP(w)) : w; }
    Vector xhat(const Vector& w) const { return manifold ? m->apply_ImP(w) : m->r_inverse(w); }
    OperatorPtr ImP() const {
        OperatorPtr P = borrow(m->P());
        return std::make_shared<FunctionOperator>(
            m->dim_x(), m->dim_x(), [P](const Vector& v) { return Vector(v - P->apply(v)); },
            [P](const Vector& g) { return Vector(g - P->adjoint(g)); });
    }
    OperatorPtr rhat_jac(const Vector& w) const {
        return manifold ? compose(m->r_jacobian(m->apply_ImP(w)), ImP()) : make_identity(m->dim_rhat());
    }
    OperatorPtr xhat_jac(const Vector& w) const { return manifold ? ImP() : m->r_inverse_jacobian(w); }
};

struct Functional {
    const RangeInvariantModel* m = nullptr;
    const RegConfig* cfg = nullptr;
    const Vector* y = nullptr;
    double alpha = 0.0, beta = 0.0;
    RegVariant variant = RegVariant::plain;
    // frozen coupling r(xn) + r'(xn)(x - xn) - r^ when set
    std::optional<Vector> xn;
    std::optional<Vector> rn;
    OperatorPtr Dn;

    Vector coupling(const Vector& rh, const Vector& x) const {
        if (xn) return Vector(*rn + Dn->apply(x - *xn) - rh);
        return Vector(m->r(x) - rh);
    }
    OperatorPtr coupling_jac_x(const Vector& x) const { return xn ? Dn : m->r_jacobian(x); }

    double alpha_part(const Vector& rh) const {
        Vector x = m->r_inverse(rh);
        double v = m->reg_value(x);
        if (variant == RegVariant::penalized) v += penalty_value(*cfg, m->apply_P(x).squaredNorm());
        return (m->K().apply(rh) + m->Fx0() - *y).squaredNorm() + alpha * v;
    }
    double beta_part(const Vector& rh, const Vector& x) const {
        return beta * coupling(rh, x).squaredNorm() + m->apply_P(x).squaredNorm();
    }
    double total(const Vector& rh, const Vector& x) const { return alpha_part(rh) + beta_part(rh, x); }
};

// Terms of J_alpha over the r^ parameter occupying v.head(nw) of a vector of size nv.
inline void alpha_terms(std::vector<Term>& T, const Functional& f, const RhatParam& prm, Index nv) {
    const RangeInvariantModel& m = *f.m;
    const Index nw = prm.dim();
    OperatorPtr K = borrow(m.K());
    OperatorPtr P = borrow(m.P());
    OperatorPtr E = m.reg().readout;
    const RegNorm* reg = &m.reg();
    const Index ny = m.dim_y();
    auto widen = [nw, nv](OperatorPtr A) { return nv == nw ? A : hcat(A, nw, nullptr, nv - nw, A->rows()); };

    Term fit;
    fit.residual = [&m, &f, prm, nw](const Vector& v) {
        return Vector(m.K().apply(prm.rhat(v.head(nw))) + m.Fx0() - *f.y);
    };
    fit.jacobian = [K, prm, nw, widen](const Vector& v) { return widen(compose(K, prm.rhat_jac(v.head(nw)))); };
    T.push_back(fit);

    if (f.alpha > 0.0) {
        Term rg;
        rg.weight = f.alpha;
        rg.residual = [&m, prm, nw, reg](const Vector& v) {
            return Vector(reg->readout->apply(m.apply_ImP(prm.xhat(v.head(nw)))) - reg->center);
        };
        rg.jacobian = [E, P, prm, nw, widen](const Vector& v) {
            OperatorPtr Xj = prm.xhat_jac(v.head(nw));
            auto ImPX = std::make_shared<FunctionOperator>(
                Xj->rows(), Xj->cols(), [Xj, P](const Vector& d) { Vector a = Xj->apply(d); return Vector(a - P->apply(a)); },
                [Xj, P](const Vector& g) { return Xj->adjoint(g - P->adjoint(g)); });
            return widen(compose(E, ImPX));
        };
        if (reg->weight) rg.metric = [reg](const Vector& d) { return reg->metric(d); };
        T.push_back(rg);

        if (f.variant == RegVariant::penalized && !prm.manifold) {
            const RegConfig* cfg = f.cfg;
            Term pen;
            pen.weight = f.alpha;
            pen.residual = [&m, prm, nw](const Vector& v) { return m.apply_P(prm.xhat(v.head(nw))); };
            pen.jacobian = [P, prm, nw, widen](const Vector& v) { return widen(compose(P, prm.xhat_jac(v.head(nw)))); };
            pen.outer = [cfg](double t) { return penalty_value(*cfg, t); };
            pen.outer_deriv = [cfg](double t) { return cfg->gamma * cfg->C_P * eval_psi_derivative(cfg->psi, cfg->C_P * t); };
            T.push_back(pen);
        }
    }
    (void)ny;
}

// Terms of J_beta; the r^ parameter is either part of v (offset 0, size nw) or fixed.
inline void beta_terms(std::vector<Term>& T, const Functional& f, const RhatParam* prm, const Vector* rh_fixed) {
    const RangeInvariantModel& m = *f.m;
    const Index nx = m.dim_x();
    const Index nw = prm ? prm->dim() : 0;
    OperatorPtr P = borrow(m.P());
    const Functional* fp = &f;
    std::optional<RhatParam> pp;
    if (prm) pp = *prm;

    Term cp;
    cp.weight = f.beta;
    cp.residual = [fp, pp, nw, nx, rh_fixed](const Vector& v) {
        Vector rh = pp ? pp->rhat(v.head(nw)) : *rh_fixed;
        return fp->coupling(rh, v.tail(nx));
    };
    cp.jacobian = [fp, pp, nw, nx](const Vector& v) {
        OperatorPtr Dx = fp->coupling_jac_x(v.tail(nx));
        if (!pp) return Dx;
        OperatorPtr R = pp->rhat_jac(v.head(nw));
        auto negR = std::make_shared<FunctionOperator>(
            R->rows(), R->cols(), [R](const Vector& d) { return Vector(-R->apply(d)); },
            [R](const Vector& g) { return Vector(-R->adjoint(g)); });
        return hcat(negR, nw, Dx, nx, Dx->rows());
    };
    T.push_back(cp);

    Term ext;
    ext.residual = [&m, nx](const Vector& v) { return m.apply_P(v.tail(nx)); };
    ext.jacobian = [P, nw, nx](const Vector&) { return nw ? hcat(nullptr, nw, P, nx, P->rows()) : P; };
    T.push_back(ext);
}

inline GnOptions gn_options(const RegConfig& cfg, double eta) {
    GnOptions o;
    o.max_iter = cfg.max_outer;
    o.rel_tol = cfg.rel_tol;
    o.abs_tol = 1e-3 * eta;
    o.cg_tol = cfg.cg_tol;
    o.cg_max_iter = cfg.cg_max_iter;
    return o;
}

struct JointOutcome {
    Vector rhat, x;
    GnResult gn;
};

// Joint Gauss-Newton over (w, x) with w parametrizing r^.
inline JointOutcome solve_joint(const Functional& f, const RhatParam& prm, const Vector& w0, const Vector& x0v,
                                const GnOptions& opt) {
    const RangeInvariantModel& m = *f.m;
    const Index nw = prm.dim(), nx = m.dim_x();
    std::vector<Term> T;
    alpha_terms(T, f, prm, nw + nx);
    beta_terms(T, f, &prm, nullptr);
    Vector v(nw + nx);
    v << w0, x0v;
    auto adm = [&m, nw, nx](const Vector& u) { return m.admissible(u.tail(nx)); };
    JointOutcome out;
    out.gn = gauss_newton_mm(T, v, adm, opt);
    out.rhat = prm.rhat(out.gn.v.head(nw));
    out.x = out.gn.v.tail(nx);
    return out;
}

inline JointOutcome solve_alternating(const Functional& f, const Vector& rh0, const Vector& x0v, const GnOptions& opt,
                                      double eta) {
    const RangeInvariantModel& m = *f.m;
    RhatParam prm{&m, false};
    Vector rh = rh0, x = x0v;
    JointOutcome out;
    double J = f.total(rh, x);
    out.gn.trace.push_back(J);
    for (int cycle = 0; cycle < opt.max_iter * 20; ++cycle) {
        std::vector<Term> Ta;
        alpha_terms(Ta, f, prm, m.dim_rhat());
        Term cp;
        cp.weight = f.beta;
        const Vector xf = x;
        const Functional* fp = &f;
        cp.residual = [fp, xf](const Vector& v) { return fp->coupling(v, xf); };
        cp.jacobian = [&m](const Vector&) {
            return OperatorPtr(std::make_shared<FunctionOperator>(
                m.dim_rhat(), m.dim_rhat(), [](const Vector& d) { return Vector(-d); },
                [](const Vector& g) { return Vector(-g); }));
        };
        Ta.push_back(cp);
        GnResult ga = gauss_newton_mm(Ta, rh, nullptr, opt);
        rh = ga.v;
        std::vector<Term> Tb;
        beta_terms(Tb, f, nullptr, &rh);
        GnResult gb = gauss_newton_mm(Tb, x, [&m](const Vector& u) { return m.admissible(u); }, opt);
        x = gb.v;
        double Jn = f.total(rh, x);
        out.gn.trace.push_back(Jn);
        out.gn.iterations = cycle + 1;
        double dec = J - Jn;
        J = Jn;
        if (dec < std::max(0.25 * eta, opt.rel_tol * std::abs(J))) break;
    }
    out.gn.value = J;
    out.rhat = rh;
    out.x = x;
    return out;
}

// Minimizes the (frozen or full) joint functional. The concave penalty is
// handled by comparing the manifold candidate P r^{-1}(r^) = 0 with a free
// majorize-minimize run started from the plain solution.
inline JointOutcome minimize_joint(const Functional& f, const Vector& rh0, const Vector& x0v, const GnOptions& opt,
                                   double eta) {
    const RangeInvariantModel& m = *f.m;
    RhatParam free_p{&m, false};
    if (f.cfg->inner == InnerScheme::alternating) return solve_alternating(f, rh0, x0v, opt, eta);
    if (f.variant == RegVariant::plain) return solve_joint(f, free_p, rh0, x0v, opt);

    RhatParam man{&m, true};
    JointOutcome a = solve_joint(f, man, m.r_inverse(rh0), x0v, opt);
    Functional fplain = f;
    fplain.variant = RegVariant::plain;
    JointOutcome p0 = solve_joint(fplain, free_p, rh0, x0v, opt);
    double Ja = f.total(a.rhat, a.x);
    // probe the free candidate briefly; finish it only if it is competitive
    GnOptions probe = opt;
    probe.max_iter = std::min(opt.max_iter, 8);
    JointOutcome b = solve_joint(f, free_p, p0.rhat, p0.x, probe);
    double Jb = f.total(b.rhat, b.x);
    if (Jb < Ja && b.gn.status == "max_iterations") {
        b = solve_joint(f, free_p, b.rhat, b.x, opt);
        Jb = f.total(b.rhat, b.x);
    }
    return Ja <= Jb ? a : b;
}

inline void fill_result(ReconResult& R, const JointOutcome& o) {
    R.r_hat = o.rhat;
    R.x = o.x;
    R.objective_trace.insert(R.objective_trace.end(), o.gn.trace.begin(), o.gn.trace.end());
    R.outer_iterations += o.gn.iterations;
    R.certificates["grad_norm"] = o.gn.grad_norm;
    if (R.status.empty() || R.status == "converged") R.status = o.gn.status;
}

}  // namespace detail

// ------------------------------------------------------------------ schemes

inline double eta_level(const RegConfig& cfg, double delta) { return cfg.C_eta * std::pow(delta, cfg.p); }

inline ReconResult minimize_variational(const RangeInvariantModel& m, const RegConfig& cfg, const Vector& y,
                                        double delta, const Vector* x_true = nullptr) {
    require(y.size() == m.dim_y(), ErrorKind::precondition, "data has wrong dimension");
    require(delta >= 0.0, ErrorKind::domain, "noise level must be nonnegative");
    ReconResult R;
    R.alpha = choose_alpha(cfg, delta);
    R.beta = cfg.beta;
    detail::Functional f{&m, &cfg, &y, R.alpha, R.beta, cfg.variant, {}, {}, nullptr};
    double eta = eta_level(cfg, delta);
    auto o = detail::minimize_joint(f, m.r(m.x0()), m.x0(), detail::gn_options(cfg, eta), eta);
    detail::fill_result(R, o);
    R.certificates["eta"] = eta;
    R.certificates["objective"] = f.total(R.r_hat, R.x);
    if (x_true) {
        double gap = f.total(R.r_hat, R.x) - f.total(m.r(*x_true), *x_true);
        R.certificates["eta_gap_vs_truth"] = gap;
        R.certificates["eta_violation"] = gap - eta;
    }
    return R;
}

inline ReconResult minimize_split(const RangeInvariantModel& m, const RegConfig& cfg_in, const Vector& y, double delta,
                                  const Vector* x_true = nullptr) {
    require(cfg_in.variant == RegVariant::penalized, ErrorKind::precondition,
            "the split scheme requires the penalized regularizer");
    require(y.size() == m.dim_y(), ErrorKind::precondition, "data has wrong dimension");
    RegConfig cfg = cfg_in;
    ReconResult R;
    R.alpha = choose_alpha(cfg, delta);
    R.beta = cfg.beta;
    detail::Functional f{&m, &cfg, &y, R.alpha, R.beta, RegVariant::penalized, {}, {}, nullptr};
    double eta = eta_level(cfg, delta);
    detail::GnOptions opt = detail::gn_options(cfg, eta);

    // stage 1 over r^ alone
    detail::RhatParam man{&m, true}, free_p{&m, false};
    auto stage1 = [&](const detail::RhatParam& prm, const Vector& w0, RegVariant v) {
        detail::Functional fv = f;
        fv.variant = v;
        std::vector<detail::Term> T;
        detail::alpha_terms(T, fv, prm, prm.dim());
        return std::make_pair(detail::gauss_newton_mm(T, w0, nullptr, opt), prm);
    };
    auto [ga, pa] = stage1(man, m.x0(), RegVariant::penalized);
    auto [gp, pp] = stage1(free_p, m.r(m.x0()), RegVariant::plain);
    Vector rha = pa.rhat(ga.v);
    detail::GnOptions probe = opt;
    probe.max_iter = std::min(opt.max_iter, 8);
    std::swap(opt, probe);
    auto [gb, pb] = stage1(free_p, gp.v, RegVariant::penalized);
    std::swap(opt, probe);
    if (f.alpha_part(pb.rhat(gb.v)) < f.alpha_part(rha) && gb.status == "max_iterations")
        std::tie(gb, pb) = stage1(free_p, gb.v, RegVariant::penalized);
    Vector rhb = pb.rhat(gb.v);
    bool use_a = f.alpha_part(rha) <= f.alpha_part(rhb);
    Vector rh = use_a ? rha : rhb;
    const detail::GnResult& g1 = use_a ? ga : gb;
    R.objective_trace = g1.trace;
    R.outer_iterations = g1.iterations;
    R.status = g1.status;
    R.certificates["grad_norm_stage1"] = g1.grad_norm;

    // stage 2 over x with r^ fixed, started at r^{-1}(r^)
    std::vector<detail::Term> T2;
    detail::beta_terms(T2, f, nullptr, &rh);
    Vector xs = m.r_inverse(rh);
    if (!m.admissible(xs)) xs = m.x0();
    detail::GnResult g2 = detail::gauss_newton_mm(T2, xs, [&m](const Vector& u) { return m.admissible(u); }, opt);
    R.r_hat = rh;
    R.x = g2.v;
    R.outer_iterations += g2.iterations;
    if (R.status == "converged") R.status = g2.status;
    R.objective_trace.insert(R.objective_trace.end(), g2.trace.begin(), g2.trace.end());
    R.certificates["grad_norm"] = g2.grad_norm;
    R.certificates["eta"] = eta;
    R.certificates["objective"] = f.alpha_part(rh) + f.beta_part(rh, R.x);
    if (x_true) {
        Vector rt = m.r(*x_true);
        double gap1 = f.alpha_part(rh) - f.alpha_part(rt);
        double gap2 = f.beta_part(rh, R.x) - f.beta_part(rh, *x_true);
        R.certificates["eta_gap_stage1"] = gap1;
        R.certificates["eta_gap_stage2"] = gap2;
        R.certificates["eta_gap_vs_truth"] = std::max(gap1, gap2);
        R.certificates["eta_violation"] = std::max(gap1, gap2) - eta;
    }
    return R;
}

inline ReconResult run_frozen_newton(const RangeInvariantModel& m, const RegConfig& cfg, const Vector& y, double delta,
                                     const Vector* x_true = nullptr) {
    require(y.size() == m.dim_y(), ErrorKind::precondition, "data has wrong dimension");
    require(delta > 0.0, ErrorKind::domain, "the Newton schedule needs delta > 0");
    NewtonSchedule ns;
    ns.alpha0 = cfg.alpha0;
    ns.q = cfg.q;
    ns.C_eta = cfg.C_eta;
    ns.tau = cfg.tau;
    ns.p = cfg.p;
    ns.Cbar = cfg.Cbar;
    ns.C_conj_growth = cfg.C_conj_growth;
    ScheduleResult sched = newton_schedule(cfg.psi, ns, delta);

    ReconResult R;
    R.n_stop = sched.n_star;
    R.certificates["growth_measured"] = sched.growth_measured;
    R.certificates["growth_ok"] = sched.growth_ok ? 1.0 : 0.0;
    Vector x = m.x0(), rh = m.r(m.x0());
    double worst = -kInf, worst_gap = -kInf;
    R.status = "converged";
    for (int n = 0; n < sched.n_star; ++n) {
        double an = sched.alphas[n];
        detail::Functional f{&m, &cfg, &y, an, cfg.c_beta_alpha * an, RegVariant::penalized, {}, {}, nullptr};
        f.xn = x;
        f.rn = m.r(x);
        f.Dn = m.r_jacobian(x);
        double eta = sched.etas[n];
        auto o = detail::minimize_joint(f, rh, x, detail::gn_options(cfg, eta), eta);
        if (x_true) {
            double gap = f.total(o.rhat, o.x) - f.total(m.r(*x_true), *x_true);
            worst = std::max(worst, gap - eta);
            worst_gap = std::max(worst_gap, gap);
        }
        R.objective_trace.insert(R.objective_trace.end(), o.gn.trace.begin(), o.gn.trace.end());
        R.outer_iterations += o.gn.iterations;
        R.certificates["grad_norm"] = o.gn.grad_norm;
        if (o.gn.status != "converged") R.status = o.gn.status;
        x = o.x;
        rh = o.rhat;
        R.alpha = an;
        R.beta = f.beta;
    }
    if (sched.n_star == 0) {
        R.alpha = sched.alphas[0];
        R.beta = cfg.c_beta_alpha * R.alpha;
    }
    R.x = x;
    R.r_hat = rh;
    R.certificates["eta"] = sched.etas.back();
    if (x_true && sched.n_star > 0) {
        R.certificates["eta_gap_vs_truth"] = worst_gap;
        R.certificates["eta_violation"] = worst;
    }
    return R;
}

inline ReconResult reconstruct(const RangeInvariantModel& m, const RegConfig& cfg, Scheme s, const Vector& y,
                               double delta, const Vector* x_true = nullptr) {
    switch (s) {
        case Scheme::variational: return minimize_variational(m, cfg, y, delta, x_true);
        case Scheme::split: {
            RegConfig c = cfg;
            c.variant = RegVariant::penalized;
            return minimize_split(m, c, y, delta, x_true);
        }
        case Scheme::newton: return run_frozen_newton(m, cfg, y, delta, x_true);
    }
    fail(ErrorKind::config, "unknown scheme");
}

}  // namespace rinv

#endif
