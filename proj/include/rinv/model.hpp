// rinv/model.hpp
//
// Forward maps, range-invariant models F(x) - F(x0) = K r(x), the canonical
// data-space relaxation and sampled diagnostics on models.

#ifndef RINV_MODEL_HPP
#define RINV_MODEL_HPP

#include "rinv/core.hpp"

#include <random>
#include <vector>

namespace rinv {

class ForwardMap {
public:
    virtual ~ForwardMap() = default;
    virtual Index dim_in() const = 0;
    virtual Index dim_out() const = 0;
    virtual Vector eval(const Vector& x) const = 0;
    virtual OperatorPtr jacobian(const Vector& x) const = 0;
    virtual bool admissible(const Vector&) const { return true; }

    Vector deriv_apply(const Vector& x, const Vector& h) const { return jacobian(x)->apply(h); }
    Vector deriv_adjoint_apply(const Vector& x, const Vector& g) const { return jacobian(x)->adjoint(g); }
};

using ForwardMapPtr = std::shared_ptr<const ForwardMap>;

class LinearForwardMap final : public ForwardMap {
public:
    explicit LinearForwardMap(OperatorPtr A) : A_(std::move(A)) {}
    Index dim_in() const override { return A_->cols(); }
    Index dim_out() const override { return A_->rows(); }
    Vector eval(const Vector& x) const override { return A_->apply(x); }
    OperatorPtr jacobian(const Vector&) const override { return A_; }

private:
    OperatorPtr A_;
};

// x -> (x^2, x) on the real line.
class QuadraticToyMap final : public ForwardMap {
public:
    Index dim_in() const override { return 1; }
    Index dim_out() const override { return 2; }
    Vector eval(const Vector& x) const override {
        Vector y(2);
        y << x[0] * x[0], x[0];
        return y;
    }
    OperatorPtr jacobian(const Vector& x) const override {
        Matrix J(2, 1);
        J << 2.0 * x[0], 1.0;
        return make_dense(J);
    }
};

// Squared weighted norm (q - c)^T W (q - c) of a readout q = E (I - P) x.
struct RegNorm {
    OperatorPtr readout;
    std::shared_ptr<const Matrix> weight;  // symmetric positive definite, null means W = I
    Vector center;

    Vector metric(const Vector& d) const { return weight ? Vector(*weight * d) : d; }
    double value(const Vector& q) const {
        Vector d = q - center;
        return d.dot(metric(d));
    }
};

class RangeInvariantModel {
public:
    virtual ~RangeInvariantModel() = default;

    virtual std::string name() const = 0;
    virtual Index dim_x() const = 0;
    virtual Index dim_rhat() const = 0;
    virtual Index dim_y() const = 0;

    virtual const Vector& x0() const = 0;
    virtual const Vector& Fx0() const = 0;
    virtual Vector forward(const Vector& x) const = 0;
    virtual const LinearOperator& K() const = 0;

    virtual Vector r(const Vector& x) const = 0;
    virtual OperatorPtr r_jacobian(const Vector& x) const = 0;
    virtual Vector r_inverse(const Vector& rhat) const = 0;
    virtual OperatorPtr r_inverse_jacobian(const Vector& rhat) const = 0;

    // Linear projection onto the extension component.
    virtual const LinearOperator& P() const = 0;
    virtual const RegNorm& reg() const = 0;

    virtual bool admissible(const Vector& x) const = 0;
    // Norm used for the admissible ball around x0.
    virtual double distance(const Vector& a, const Vector& b) const { return (a - b).norm(); }

    Vector apply_P(const Vector& x) const { return P().apply(x); }
    Vector apply_ImP(const Vector& x) const { return x - P().apply(x); }
    double reg_value(const Vector& x) const { return reg().value(reg().readout->apply(apply_ImP(x))); }
};

using ModelPtr = std::shared_ptr<const RangeInvariantModel>;

// x = (q, z) with F(x) = F^(q) + z and r(x) = (q - q0, z - z0 + T(q)),
// where T(q) is the part of F^(q) - F^(q0) not explained by K.
class DataSpaceRelaxation : public RangeInvariantModel {
public:
    DataSpaceRelaxation(ForwardMapPtr Fc, Vector q0, double radius = kInf)
        : Fc_(std::move(Fc)), q0_(std::move(q0)), radius_(radius) {
        require(q0_.size() == Fc_->dim_in(), ErrorKind::precondition, "reference point has wrong dimension");
        nq_ = Fc_->dim_in();
        ny_ = Fc_->dim_out();
        x0_ = Vector::Zero(nq_ + ny_);
        x0_.head(nq_) = q0_;
        Fq0_ = Fc_->eval(q0_);
        Fx0_ = Fq0_;
        J0_ = Fc_->jacobian(q0_);

        const Index nq = nq_, ny = ny_;
        auto J0 = J0_;
        K_ = std::make_shared<FunctionOperator>(
            ny, nq + ny,
            [J0, nq, ny](const Vector& v) { return Vector(J0->apply(v.head(nq)) + v.tail(ny)); },
            [J0, nq, ny](const Vector& w) {
                Vector out(nq + ny);
                out.head(nq) = J0->adjoint(w);
                out.tail(ny) = w;
                return out;
            });
        P_ = std::make_shared<FunctionOperator>(
            nq + ny, nq + ny,
            [nq](const Vector& v) { Vector o = v; o.head(nq).setZero(); return o; },
            [nq](const Vector& v) { Vector o = v; o.head(nq).setZero(); return o; });
        reg_.readout = std::make_shared<FunctionOperator>(
            nq, nq + ny,
            [nq](const Vector& v) { return Vector(v.head(nq)); },
            [nq, ny](const Vector& w) {
                Vector o = Vector::Zero(nq + ny);
                o.head(nq) = w;
                return o;
            });
        reg_.center = Vector::Zero(nq);
    }

    Index dim_x() const override { return nq_ + ny_; }
    Index dim_rhat() const override { return nq_ + ny_; }
    Index dim_y() const override { return ny_; }
    Index dim_q() const { return nq_; }
    const Vector& x0() const override { return x0_; }
    const Vector& q0() const { return q0_; }
    const Vector& Fx0() const override { return Fx0_; }
    const ForwardMap& reduced_map() const { return *Fc_; }
    const LinearOperator& K() const override { return *K_; }
    const LinearOperator& P() const override { return *P_; }
    const RegNorm& reg() const override { return reg_; }

    void set_reg_weight(std::shared_ptr<const Matrix> weight, Vector center) {
        reg_.weight = std::move(weight);
        reg_.center = std::move(center);
    }

    Vector forward(const Vector& x) const override { return Fc_->eval(x.head(nq_)) + x.tail(ny_); }

    virtual Vector remainder(const Vector& q) const = 0;
    virtual OperatorPtr remainder_jacobian(const Vector& q) const = 0;

    Vector r(const Vector& x) const override {
        Vector out(nq_ + ny_);
        out.head(nq_) = x.head(nq_) - q0_;
        out.tail(ny_) = x.tail(ny_) + remainder(x.head(nq_));
        return out;
    }

    Vector r_inverse(const Vector& rhat) const override {
        Vector x(nq_ + ny_);
        x.head(nq_) = q0_ + rhat.head(nq_);
        x.tail(ny_) = rhat.tail(ny_) - remainder(x.head(nq_));
        return x;
    }

    OperatorPtr r_jacobian(const Vector& x) const override { return block_jacobian(x.head(nq_), +1.0); }
    OperatorPtr r_inverse_jacobian(const Vector& rhat) const override {
        return block_jacobian(q0_ + rhat.head(nq_), -1.0);
    }

    bool admissible(const Vector& x) const override {
        if (x.size() != dim_x() || !x.allFinite()) return false;
        if (!Fc_->admissible(x.head(nq_))) return false;
        return radius_ == kInf || distance(x, x0_) <= radius_;
    }
    double radius() const { return radius_; }

protected:
    const Vector& Fq0() const { return Fq0_; }
    const OperatorPtr& J0() const { return J0_; }

private:
    // [I 0; sign T'(q) I]
    OperatorPtr block_jacobian(const Vector& q, double sign) const {
        OperatorPtr T = remainder_jacobian(q);
        const Index nq = nq_, ny = ny_;
        return std::make_shared<FunctionOperator>(
            nq + ny, nq + ny,
            [T, nq, ny, sign](const Vector& v) {
                Vector o(nq + ny);
                o.head(nq) = v.head(nq);
                o.tail(ny) = v.tail(ny) + sign * T->apply(v.head(nq));
                return o;
            },
            [T, nq, ny, sign](const Vector& w) {
                Vector o(nq + ny);
                o.head(nq) = w.head(nq) + sign * T->adjoint(w.tail(ny));
                o.tail(ny) = w.tail(ny);
                return o;
            });
    }

    ForwardMapPtr Fc_;
    Vector q0_, x0_, Fq0_, Fx0_;
    Index nq_ = 0, ny_ = 0;
    double radius_;
    OperatorPtr J0_;
    std::shared_ptr<FunctionOperator> K_, P_;
    RegNorm reg_;
};

// Taylor remainder T(q) = F^(q) - F^(q0) - F^'(q0)(q - q0).
class CanonicalRelaxation final : public DataSpaceRelaxation {
public:
    CanonicalRelaxation(ForwardMapPtr Fc, Vector q0, double radius = kInf)
        : DataSpaceRelaxation(Fc, std::move(q0), radius) {}

    std::string name() const override { return "canonical"; }

    Vector remainder(const Vector& q) const override {
        return reduced_map().eval(q) - Fq0() - J0()->apply(q - q0());
    }
    OperatorPtr remainder_jacobian(const Vector& q) const override {
        OperatorPtr Jq = reduced_map().jacobian(q);
        OperatorPtr J0 = this->J0();
        return std::make_shared<FunctionOperator>(
            Jq->rows(), Jq->cols(),
            [Jq, J0](const Vector& v) { return Vector(Jq->apply(v) - J0->apply(v)); },
            [Jq, J0](const Vector& w) { return Vector(Jq->adjoint(w) - J0->adjoint(w)); });
    }
};

inline std::shared_ptr<CanonicalRelaxation> canonical_relaxation(ForwardMapPtr Fc, Vector q0,
                                                                  double radius = kInf) {
    return std::make_shared<CanonicalRelaxation>(std::move(Fc), std::move(q0), radius);
}

// ---------------------------------------------------------------- diagnostics

// ||F(x) - F(x0) - K r(x)|| / (1 + ||F(x) - F(x0)||).
inline double range_invariance_residual(const RangeInvariantModel& m, const Vector& x) {
    require(m.admissible(x), ErrorKind::admissibility, "range invariance probe outside U");
    Vector dF = m.forward(x) - m.Fx0();
    Vector defect = dF - m.K().apply(m.r(x));
    return defect.norm() / (1.0 + dF.norm());
}

// ||F(x1) - F(x2) - F'(x0)(x1 - x2)|| / ||x1 - x2||, zero for coincident points.
inline double taylor_remainder_ratio(const ForwardMap& F, const Vector& x1, const Vector& x2, const Vector& x0) {
    double den = (x1 - x2).norm();
    if (den == 0.0) return 0.0;
    return (F.eval(x1) - F.eval(x2) - F.deriv_apply(x0, x1 - x2)).norm() / den;
}

inline double tangential_ratio_r(const RangeInvariantModel& m, const Vector& x1, const Vector& x2) {
    Vector d = m.r(x1) - m.r(x2);
    double den = d.norm();
    require(den > 0.0, ErrorKind::domain, "tangential ratio undefined for r(x1) = r(x2)");
    return (d - m.r_jacobian(x2)->apply(x1 - x2)).norm() / den;
}

inline double estimate_K_norm(const RangeInvariantModel& m, int iterations = 50) {
    return operator_norm(m.K(), iterations);
}

// Random admissible point at model distance at most `radius` from `center`.
template <class Rng>
Vector sample_admissible(const RangeInvariantModel& m, Rng& rng, const Vector& center, double radius) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int attempt = 0; attempt < 200; ++attempt) {
        Vector g(center.size());
        for (Index i = 0; i < g.size(); ++i) g[i] = nd(rng);
        Vector probe = center + g;
        double scale = m.distance(probe, center);
        if (scale == 0.0) continue;
        Vector x = center + (radius * ud(rng) / scale) * g;
        if (m.admissible(x)) return x;
        radius *= 0.8;
    }
    fail(ErrorKind::admissibility, "could not sample an admissible point");
}

// sup ||r(x1) - r(x2)|| / ||x1 - x2|| over sampled pairs around x0.
inline double estimate_L_r(const RangeInvariantModel& m, double radius, int samples = 100, unsigned seed = 11) {
    std::mt19937_64 rng(seed);
    double L = 0.0;
    for (int s = 0; s < samples; ++s) {
        Vector a = sample_admissible(m, rng, m.x0(), radius);
        Vector b = sample_admissible(m, rng, m.x0(), radius);
        double dx = (a - b).norm();
        if (dx > 0.0) L = std::max(L, (m.r(a) - m.r(b)).norm() / dx);
    }
    return L;
}

// sup ||P r^{-1}(a) - P r^{-1}(b)|| / ||a - b|| over sampled pairs around r(x0).
inline double estimate_C_Q(const RangeInvariantModel& m, double radius, int samples = 100, unsigned seed = 13) {
    std::mt19937_64 rng(seed);
    double C = 0.0;
    for (int s = 0; s < samples; ++s) {
        Vector a = m.r(sample_admissible(m, rng, m.x0(), radius));
        Vector b = m.r(sample_admissible(m, rng, m.x0(), radius));
        double d = (a - b).norm();
        if (d > 0.0) C = std::max(C, (m.apply_P(m.r_inverse(a)) - m.apply_P(m.r_inverse(b))).norm() / d);
    }
    return C;
}

}  // namespace rinv

#endif
