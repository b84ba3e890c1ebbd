// rinv/eit.hpp
//
// PDE-backed range-invariant models: the Schroedinger all-at-once model, the
// reduced Schroedinger model with a data-space extension, and EIT with a
// data-space extension.

#ifndef RINV_EIT_HPP
#define RINV_EIT_HPP

#include "rinv/model.hpp"
#include "rinv/pde.hpp"

#include <optional>

namespace rinv {

using GridPtr = std::shared_ptr<const Grid2D>;

// Nodes carrying unknown coefficient values; all others keep the background.
struct NodeMask {
    std::vector<int> nodes;
    std::vector<int> pos;  // node -> unknown index or -1

    static NodeMask ball(const Grid2D& G, double rho) {
        NodeMask m;
        m.pos.assign(G.num_nodes(), -1);
        for (Index i = 0; i < G.num_nodes(); ++i)
            if ((G.points()[i] - G.center()).norm() < rho) {
                m.pos[i] = int(m.nodes.size());
                m.nodes.push_back(int(i));
            }
        return m;
    }
    static NodeMask all(const Grid2D& G) { return ball(G, kInf); }

    Index size() const { return Index(nodes.size()); }
    Vector embed(const Vector& q, double background) const {
        Vector f = Vector::Constant(Index(pos.size()), background);
        for (Index k = 0; k < size(); ++k) f[nodes[k]] = q[k];
        return f;
    }
    Vector embed_zero(const Vector& q) const { return embed(q, 0.0); }
    Vector restrict(const Vector& full) const {
        Vector q(size());
        for (Index k = 0; k < size(); ++k) q[k] = full[nodes[k]];
        return q;
    }
};

enum class AuxCoefficient { reference, current, automatic };

inline const char* to_string(AuxCoefficient a) {
    switch (a) {
        case AuxCoefficient::reference: return "reference";
        case AuxCoefficient::current: return "current";
        case AuxCoefficient::automatic: return "automatic";
    }
    return "?";
}

namespace detail {

inline Matrix solve_columns(const std::function<Vector(const Vector&)>& solve, const Grid2D& G, const Matrix& rhs_phi,
                            bool neumann) {
    Matrix U(G.num_nodes(), rhs_phi.cols());
    for (Index n = 0; n < rhs_phi.cols(); ++n)
        U.col(n) = solve(neumann ? G.neumann_load(rhs_phi.col(n)) : Vector(rhs_phi.col(n)));
    return U;
}

// Boundary Green's functions: column b solves with a unit load at boundary node b.
template <class System>
Matrix boundary_greens(const System& sys, const Grid2D& G) {
    Matrix L(G.num_nodes(), G.num_boundary());
    Vector e = Vector::Zero(G.num_nodes());
    for (Index b = 0; b < G.num_boundary(); ++b) {
        e[G.boundary()[b]] = 1.0;
        L.col(b) = sys.solve(e);
        e[G.boundary()[b]] = 0.0;
    }
    return L;
}

}  // namespace detail

// ------------------------------------------------------------------- EIT

// sigma -> (tr u_1, ..., tr u_N) for -div(sigma grad u_n) = 0, sigma d_nu u_n = phi_n.
class EitForwardMap final : public ForwardMap {
public:
    EitForwardMap(GridPtr G, BoundaryBasis B, NodeMask mask, double sigma_bg, double lo, double hi)
        : G_(std::move(G)), B_(std::move(B)), mask_(std::move(mask)), bg_(sigma_bg), lo_(lo), hi_(hi) {
        for (Index n = 0; n < B_.size(); ++n) check_compatible(*G_, B_.current(n));
    }

    Index dim_in() const override { return mask_.size(); }
    Index dim_out() const override { return B_.size() * G_->num_boundary(); }
    const Grid2D& grid() const { return *G_; }
    const BoundaryBasis& basis() const { return B_; }
    const NodeMask& mask() const { return mask_; }
    double background() const { return bg_; }
    Vector sigma_full(const Vector& q) const { return mask_.embed(q, bg_); }

    bool admissible(const Vector& q) const override {
        return q.size() == dim_in() && q.allFinite() && (q.array() >= lo_).all() && (q.array() <= hi_).all();
    }

    Matrix solutions(const DiffusionSystem& sys) const {
        Matrix U(G_->num_nodes(), B_.size());
        for (Index n = 0; n < B_.size(); ++n) U.col(n) = sys.solve(G_->neumann_load(B_.current(n)));
        return U;
    }

    Vector traces(const Matrix& U) const {
        const Index nb = G_->num_boundary();
        Vector y(dim_out());
        for (Index n = 0; n < U.cols(); ++n) y.segment(n * nb, nb) = G_->trace(U.col(n));
        return y;
    }

    Vector eval(const Vector& q) const override {
        require(admissible(q), ErrorKind::admissibility, "conductivity outside admissible bounds");
        DiffusionSystem sys(*G_, sigma_full(q));
        return traces(solutions(sys));
    }

    // J[(n,b),k] = -lambda_b^T dS/dsigma_k u_n with lambda_b the boundary Green's functions.
    Matrix jacobian_matrix(const Vector& q) const {
        require(admissible(q), ErrorKind::admissibility, "conductivity outside admissible bounds");
        DiffusionSystem sys(*G_, sigma_full(q));
        Matrix U = solutions(sys);
        Matrix L = detail::boundary_greens(sys, *G_);
        const Index nb = G_->num_boundary(), N = B_.size();
        Matrix J = Matrix::Zero(dim_out(), dim_in());
        for (const Edge& e : G_->edges()) {
            int ki = mask_.pos[e.i], kj = mask_.pos[e.j];
            if (ki < 0 && kj < 0) continue;
            Vector dl = L.row(e.i) - L.row(e.j);
            for (Index n = 0; n < N; ++n) {
                double f = -0.5 * e.g * (U(e.i, n) - U(e.j, n));
                if (ki >= 0) J.col(ki).segment(n * nb, nb) += f * dl;
                if (kj >= 0) J.col(kj).segment(n * nb, nb) += f * dl;
            }
        }
        return J;
    }

    OperatorPtr jacobian(const Vector& q) const override { return make_dense(jacobian_matrix(q)); }

private:
    GridPtr G_;
    BoundaryBasis B_;
    NodeMask mask_;
    double bg_, lo_, hi_;
};

struct EitOptions {
    int n = 17;
    int currents = 8;
    double sigma_bg = 1.0;
    double rho_factor = 0.35;
    double sigma_min = 0.1;
    double sigma_max = 10.0;
    double sobolev_order = 1.0;
    AuxCoefficient aux = AuxCoefficient::automatic;
    // admissible ball radius around x0 (Euclidean); infinity disables it
    double radius = kInf;
};

struct AuxSelection {
    double residual_reference = 0.0;
    double residual_current = 0.0;
    AuxCoefficient chosen = AuxCoefficient::reference;
};

// Data-space extension whose remainder is carried by an auxiliary elliptic
// problem. Shared base of the EIT and reduced Schroedinger models.
class AuxRelaxation : public DataSpaceRelaxation {
public:
    using DataSpaceRelaxation::DataSpaceRelaxation;

    AuxCoefficient aux() const { return aux_; }
    const AuxSelection& aux_selection() const { return selection_; }

    Vector remainder(const Vector& q) const override { return remainder_variant(q, aux_); }
    virtual Vector remainder_variant(const Vector& q, AuxCoefficient v) const = 0;
    // Directional derivative of the remainder in the coefficient direction h.
    virtual Vector remainder_direction(const Vector& q, const Vector& h, AuxCoefficient v) const = 0;

    OperatorPtr remainder_jacobian(const Vector& q) const override {
        if (aux_ == AuxCoefficient::reference) {
            // the reference variant reproduces the Taylor remainder exactly
            Matrix J = to_dense(*reduced_map().jacobian(q)) - to_dense(*J0());
            return make_dense(std::move(J));
        }
        Matrix J(dim_y(), dim_q());
        Vector e = Vector::Zero(dim_q());
        for (Index k = 0; k < dim_q(); ++k) {
            e[k] = 1.0;
            J.col(k) = remainder_direction(q, e, aux_);
            e[k] = 0.0;
        }
        return make_dense(std::move(J));
    }

protected:
    // Picks the variant that closes the range invariance identity on probes.
    void select_aux(AuxCoefficient requested, const std::vector<Vector>& probes) {
        auto defect = [&](AuxCoefficient v) {
            double worst = 0.0;
            for (const Vector& q : probes) {
                Vector taylor = reduced_map().eval(q) - Fq0() - J0()->apply(q - q0());
                Vector diff = taylor - remainder_variant(q, v);
                worst = std::max(worst, diff.norm() / std::max(1.0, (reduced_map().eval(q) - Fq0()).norm()));
            }
            return worst;
        };
        selection_.residual_reference = defect(AuxCoefficient::reference);
        selection_.residual_current = defect(AuxCoefficient::current);
        bool ref_better = selection_.residual_reference <= selection_.residual_current;
        if (requested != AuxCoefficient::automatic)
            aux_ = requested;
        else
            aux_ = ref_better ? AuxCoefficient::reference : AuxCoefficient::current;
        selection_.chosen = aux_;
    }

private:
    AuxCoefficient aux_ = AuxCoefficient::reference;
    AuxSelection selection_;
};

// x = (sigma on the mask, z_1..z_N), F(x) = F^(sigma) + z, P x = z, and
// r = (sigma - sigma0, z - z0 + tr v), -div(s grad v_n) = div((sigma - sigma0) grad(u_n - u0_n))
// with principal coefficient s = sigma0 (reference) or s = sigma (current).
class EitModel final : public AuxRelaxation {
public:
    static std::shared_ptr<EitModel> create(const EitOptions& opt) {
        auto G = std::make_shared<const Grid2D>(Grid2D::square(opt.n));
        NodeMask mask = NodeMask::ball(*G, opt.rho_factor * G->side());
        require(mask.size() > 0, ErrorKind::config, "conductivity mask is empty");
        auto F = std::make_shared<EitForwardMap>(G, trig_boundary_basis(*G, opt.currents), mask, opt.sigma_bg,
                                                 opt.sigma_min, opt.sigma_max);
        return std::shared_ptr<EitModel>(new EitModel(F, opt));
    }

    std::string name() const override { return "eit"; }
    const EitForwardMap& eit_map() const { return *F_; }
    const Grid2D& grid() const { return F_->grid(); }
    const EitOptions& options() const { return opt_; }

    // Point (sigma, 0) for a full nodal conductivity equal to the background off the mask.
    Vector state_from_sigma(const Vector& sigma_full) const {
        Vector x = Vector::Zero(dim_x());
        x.head(dim_q()) = F_->mask().restrict(sigma_full);
        return x;
    }

    Vector remainder_variant(const Vector& q, AuxCoefficient v) const override {
        const Grid2D& G = grid();
        DiffusionSystem sys(G, F_->sigma_full(q));
        Matrix U = F_->solutions(sys);
        Vector ds = F_->mask().embed_zero(q - q0());
        const Index nb = G.num_boundary();
        Vector T(dim_y());
        for (Index n = 0; n < U.cols(); ++n) {
            Vector rhs = -apply_stiffness(G, ds, U.col(n) - U0_.col(n));
            Vector vn = (v == AuxCoefficient::current) ? sys.solve(rhs) : sys0_->solve(rhs);
            T.segment(n * nb, nb) = G.trace(vn);
        }
        return T;
    }

    Vector remainder_direction(const Vector& q, const Vector& hq, AuxCoefficient v) const override {
        const Grid2D& G = grid();
        DiffusionSystem sys(G, F_->sigma_full(q));
        Matrix U = F_->solutions(sys);
        Vector ds = F_->mask().embed_zero(q - q0());
        Vector h = F_->mask().embed_zero(hq);
        const Index nb = G.num_boundary();
        Vector out(dim_y());
        for (Index n = 0; n < U.cols(); ++n) {
            Vector du = U.col(n) - U0_.col(n);
            Vector up = sys.solve(-apply_stiffness(G, h, U.col(n)));
            Vector vp;
            if (v == AuxCoefficient::reference) {
                vp = sys0_->solve(-apply_stiffness(G, h, du) - apply_stiffness(G, ds, up));
            } else {
                Vector vn = sys.solve(-apply_stiffness(G, ds, du));
                vp = sys.solve(-apply_stiffness(G, h, vn) - apply_stiffness(G, h, du) - apply_stiffness(G, ds, up));
            }
            out.segment(n * nb, nb) = G.trace(vp);
        }
        return out;
    }

private:
    EitModel(std::shared_ptr<EitForwardMap> F, const EitOptions& opt)
        : AuxRelaxation(F, Vector::Constant(F->dim_in(), opt.sigma_bg), opt.radius), F_(std::move(F)), opt_(opt) {
        sys0_ = std::make_shared<DiffusionSystem>(grid(), F_->sigma_full(q0()));
        U0_ = F_->solutions(*sys0_);
        auto Wfull = sobolev_weight(grid(), opt.sobolev_order);
        const NodeMask& m = F_->mask();
        Matrix W(m.size(), m.size());
        for (Index a = 0; a < m.size(); ++a)
            for (Index b = 0; b < m.size(); ++b) W(a, b) = (*Wfull)(m.nodes[a], m.nodes[b]);
        set_reg_weight(std::make_shared<const Matrix>(std::move(W)), q0());

        std::vector<Vector> probes;
        for (int k = 0; k < 2; ++k) {
            Eigen::Vector2d c = grid().center() + Eigen::Vector2d(0.05 * (k ? 1 : -1), 0.03);
            double R = 0.3 * opt.rho_factor * grid().side() * (k ? 1.0 : 1.5);
            probes.push_back(m.restrict(bump_field(grid(), c, R, k ? 0.4 : -0.3)) + q0());
        }
        select_aux(opt.aux, probes);
    }

    std::shared_ptr<EitForwardMap> F_;
    EitOptions opt_;
    std::shared_ptr<DiffusionSystem> sys0_;
    Matrix U0_;
};

// ------------------------------------------------------ reduced Schroedinger

// c -> (tr S(c)_1, ..., tr S(c)_N) where S(c)_n solves -Laplace u + c u = 0, d_nu u = phi_n.
class SchroedingerForwardMap final : public ForwardMap {
public:
    SchroedingerForwardMap(GridPtr G, BoundaryBasis B, double lo, double hi)
        : G_(std::move(G)), B_(std::move(B)), lo_(lo), hi_(hi) {}

    Index dim_in() const override { return G_->num_nodes(); }
    Index dim_out() const override { return B_.size() * G_->num_boundary(); }
    const Grid2D& grid() const { return *G_; }
    const BoundaryBasis& basis() const { return B_; }

    bool admissible(const Vector& c) const override {
        return c.size() == dim_in() && c.allFinite() && (c.array() >= lo_).all() && (c.array() <= hi_).all();
    }

    Matrix solutions(const SchroedingerSystem& sys) const {
        Matrix U(G_->num_nodes(), B_.size());
        for (Index n = 0; n < B_.size(); ++n) U.col(n) = sys.solve_neumann(B_.current(n));
        return U;
    }
    Vector traces(const Matrix& U) const {
        const Index nb = G_->num_boundary();
        Vector y(dim_out());
        for (Index n = 0; n < U.cols(); ++n) y.segment(n * nb, nb) = G_->trace(U.col(n));
        return y;
    }
    Vector eval(const Vector& c) const override {
        require(admissible(c), ErrorKind::admissibility, "potential outside admissible bounds");
        return traces(solutions(SchroedingerSystem(*G_, c)));
    }
    Matrix jacobian_matrix(const Vector& c) const {
        require(admissible(c), ErrorKind::admissibility, "potential outside admissible bounds");
        SchroedingerSystem sys(*G_, c);
        Matrix U = solutions(sys);
        Matrix L = detail::boundary_greens(sys, *G_);
        const Index nb = G_->num_boundary();
        Matrix J(dim_out(), dim_in());
        const Vector& vol = G_->volumes();
        for (Index n = 0; n < U.cols(); ++n)
            for (Index k = 0; k < dim_in(); ++k) J.col(k).segment(n * nb, nb) = -vol[k] * U(k, n) * L.row(k).transpose();
        return J;
    }
    OperatorPtr jacobian(const Vector& c) const override { return make_dense(jacobian_matrix(c)); }

private:
    GridPtr G_;
    BoundaryBasis B_;
    double lo_, hi_;
};

struct SchroedingerOptions {
    int n = 17;
    int currents = 4;
    double c_bg = 1.0;
    double c_min = 1e-2;
    double c_max = 50.0;
    double sobolev_order = 1.0;
    double flux_offset = 1.0;      // all-at-once: constant flux added to every current
    double radius = 2.0;           // all-at-once: sup-norm ball around x0
    AuxCoefficient aux = AuxCoefficient::automatic;
};

// x = (c, z_1..z_N), r = (c - c0, z - z0 + tr v) with an auxiliary Neumann
// Schroedinger problem. The reference variant -Laplace v + c0 v = -(c - c0)(u - u0)
// reproduces the Taylor remainder; the current variant uses
// -Laplace v + c v = (c - c0)(u - u0).
class SchroedingerAltModel final : public AuxRelaxation {
public:
    static std::shared_ptr<SchroedingerAltModel> create(const SchroedingerOptions& opt) {
        auto G = std::make_shared<const Grid2D>(Grid2D::square(opt.n));
        auto F = std::make_shared<SchroedingerForwardMap>(G, trig_boundary_basis(*G, opt.currents), opt.c_min, opt.c_max);
        return std::shared_ptr<SchroedingerAltModel>(new SchroedingerAltModel(F, opt));
    }

    std::string name() const override { return "schroedinger_alt"; }
    const Grid2D& grid() const { return F_->grid(); }

    Vector remainder_variant(const Vector& c, AuxCoefficient v) const override {
        const Grid2D& G = grid();
        SchroedingerSystem sys(G, c);
        Matrix U = F_->solutions(sys);
        Vector dc = (c - q0()).cwiseProduct(G.volumes());
        const Index nb = G.num_boundary();
        Vector T(dim_y());
        for (Index n = 0; n < U.cols(); ++n) {
            Vector du = U.col(n) - U0_.col(n);
            Vector vn = (v == AuxCoefficient::current) ? sys.solve(dc.cwiseProduct(du)) : sys0_->solve(-dc.cwiseProduct(du));
            T.segment(n * nb, nb) = G.trace(vn);
        }
        return T;
    }

    Vector remainder_direction(const Vector& c, const Vector& h, AuxCoefficient v) const override {
        const Grid2D& G = grid();
        SchroedingerSystem sys(G, c);
        Matrix U = F_->solutions(sys);
        const Vector& vol = G.volumes();
        Vector dc = (c - q0()).cwiseProduct(vol), mh = h.cwiseProduct(vol);
        const Index nb = G.num_boundary();
        Vector out(dim_y());
        for (Index n = 0; n < U.cols(); ++n) {
            Vector du = U.col(n) - U0_.col(n);
            Vector up = sys.solve(-mh.cwiseProduct(U.col(n)));
            Vector vp;
            if (v == AuxCoefficient::reference) {
                vp = sys0_->solve(-mh.cwiseProduct(du) - dc.cwiseProduct(up));
            } else {
                Vector vn = sys.solve(dc.cwiseProduct(du));
                vp = sys.solve(mh.cwiseProduct(du) + dc.cwiseProduct(up) - mh.cwiseProduct(vn));
            }
            out.segment(n * nb, nb) = G.trace(vp);
        }
        return out;
    }

private:
    SchroedingerAltModel(std::shared_ptr<SchroedingerForwardMap> F, const SchroedingerOptions& opt)
        : AuxRelaxation(F, Vector::Constant(F->dim_in(), opt.c_bg)), F_(std::move(F)) {
        sys0_ = std::make_shared<SchroedingerSystem>(grid(), q0());
        U0_ = F_->solutions(*sys0_);
        set_reg_weight(sobolev_weight(grid(), opt.sobolev_order), q0());
        std::vector<Vector> probes;
        probes.push_back(q0() + bump_field(grid(), grid().center(), 0.3, 0.5));
        probes.push_back(q0() + bump_field(grid(), {0.45, 0.55}, 0.2, -0.4));
        select_aux(opt.aux, probes);
    }

    std::shared_ptr<SchroedingerForwardMap> F_;
    std::shared_ptr<SchroedingerSystem> sys0_;
    Matrix U0_;
};

// ------------------------------------------------- all-at-once Schroedinger

// Columns c_j of a potential stack minus their weighted mean.
inline Matrix weighted_mean_projection(const Matrix& stack, const Vector& w) {
    require(w.size() == stack.cols(), ErrorKind::precondition, "one weight per potential");
    require((w.array() > 0.0).all(), ErrorKind::domain, "weights must be positive");
    Vector mean = stack * w / w.sum();
    return stack.colwise() - mean;
}


// x = (c_1..c_N, u_1..u_N) nodal fields. Per current n, F stacks the weak
// residual of -Laplace u_n + c_n u_n = 0 with d_nu u_n = phi_n (interior rows
// are the PDE residual, boundary rows the flux residual), the boundary mean
// of u_n and the trace of u_n.
class SchroedingerAaoModel final : public RangeInvariantModel {
public:
    explicit SchroedingerAaoModel(const SchroedingerOptions& opt, std::optional<Vector> c0 = std::nullopt)
        : opt_(opt) {
        G_ = std::make_shared<const Grid2D>(Grid2D::square(opt.n));
        B_ = trig_boundary_basis(*G_, opt.currents);
        nn_ = G_->num_nodes();
        nb_ = G_->num_boundary();
        N_ = B_.size();
        c0_ = c0 ? *c0 : Vector::Constant(nn_, opt.c_bg);
        require(c0_.size() == nn_, ErrorKind::precondition, "reference potential has wrong size");
        SchroedingerSystem sys(*G_, c0_);
        x0_ = Vector::Zero(dim_x());
        for (Index n = 0; n < N_; ++n) {
            c_block(x0_, n) = c0_;
            u_block(x0_, n) = sys.solve_neumann(current(n));
        }
        double umax = 0.0, umin = kInf;
        for (Index n = 0; n < N_; ++n) {
            umax = std::max(umax, u_block(x0_, n).cwiseAbs().maxCoeff());
            umin = std::min(umin, u_block(x0_, n).cwiseAbs().minCoeff());
        }
        u_floor_ = 1e-3 * umax;
        require(umin >= u_floor_, ErrorKind::floor, "reference state u0 comes too close to zero");

        double ws = 0.0;
        wmean_ = Vector(N_);
        for (Index j = 0; j < N_; ++j) ws += wmean_[j] = 1.0 / double((j + 1) * (j + 1));
        wmean_ /= ws;

        Fx0_ = forward(x0_);
        build_K();
        build_P();
        reg_.weight = sobolev_weight(*G_, opt.sobolev_order);
        reg_.center = Vector::Constant(nn_, opt.c_bg);
    }

    std::string name() const override { return "schroedinger_aao"; }
    Index dim_x() const override { return 2 * N_ * nn_; }
    Index dim_rhat() const override { return dim_x(); }
    Index dim_y() const override { return N_ * (nn_ + 1 + nb_); }
    const Vector& x0() const override { return x0_; }
    const Vector& Fx0() const override { return Fx0_; }
    const LinearOperator& K() const override { return *K_; }
    const LinearOperator& P() const override { return *P_; }
    const RegNorm& reg() const override { return reg_; }
    const Grid2D& grid() const { return *G_; }
    Index currents() const { return N_; }
    // Boundary flux of experiment n; the offset keeps the states positive.
    Vector current(Index n) const { return B_.current(n).array() + opt_.flux_offset; }
    double u_floor() const { return u_floor_; }

    Eigen::VectorBlock<Vector> c_block(Vector& x, Index n) const { return x.segment(n * nn_, nn_); }
    Eigen::VectorBlock<Vector> u_block(Vector& x, Index n) const { return x.segment((N_ + n) * nn_, nn_); }
    Eigen::VectorBlock<const Vector> c_block(const Vector& x, Index n) const { return x.segment(n * nn_, nn_); }
    Eigen::VectorBlock<const Vector> u_block(const Vector& x, Index n) const { return x.segment((N_ + n) * nn_, nn_); }

    // Constant coefficient sequence c with the matching PDE solutions.
    Vector state_from_potential(const Vector& c) const {
        SchroedingerSystem sys(*G_, c);
        Vector x(dim_x());
        for (Index n = 0; n < N_; ++n) {
            c_block(x, n) = c;
            u_block(x, n) = sys.solve_neumann(current(n));
        }
        return x;
    }

    Vector forward(const Vector& x) const override {
        const Index stride = nn_ + 1 + nb_;
        Vector y(dim_y());
        const Vector ones = Vector::Ones(nn_);
        for (Index n = 0; n < N_; ++n) {
            Vector u = u_block(x, n);
            y.segment(n * stride, nn_) = apply_stiffness(*G_, ones, u) +
                                         Vector(G_->volumes().cwiseProduct(c_block(x, n)).cwiseProduct(u)) -
                                         G_->neumann_load(current(n));
            y[n * stride + nn_] = G_->boundary_integral(u);
            y.segment(n * stride + nn_ + 1, nb_) = G_->trace(u);
        }
        return y;
    }

    Vector r(const Vector& x) const override {
        Vector out(dim_x());
        for (Index n = 0; n < N_; ++n) {
            Vector ratio = u_block(x, n).cwiseQuotient(u_block(x0_, n));
            c_block(out, n) = (c_block(x, n) - c_block(x0_, n)).cwiseProduct(ratio);
            u_block(out, n) = u_block(x, n) - u_block(x0_, n);
        }
        return out;
    }

    OperatorPtr r_jacobian(const Vector& x) const override {
        // dr_c = dc (u/u0) + (c - c0) du / u0
        Vector a(N_ * nn_), b(N_ * nn_);
        for (Index n = 0; n < N_; ++n) {
            a.segment(n * nn_, nn_) = u_block(x, n).cwiseQuotient(u_block(x0_, n));
            b.segment(n * nn_, nn_) = (c_block(x, n) - c_block(x0_, n)).cwiseQuotient(u_block(x0_, n));
        }
        return pointwise_jacobian(a, b);
    }

    Vector r_inverse(const Vector& rh) const override {
        Vector x(dim_x());
        for (Index n = 0; n < N_; ++n) {
            Vector u = u_block(x0_, n) + u_block(rh, n);
            Vector ratio = u.cwiseQuotient(u_block(x0_, n));
            require((ratio.array() > 1e-3).all(), ErrorKind::admissibility, "r^{-1} undefined: u changes sign");
            c_block(x, n) = c_block(x0_, n) + c_block(rh, n).cwiseQuotient(ratio);
            u_block(x, n) = u;
        }
        return x;
    }

    OperatorPtr r_inverse_jacobian(const Vector& rh) const override {
        // dc = a u0/u - rc u0 b / u^2
        Vector a(N_ * nn_), b(N_ * nn_);
        for (Index n = 0; n < N_; ++n) {
            Vector u0 = u_block(x0_, n);
            Vector u = u0 + u_block(rh, n);
            a.segment(n * nn_, nn_) = u0.cwiseQuotient(u);
            b.segment(n * nn_, nn_) = -c_block(rh, n).cwiseProduct(u0).cwiseQuotient(u.cwiseProduct(u));
        }
        return pointwise_jacobian(a, b);
    }

    bool admissible(const Vector& x) const override {
        if (x.size() != dim_x() || !x.allFinite()) return false;
        if (distance(x, x0_) > opt_.radius) return false;
        for (Index n = 0; n < N_; ++n)
            if (!(u_block(x, n).cwiseQuotient(u_block(x0_, n)).array() > 1e-3).all()) return false;
        return true;
    }
    double distance(const Vector& a, const Vector& b) const override { return (a - b).cwiseAbs().maxCoeff(); }

private:
    // Operator (dc, du) -> (a dc + b du, du) acting per current.
    OperatorPtr pointwise_jacobian(Vector a, Vector b) const {
        const Index m = N_ * nn_;
        return std::make_shared<FunctionOperator>(
            2 * m, 2 * m,
            [a, b, m](const Vector& v) {
                Vector o(2 * m);
                o.head(m) = a.cwiseProduct(v.head(m)) + b.cwiseProduct(v.tail(m));
                o.tail(m) = v.tail(m);
                return o;
            },
            [a, b, m](const Vector& w) {
                Vector o(2 * m);
                o.head(m) = a.cwiseProduct(w.head(m));
                o.tail(m) = w.tail(m) + b.cwiseProduct(w.head(m));
                return o;
            });
    }

    void build_K() {
        const Index stride = nn_ + 1 + nb_;
        std::vector<Triplet> t;
        for (Index n = 0; n < N_; ++n) {
            const Index row = n * stride, cu = (N_ + n) * nn_, cc = n * nn_;
            SparseMatrix A = assemble_schroedinger(*G_, c_block(x0_, n));
            for (Index k = 0; k < A.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(A, k); it; ++it) t.emplace_back(row + it.row(), cu + it.col(), it.value());
            for (Index i = 0; i < nn_; ++i) t.emplace_back(row + i, cc + i, G_->volumes()[i] * u_block(x0_, n)[i]);
            for (Index b = 0; b < nb_; ++b) {
                t.emplace_back(row + nn_, cu + G_->boundary()[b], G_->boundary_weights()[b]);
                t.emplace_back(row + nn_ + 1 + b, cu + G_->boundary()[b], 1.0);
            }
        }
        SparseMatrix K(dim_y(), dim_x());
        K.setFromTriplets(t.begin(), t.end());
        K_ = make_sparse(std::move(K));
    }

    void build_P() {
        const Index nn = nn_, N = N_, dx = dim_x();
        Vector wm = wmean_;
        auto mean = [nn, N, wm](const Vector& x) {
            Vector m = Vector::Zero(nn);
            for (Index j = 0; j < N; ++j) m += wm[j] * x.segment(j * nn, nn);
            return m;
        };
        P_ = std::make_shared<FunctionOperator>(
            dx, dx,
            [nn, N, mean](const Vector& x) {
                Vector o = Vector::Zero(x.size());
                Vector m = mean(x);
                for (Index j = 0; j < N; ++j) o.segment(j * nn, nn) = x.segment(j * nn, nn) - m;
                return o;
            },
            [nn, N, wm](const Vector& g) {
                Vector o = Vector::Zero(g.size());
                Vector s = Vector::Zero(nn);
                for (Index j = 0; j < N; ++j) s += g.segment(j * nn, nn);
                for (Index j = 0; j < N; ++j) o.segment(j * nn, nn) = g.segment(j * nn, nn) - wm[j] * s;
                return o;
            });
        reg_.readout = std::make_shared<FunctionOperator>(
            nn, dx, mean, [nn, N, wm, dx](const Vector& g) {
                Vector o = Vector::Zero(dx);
                for (Index j = 0; j < N; ++j) o.segment(j * nn, nn) = wm[j] * g;
                return o;
            });
    }

    SchroedingerOptions opt_;
    GridPtr G_;
    BoundaryBasis B_;
    Index nn_ = 0, nb_ = 0, N_ = 0;
    Vector c0_, x0_, Fx0_, wmean_;
    double u_floor_ = 0.0;
    OperatorPtr K_, P_;
    RegNorm reg_;
};

}  // namespace rinv

#endif
