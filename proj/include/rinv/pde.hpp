// rinv/pde.hpp
//
// Grids, elliptic assembly, gauged Neumann solves, boundary current bases,
// Neumann-to-Dirichlet matrices and the Liouville transform.
//
// Both grids are described by an edge list with geometric weights g_e so that
// the stiffness matrix for a nodal coefficient s is
//     S(s) = sum_e g_e (s_i + s_j)/2 (e_i - e_j)(e_i - e_j)^T.
// On the square this is the five-point finite volume scheme (equivalently P1
// on a right-triangle mesh); on the disk it is P1 with cotangent weights.

#ifndef RINV_PDE_HPP
#define RINV_PDE_HPP

#include "rinv/core.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <array>
#include <map>
#include <mutex>
#include <vector>

namespace rinv {

struct Edge {
    int i = 0, j = 0;
    double g = 0.0;
};

class Grid2D {
public:
    enum class Shape { square, disk };

    // n x n nodes on the unit square.
    static Grid2D square(int n) {
        require(n >= 3, ErrorKind::precondition, "square grid needs at least 3 nodes per side");
        Grid2D G;
        G.shape_ = Shape::square;
        G.n_ = n;
        G.h_ = 1.0 / (n - 1);
        const double h = G.h_;
        G.pts_.resize(std::size_t(n) * n);
        G.vol_ = Vector::Zero(n * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                G.pts_[G.index(i, j)] = {i * h, j * h};
                double fx = (i == 0 || i == n - 1) ? 0.5 : 1.0;
                double fy = (j == 0 || j == n - 1) ? 0.5 : 1.0;
                G.vol_[G.index(i, j)] = fx * fy * h * h;
            }
        for (int j = 0; j < n; ++j)
            for (int i = 0; i + 1 < n; ++i) {
                double g = (j == 0 || j == n - 1) ? 0.5 : 1.0;
                G.edges_.push_back({G.index(i, j), G.index(i + 1, j), g});
                G.edges_.push_back({G.index(j, i), G.index(j, i + 1), g});
            }
        // counter-clockwise from the origin
        std::vector<int> b;
        for (int i = 0; i < n - 1; ++i) b.push_back(G.index(i, 0));
        for (int j = 0; j < n - 1; ++j) b.push_back(G.index(n - 1, j));
        for (int i = n - 1; i > 0; --i) b.push_back(G.index(i, n - 1));
        for (int j = n - 1; j > 0; --j) b.push_back(G.index(0, j));
        G.set_boundary(b);
        return G;
    }

    // Polar P1 mesh of the unit disk; ring k (radius k/rings) carries 6k nodes.
    static Grid2D disk(int rings) {
        require(rings >= 2, ErrorKind::precondition, "disk mesh needs at least 2 rings");
        Grid2D G;
        G.shape_ = Shape::disk;
        G.n_ = rings;
        G.h_ = 1.0 / rings;
        std::vector<int> start(rings + 1);
        G.pts_.push_back({0.0, 0.0});
        for (int k = 1; k <= rings; ++k) {
            start[k] = int(G.pts_.size());
            double rad = double(k) / rings;
            for (int j = 0; j < 6 * k; ++j) {
                double th = 2.0 * M_PI * j / (6.0 * k);
                G.pts_.push_back({rad * std::cos(th), rad * std::sin(th)});
            }
        }
        std::vector<std::array<int, 3>> tris;
        for (int j = 0; j < 6; ++j) tris.push_back({0, start[1] + j, start[1] + (j + 1) % 6});
        for (int k = 2; k <= rings; ++k) {
            int m = 6 * (k - 1), M = 6 * k;
            int a = 0, b = 0;
            auto in = [&](int t) { return start[k - 1] + t % m; };
            auto out = [&](int t) { return start[k] + t % M; };
            while (a < m || b < M) {
                double ta = 2.0 * M_PI * (a + 1) / m, tb = 2.0 * M_PI * (b + 1) / M;
                if (a < m && (b == M || ta < tb)) {
                    tris.push_back({in(a), out(b), in(a + 1)});
                    ++a;
                } else {
                    tris.push_back({in(a), out(b), out(b + 1)});
                    ++b;
                }
            }
        }
        G.vol_ = Vector::Zero(Index(G.pts_.size()));
        std::map<std::pair<int, int>, double> w;
        for (auto t : tris) {
            Eigen::Vector2d p[3] = {G.pts_[t[0]], G.pts_[t[1]], G.pts_[t[2]]};
            double area = 0.5 * std::abs((p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x());
            for (int v = 0; v < 3; ++v) {
                G.vol_[t[v]] += area / 3.0;
                // cotangent of the angle at vertex v weights the opposite edge
                Eigen::Vector2d e1 = p[(v + 1) % 3] - p[v], e2 = p[(v + 2) % 3] - p[v];
                double cross = std::abs(e1.x() * e2.y() - e1.y() * e2.x());
                double cot = e1.dot(e2) / cross;
                int a = t[(v + 1) % 3], b = t[(v + 2) % 3];
                w[{std::min(a, b), std::max(a, b)}] += 0.5 * cot;
            }
        }
        for (auto& [key, g] : w) G.edges_.push_back({key.first, key.second, g});
        std::vector<int> b;
        for (int j = 0; j < 6 * rings; ++j) b.push_back(start[rings] + j);
        G.set_boundary(b);
        return G;
    }

    Shape shape() const { return shape_; }
    int n() const { return n_; }
    double h() const { return h_; }
    Index num_nodes() const { return Index(pts_.size()); }
    const std::vector<Eigen::Vector2d>& points() const { return pts_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Vector& volumes() const { return vol_; }
    const std::vector<int>& boundary() const { return bnd_; }
    Index num_boundary() const { return Index(bnd_.size()); }
    const Vector& boundary_weights() const { return bw_; }
    const Vector& arc() const { return arc_; }
    double perimeter() const { return perimeter_; }
    int boundary_position(int node) const { return bpos_[node]; }
    bool is_boundary(int node) const { return bpos_[node] >= 0; }

    int index(int i, int j) const { return j * n_ + i; }
    Eigen::Vector2d center() const { return shape_ == Shape::square ? Eigen::Vector2d(0.5, 0.5) : Eigen::Vector2d(0, 0); }
    // Side length of the square or diameter of the disk.
    double side() const { return shape_ == Shape::square ? 1.0 : 2.0; }

    std::string key() const { return (shape_ == Shape::square ? "square" : "disk") + std::to_string(n_); }

    Vector trace(const Vector& u) const {
        Vector t(num_boundary());
        for (Index k = 0; k < t.size(); ++k) t[k] = u[bnd_[k]];
        return t;
    }
    // Adjoint of the trace: scatter boundary values onto boundary nodes.
    Vector trace_adjoint(const Vector& t) const {
        Vector u = Vector::Zero(num_nodes());
        for (Index k = 0; k < t.size(); ++k) u[bnd_[k]] += t[k];
        return u;
    }
    // Load vector of Neumann data phi: integral of phi against the nodal hats.
    Vector neumann_load(const Vector& phi) const {
        Vector b = Vector::Zero(num_nodes());
        for (Index k = 0; k < phi.size(); ++k) b[bnd_[k]] = bw_[k] * phi[k];
        return b;
    }
    double boundary_integral(const Vector& u) const {
        double s = 0.0;
        for (Index k = 0; k < num_boundary(); ++k) s += bw_[k] * u[bnd_[k]];
        return s;
    }
    Vector sample(const std::function<double(double, double)>& f) const {
        Vector v(num_nodes());
        for (Index i = 0; i < v.size(); ++i) v[i] = f(pts_[i].x(), pts_[i].y());
        return v;
    }

private:
    void set_boundary(std::vector<int> b) {
        bnd_ = std::move(b);
        bpos_.assign(pts_.size(), -1);
        const Index nb = Index(bnd_.size());
        bw_ = Vector::Zero(nb);
        arc_ = Vector::Zero(nb);
        double s = 0.0;
        for (Index k = 0; k < nb; ++k) {
            bpos_[bnd_[k]] = int(k);
            double len = (pts_[bnd_[(k + 1) % nb]] - pts_[bnd_[k]]).norm();
            bw_[k] += 0.5 * len;
            bw_[(k + 1) % nb] += 0.5 * len;
            arc_[k] = s;
            s += len;
        }
        perimeter_ = s;
    }

    Shape shape_ = Shape::square;
    int n_ = 0;
    double h_ = 0.0;
    std::vector<Eigen::Vector2d> pts_;
    std::vector<Edge> edges_;
    Vector vol_;
    std::vector<int> bnd_, bpos_;
    Vector bw_, arc_;
    double perimeter_ = 0.0;
};

inline SparseMatrix assemble_stiffness(const Grid2D& G, const Vector& coef) {
    require(coef.size() == G.num_nodes(), ErrorKind::precondition, "coefficient has wrong size");
    std::vector<Triplet> t;
    t.reserve(G.edges().size() * 4);
    for (const Edge& e : G.edges()) {
        double k = e.g * 0.5 * (coef[e.i] + coef[e.j]);
        t.emplace_back(e.i, e.i, k);
        t.emplace_back(e.j, e.j, k);
        t.emplace_back(e.i, e.j, -k);
        t.emplace_back(e.j, e.i, -k);
    }
    SparseMatrix S(G.num_nodes(), G.num_nodes());
    S.setFromTriplets(t.begin(), t.end());
    return S;
}

// S(coef) u without assembling.
inline Vector apply_stiffness(const Grid2D& G, const Vector& coef, const Vector& u) {
    Vector out = Vector::Zero(G.num_nodes());
    for (const Edge& e : G.edges()) {
        double f = e.g * 0.5 * (coef[e.i] + coef[e.j]) * (u[e.i] - u[e.j]);
        out[e.i] += f;
        out[e.j] -= f;
    }
    return out;
}

// Schroedinger operator S(1) + diag(vol * c).
inline SparseMatrix assemble_schroedinger(const Grid2D& G, const Vector& c) {
    SparseMatrix A = assemble_stiffness(G, Vector::Ones(G.num_nodes()));
    for (Index i = 0; i < G.num_nodes(); ++i) A.coeffRef(i, i) += G.volumes()[i] * c[i];
    return A;
}

// Boundary currents: trigonometric functions of arc length, orthonormalized
// (Gram-Schmidt) in the discrete L2 inner product of the boundary, zero mean.
struct BoundaryBasis {
    Matrix phi;  // num_boundary x N

    Index size() const { return phi.cols(); }
    Vector current(Index n) const { return phi.col(n); }
};

inline BoundaryBasis trig_boundary_basis(const Grid2D& G, int N) {
    require(N >= 1, ErrorKind::precondition, "need at least one current");
    const Index nb = G.num_boundary();
    require(N < nb, ErrorKind::precondition, "more currents than boundary nodes");
    const Vector& w = G.boundary_weights();
    auto ip = [&](const Vector& a, const Vector& b) { return (a.array() * b.array() * w.array()).sum(); };
    Vector one = Vector::Ones(nb);
    Matrix phi(nb, N);
    for (int n = 0; n < N; ++n) {
        int k = n / 2 + 1;
        Vector v(nb);
        for (Index b = 0; b < nb; ++b) {
            double th = 2.0 * M_PI * k * G.arc()[b] / G.perimeter();
            v[b] = (n % 2 == 0) ? std::cos(th) : std::sin(th);
        }
        v -= ip(v, one) / ip(one, one) * one;
        for (int m = 0; m < n; ++m) v -= ip(v, phi.col(m)) * phi.col(m);
        double nv = std::sqrt(ip(v, v));
        require(nv > 1e-12, ErrorKind::solver, "degenerate boundary basis");
        phi.col(n) = v / nv;
    }
    return {phi};
}

inline void check_compatible(const Grid2D& G, const Vector& phi) {
    double mean = (G.boundary_weights().array() * phi.array()).sum();
    double scale = std::max(1.0, (G.boundary_weights().array() * phi.array().abs()).sum());
    require(std::abs(mean) <= 1e-10 * scale, ErrorKind::compatibility, "Neumann data has nonzero mean");
}

// -div(sigma grad u) = f with sigma d_nu u = Neumann load, gauged by a
// Lagrange multiplier enforcing zero boundary mean.
class DiffusionSystem {
public:
    DiffusionSystem(const Grid2D& G, const Vector& sigma) : G_(&G) {
        require(sigma.size() == G.num_nodes(), ErrorKind::precondition, "conductivity has wrong size");
        require((sigma.array() > 0.0).all(), ErrorKind::domain, "conductivity must be positive");
        const Index nn = G.num_nodes();
        SparseMatrix S = assemble_stiffness(G, sigma);
        std::vector<Triplet> t;
        t.reserve(S.nonZeros() + 2 * G.num_boundary());
        for (Index k = 0; k < S.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(S, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
        for (Index b = 0; b < G.num_boundary(); ++b) {
            t.emplace_back(G.boundary()[b], nn, G.boundary_weights()[b]);
            t.emplace_back(nn, G.boundary()[b], G.boundary_weights()[b]);
        }
        SparseMatrix A(nn + 1, nn + 1);
        A.setFromTriplets(t.begin(), t.end());
        lu_.analyzePattern(A);
        lu_.factorize(A);
        require(lu_.info() == Eigen::Success, ErrorKind::solver, "saddle point factorization failed");
    }

    // Nodal right-hand side (already integrated); returns the gauged solution.
    Vector solve(const Vector& rhs) const {
        const Index nn = G_->num_nodes();
        Vector b = Vector::Zero(nn + 1);
        b.head(nn) = rhs;
        Vector x = lu_.solve(b);
        require(x.allFinite(), ErrorKind::solver, "saddle point solve diverged");
        return x.head(nn);
    }
    Vector solve_neumann(const Vector& phi) const {
        check_compatible(*G_, phi);
        return solve(G_->neumann_load(phi));
    }

private:
    const Grid2D* G_;
    Eigen::SparseLU<SparseMatrix> lu_;
};

// -Laplace u + c u = f with homogeneous-coefficient Neumann data; no gauge.
class SchroedingerSystem {
public:
    SchroedingerSystem(const Grid2D& G, const Vector& c) : G_(&G) {
        require(c.size() == G.num_nodes(), ErrorKind::precondition, "potential has wrong size");
        SparseMatrix A = assemble_schroedinger(G, c);
        ldlt_.compute(A);
        bool ok = ldlt_.info() == Eigen::Success && (ldlt_.vectorD().array().abs() > 1e-300).all();
        if (!ok) {
            use_lu_ = true;
            lu_.compute(A);
            require(lu_.info() == Eigen::Success, ErrorKind::solver, "Schroedinger operator is singular");
        }
    }
    Vector solve(const Vector& rhs) const {
        Vector x = use_lu_ ? Vector(lu_.solve(rhs)) : Vector(ldlt_.solve(rhs));
        require(x.allFinite(), ErrorKind::solver, "Schroedinger solve diverged");
        return x;
    }
    Vector solve_neumann(const Vector& phi) const { return solve(G_->neumann_load(phi)); }

private:
    const Grid2D* G_;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
    Eigen::SparseLU<SparseMatrix> lu_;
    bool use_lu_ = false;
};

inline Vector solve_diffusion(const Grid2D& G, const Vector& sigma, const Vector& phi) {
    return DiffusionSystem(G, sigma).solve_neumann(phi);
}

inline Vector solve_schroedinger(const Grid2D& G, const Vector& c, const Vector& phi) {
    return SchroedingerSystem(G, c).solve_neumann(phi);
}

// Lambda_mn = <phi_m, tr u_n> in the boundary L2 inner product.
inline Matrix ntd_matrix(const Grid2D& G, const Vector& sigma, const BoundaryBasis& B) {
    DiffusionSystem sys(G, sigma);
    const Index N = B.size();
    Matrix L(N, N);
    for (Index n = 0; n < N; ++n) {
        Vector t = G.trace(sys.solve_neumann(B.current(n)));
        for (Index m = 0; m < N; ++m)
            L(m, n) = (G.boundary_weights().array() * B.phi.col(m).array() * t.array()).sum();
    }
    return L;
}

// Smooth compactly supported bump amp (1 - |x - c|^2 / R^2)^5.
inline Vector bump_field(const Grid2D& G, const Eigen::Vector2d& c, double R, double amp) {
    return G.sample([&](double x, double y) {
        double t = ((Eigen::Vector2d(x, y) - c).squaredNorm()) / (R * R);
        return t < 1.0 ? amp * std::pow(1.0 - t, 5) : 0.0;
    });
}

// ------------------------------------------------------------ Liouville pair

// c = Laplace(sqrt sigma) / sqrt sigma on the square, with second-order
// one-sided differences at the boundary.
inline Vector liouville_forward(const Grid2D& G, const Vector& sigma) {
    require(G.shape() == Grid2D::Shape::square, ErrorKind::precondition, "Liouville transform needs the square grid");
    require((sigma.array() > 0.0).all(), ErrorKind::domain, "conductivity must be positive");
    const int n = G.n();
    require(n >= 4, ErrorKind::precondition, "grid too coarse for one-sided stencils");
    const double h2 = G.h() * G.h();
    Vector s = sigma.array().sqrt();
    auto d2 = [&](int i, int j, bool horiz) {
        auto at = [&](int k) { return horiz ? s[G.index(k, j)] : s[G.index(i, k)]; };
        int p = horiz ? i : j;
        if (p == 0) return (2 * at(0) - 5 * at(1) + 4 * at(2) - at(3)) / h2;
        if (p == n - 1) return (2 * at(n - 1) - 5 * at(n - 2) + 4 * at(n - 3) - at(n - 4)) / h2;
        return (at(p - 1) - 2 * at(p) + at(p + 1)) / h2;
    };
    Vector c(G.num_nodes());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) c[G.index(i, j)] = (d2(i, j, true) + d2(i, j, false)) / s[G.index(i, j)];
    return c;
}

// Solves -Laplace s + c s = 0 on the nodes inside B_rho(center) with
// s = sqrt(sigma_bg) elsewhere and returns sigma = s^2.
inline Vector liouville_inverse(const Grid2D& G, const Vector& c, double rho, double sigma_bg) {
    require(G.shape() == Grid2D::Shape::square, ErrorKind::precondition, "Liouville transform needs the square grid");
    require(sigma_bg > 0.0, ErrorKind::domain, "background conductivity must be positive");
    require(rho > 0.0 && rho < 0.5, ErrorKind::precondition, "ball must lie inside the square");
    const int n = G.n();
    const double h2 = G.h() * G.h();
    const double sbg = std::sqrt(sigma_bg);
    std::vector<int> unk(G.num_nodes(), -1);
    int nu = 0;
    for (Index i = 0; i < G.num_nodes(); ++i)
        if ((G.points()[i] - G.center()).norm() < rho) unk[i] = nu++;
    Vector s = Vector::Constant(G.num_nodes(), sbg);
    if (nu == 0) return s.array().square();
    std::vector<Triplet> t;
    Vector rhs = Vector::Zero(nu);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            int node = G.index(i, j), row = unk[node];
            if (row < 0) continue;
            require(!G.is_boundary(node), ErrorKind::precondition, "ball touches the boundary");
            t.emplace_back(row, row, 4.0 / h2 + c[node]);
            int nb[4] = {G.index(i - 1, j), G.index(i + 1, j), G.index(i, j - 1), G.index(i, j + 1)};
            for (int m : nb) {
                if (unk[m] >= 0) t.emplace_back(row, unk[m], -1.0 / h2);
                else rhs[row] += sbg / h2;
            }
        }
    SparseMatrix A(nu, nu);
    A.setFromTriplets(t.begin(), t.end());
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
    require(ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all(), ErrorKind::solver,
            "shifted Dirichlet problem is not positive definite (possible interior eigenvalue)");
    Vector su = ldlt.solve(rhs);
    for (Index i = 0; i < G.num_nodes(); ++i)
        if (unk[i] >= 0) s[i] = su[unk[i]];
    return s.array().square();
}

// ------------------------------------------------------------ Sobolev weight

// Matrix of the discrete H^s norm <(I + L)^s x, x> in the lumped L2 pairing,
// L = M^{-1/2} S M^{-1/2} the Neumann Laplacian. Cached per grid and order.
inline std::shared_ptr<const Matrix> sobolev_weight(const Grid2D& G, double order) {
    static std::mutex mtx;
    static std::map<std::pair<std::string, double>, std::shared_ptr<const Matrix>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto key = std::make_pair(G.key(), order);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    require(G.num_nodes() <= 5000, ErrorKind::precondition, "dense Sobolev weight limited to small grids");
    Matrix S = Matrix(assemble_stiffness(G, Vector::Ones(G.num_nodes())));
    Vector ms = G.volumes().array().sqrt();
    Vector mis = ms.cwiseInverse();
    Matrix L = mis.asDiagonal() * S * mis.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(L);
    require(eig.info() == Eigen::Success, ErrorKind::solver, "eigendecomposition failed");
    Vector lam = (1.0 + eig.eigenvalues().array().max(0.0)).pow(order);
    Matrix W = ms.asDiagonal() * eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose() * ms.asDiagonal();
    W = 0.5 * (W + W.transpose());
    auto ptr = std::make_shared<const Matrix>(std::move(W));
    cache[key] = ptr;
    return ptr;
}

}  // namespace rinv

#endif
