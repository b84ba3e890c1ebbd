#include "rinv/verify.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace rinv;

namespace {

double boundary_ip(const Grid2D& G, const Vector& a, const Vector& b) {
    return (G.boundary_weights().array() * a.array() * b.array()).sum();
}

// max_i |(A u*)_i / vol_i - f*_i| for u* = cos(pi x) cos(pi y), c = 1.
double manufactured_residual(int n) {
    Grid2D G = Grid2D::square(n);
    Vector u = G.sample([](double x, double y) { return std::cos(M_PI * x) * std::cos(M_PI * y); });
    SparseMatrix A = assemble_schroedinger(G, Vector::Ones(G.num_nodes()));
    Vector f = (2.0 * M_PI * M_PI + 1.0) * u;
    Vector r = (A * u).cwiseQuotient(G.volumes()) - f;
    return r.lpNorm<Eigen::Infinity>();
}

double disk_harmonic_trace_error(int rings) {
    Grid2D G = Grid2D::disk(rings);
    Vector phi(G.num_boundary());
    for (Index b = 0; b < phi.size(); ++b) phi[b] = G.points()[G.boundary()[b]].x();
    Vector u = solve_diffusion(G, Vector::Ones(G.num_nodes()), phi);
    return (G.trace(u) - phi).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST(Grid, BoundaryQuadrature) {
    for (int n : {5, 17, 33}) {
        Grid2D G = Grid2D::square(n);
        EXPECT_NEAR(G.boundary_weights().sum(), 4.0, 1e-13);
        EXPECT_NEAR(G.volumes().sum(), 1.0, 1e-13);
        EXPECT_EQ(G.num_boundary(), 4 * (n - 1));
    }
    double prev = 0.0;
    for (int r : {8, 16, 32}) {
        Grid2D G = Grid2D::disk(r);
        double err = std::abs(G.boundary_weights().sum() - 2.0 * M_PI);
        if (prev > 0.0) {
            EXPECT_NEAR(prev / err, 4.0, 0.2);
        }
        prev = err;
    }
}

TEST(Assembly, SymmetryAndKernel) {
    Grid2D G = Grid2D::square(9);
    Vector sigma = G.sample([](double x, double y) { return 1.0 + x * y; });
    SparseMatrix S = assemble_stiffness(G, sigma);
    Matrix D(S);
    EXPECT_LE((D - D.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((S * Vector::Ones(G.num_nodes())).lpNorm<Eigen::Infinity>(), 1e-12);
    Eigen::JacobiSVD<Matrix> svd(D);
    Vector sv = svd.singularValues();
    EXPECT_LT(sv[sv.size() - 1], 1e-8 * sv[0]);
    EXPECT_GT(sv[sv.size() - 2], 1e-4 * sv[0]);
    // unit conductivity equals the Laplacian block of the Schroedinger operator
    Matrix L(assemble_stiffness(G, Vector::Ones(G.num_nodes())));
    Matrix Z(assemble_schroedinger(G, Vector::Zero(G.num_nodes())));
    EXPECT_EQ((L - Z).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Assembly, ManufacturedSolutionSecondOrder) {
    double e1 = manufactured_residual(17), e2 = manufactured_residual(33), e3 = manufactured_residual(65);
    EXPECT_GE(e1 / e2, 3.0);
    EXPECT_LE(e1 / e2, 5.0);
    EXPECT_GE(e2 / e3, 3.0);
    EXPECT_LE(e2 / e3, 5.0);
}

TEST(Assembly, MatrixFreeMatchesAssembled) {
    Grid2D G = Grid2D::disk(6);
    Vector sigma = G.sample([](double x, double y) { return 2.0 + std::sin(x + 2 * y); });
    Vector u = random_direction(G.num_nodes(), 1);
    EXPECT_LE((assemble_stiffness(G, sigma) * u - apply_stiffness(G, sigma, u)).norm(), 1e-13);
}

TEST(Assembly, GreenIdentity) {
    Grid2D G = Grid2D::square(11);
    SparseMatrix A = assemble_schroedinger(G, G.sample([](double x, double) { return 1.0 + x; }));
    Vector u = random_direction(G.num_nodes(), 2), v = random_direction(G.num_nodes(), 3);
    EXPECT_LE(std::abs(u.dot(A * v) - v.dot(A * u)), 1e-10);
}

TEST(Neumann, DiskHarmonicSolution) {
    double e8 = disk_harmonic_trace_error(8), e16 = disk_harmonic_trace_error(16), e32 = disk_harmonic_trace_error(32);
    EXPECT_LT(e16, e8);
    EXPECT_LT(e32, e16);
    EXPECT_GE(e16 / e32, 3.0);
}

TEST(Neumann, GaugeAndLinearity) {
    Grid2D G = Grid2D::square(17);
    Vector sigma = G.sample([](double x, double y) { return 1.0 + 0.5 * x * y; });
    BoundaryBasis B = trig_boundary_basis(G, 4);
    DiffusionSystem sys(G, sigma);
    Vector u1 = sys.solve_neumann(B.current(0)), u2 = sys.solve_neumann(B.current(3));
    for (const Vector& u : {u1, u2}) EXPECT_LE(std::abs(G.boundary_integral(u)), 1e-10 * u.norm());
    Vector u12 = sys.solve_neumann(B.current(0) + B.current(3));
    EXPECT_LE((u12 - u1 - u2).norm(), 1e-10 * u12.norm());
}

TEST(Neumann, Errors) {
    Grid2D G = Grid2D::square(9);
    Vector ones = Vector::Ones(G.num_boundary());
    EXPECT_THROW(solve_diffusion(G, Vector::Ones(G.num_nodes()), ones), Error);
    Vector bad = Vector::Ones(G.num_nodes());
    bad[3] = 0.0;
    EXPECT_THROW(DiffusionSystem(G, bad), Error);
}

TEST(Schroedinger, ZeroDataZeroSolution) {
    Grid2D G = Grid2D::square(9);
    Vector u = solve_schroedinger(G, Vector::Ones(G.num_nodes()), Vector::Zero(G.num_boundary()));
    EXPECT_EQ(u.norm(), 0.0);
}

TEST(Trace, ConstantsAndDisk) {
    Grid2D G = Grid2D::disk(6);
    Vector t = G.trace(Vector::Constant(G.num_nodes(), 2.5));
    EXPECT_TRUE((t.array() == 2.5).all());
    Vector rc = G.sample([](double x, double) { return x; });
    Vector tr = G.trace(rc);
    for (Index b = 0; b < tr.size(); ++b) {
        const auto& p = G.points()[G.boundary()[b]];
        EXPECT_NEAR(tr[b], std::cos(std::atan2(p.y(), p.x())), 1e-14);
    }
    Vector w = random_direction(G.num_boundary(), 4);
    Vector v = random_direction(G.num_nodes(), 5);
    EXPECT_NEAR(G.trace(v).dot(w), v.dot(G.trace_adjoint(w)), 1e-14);
}

TEST(Basis, OrthonormalZeroMean) {
    for (Grid2D G : {Grid2D::square(17), Grid2D::disk(8)}) {
        BoundaryBasis B = trig_boundary_basis(G, 8);
        Matrix gram(8, 8);
        for (int m = 0; m < 8; ++m) {
            EXPECT_LE(std::abs(boundary_ip(G, B.current(m), Vector::Ones(G.num_boundary()))), 1e-12);
            for (int n = 0; n < 8; ++n) gram(m, n) = boundary_ip(G, B.current(m), B.current(n));
        }
        EXPECT_LE((gram - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(NtD, ColumnsSymmetryScaling) {
    Grid2D G = Grid2D::square(17);
    Vector sigma = G.sample([](double x, double y) { return 1.0 + 0.3 * std::sin(M_PI * x) * std::sin(M_PI * y); });
    BoundaryBasis B = trig_boundary_basis(G, 6);
    Matrix L = ntd_matrix(G, sigma, B);
    EXPECT_LE((L - L.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    Vector t = G.trace(solve_diffusion(G, sigma, B.current(2)));
    for (int m = 0; m < 6; ++m) EXPECT_NEAR(L(m, 2), boundary_ip(G, B.current(m), t), 1e-14);
    Matrix L1 = ntd_matrix(G, Vector::Ones(G.num_nodes()), B);
    Matrix L2 = ntd_matrix(G, Vector::Constant(G.num_nodes(), 2.0), B);
    EXPECT_LE((L2 - 0.5 * L1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NtD, DiskSymbolSecondOrder) {
    std::vector<std::vector<double>> e = disk_ntd_errors({16, 32, 64}, 3);
    for (std::size_t n = 0; n < e[0].size(); ++n) {
        double r1 = e[0][n] / e[1][n], r2 = e[1][n] / e[2][n];
        EXPECT_GE(r1, 3.0) << n;
        EXPECT_LE(r1, 5.0) << n;
        EXPECT_GE(r2, 3.0) << n;
        EXPECT_LE(r2, 5.0) << n;
    }
    EXPECT_LE(e[2][0], 1e-4);
}

TEST(Liouville, Constants) {
    Grid2D G = Grid2D::square(17);
    EXPECT_LE(liouville_forward(G, Vector::Ones(G.num_nodes())).cwiseAbs().maxCoeff(), 1e-12);
    Vector s = liouville_inverse(G, Vector::Zero(G.num_nodes()), 0.35, 1.0);
    EXPECT_LE((s.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Liouville, SupportAndPositivity) {
    Grid2D G = Grid2D::square(33);
    const double R = 0.22;
    Vector bump = bump_field(G, G.center(), R, 0.3);
    Vector sigma = (1.0 + bump.array()).square();
    Vector c = liouville_forward(G, sigma);
    for (Index i = 0; i < G.num_nodes(); ++i)
        if ((G.points()[i] - G.center()).norm() > R + 1.5 * G.h()) {
            EXPECT_LE(std::abs(c[i]), 1e-12);
        }
    Vector back = liouville_inverse(G, c, 0.35, 1.0);
    EXPECT_GE(back.minCoeff(), 0.5);
}

TEST(Liouville, AnalyticPairSecondOrder) {
    LiouvilleErrors le = liouville_errors({17, 33, 65});
    for (std::size_t k = 0; k + 1 < 3; ++k) {
        EXPECT_GE(le.inverse[k] / le.inverse[k + 1], 3.0);
        EXPECT_LE(le.inverse[k] / le.inverse[k + 1], 5.0);
        EXPECT_GE(le.forward[k] / le.forward[k + 1], 3.0);
        EXPECT_LE(le.forward[k] / le.forward[k + 1], 5.0);
    }
    for (double r : le.roundtrip) EXPECT_LE(r, 1e-10);
}

TEST(Liouville, Errors) {
    Grid2D G = Grid2D::square(9);
    Vector bad = Vector::Ones(G.num_nodes());
    bad[0] = -1.0;
    EXPECT_THROW(liouville_forward(G, bad), Error);
    EXPECT_THROW(liouville_inverse(G, Vector::Zero(G.num_nodes()), 0.6, 1.0), Error);
    // a strongly negative potential makes the shifted Dirichlet problem indefinite
    EXPECT_THROW(liouville_inverse(G, Vector::Constant(G.num_nodes(), -500.0), 0.35, 1.0), Error);
    EXPECT_THROW(liouville_forward(Grid2D::disk(4), Vector::Ones(Grid2D::disk(4).num_nodes())), Error);
}

TEST(Sobolev, WeightProperties) {
    Grid2D G = Grid2D::square(9);
    auto W0 = sobolev_weight(G, 0.0);
    EXPECT_LE((*W0 - Matrix(G.volumes().asDiagonal())).cwiseAbs().maxCoeff(), 1e-12);
    auto W1 = sobolev_weight(G, 1.0);
    Matrix S(assemble_stiffness(G, Vector::Ones(G.num_nodes())));
    EXPECT_LE((*W1 - Matrix(G.volumes().asDiagonal()) - S).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(W1.get(), sobolev_weight(G, 1.0).get());
}

TEST(Concurrency, SharedFactorization) {
    Grid2D G = Grid2D::square(17);
    BoundaryBasis B = trig_boundary_basis(G, 4);
    DiffusionSystem sys(G, Vector::Ones(G.num_nodes()));
    std::vector<Vector> serial, par(4);
    for (int n = 0; n < 4; ++n) serial.push_back(sys.solve_neumann(B.current(n)));
    std::vector<std::thread> pool;
    for (int n = 0; n < 4; ++n) pool.emplace_back([&, n] { par[n] = sys.solve_neumann(B.current(n)); });
    for (auto& t : pool) t.join();
    for (int n = 0; n < 4; ++n) EXPECT_EQ((par[n] - serial[n]).norm(), 0.0);
}
