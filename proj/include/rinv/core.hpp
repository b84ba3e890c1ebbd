// rinv/core.hpp
//
// Shared vector types, error reporting and the linear operator interface.

#ifndef RINV_CORE_HPP
#define RINV_CORE_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace rinv {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorKind {
    domain,         // argument outside the mathematical domain
    precondition,   // contract violated by the caller
    no_bracket,     // root or extremum could not be bracketed
    config,         // invalid configuration
    admissibility,  // state left the admissible set U
    compatibility,  // Neumann data violates the compatibility condition
    floor,          // reference state too close to zero
    solver,         // linear or nonlinear solver breakdown
    io              // file format or filesystem problem
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::domain: return "domain";
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::no_bracket: return "no_bracket";
        case ErrorKind::config: return "config";
        case ErrorKind::admissibility: return "admissibility";
        case ErrorKind::compatibility: return "compatibility";
        case ErrorKind::floor: return "floor";
        case ErrorKind::solver: return "solver";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

// Bounded linear map between coordinate spaces with Euclidean inner products.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Index rows() const = 0;
    virtual Index cols() const = 0;
    virtual Vector apply(const Vector& v) const = 0;
    virtual Vector adjoint(const Vector& w) const = 0;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

class DenseOperator final : public LinearOperator {
public:
    explicit DenseOperator(Matrix m) : m_(std::move(m)) {}
    Index rows() const override { return m_.rows(); }
    Index cols() const override { return m_.cols(); }
    Vector apply(const Vector& v) const override { return m_ * v; }
    Vector adjoint(const Vector& w) const override { return m_.transpose() * w; }
    const Matrix& matrix() const { return m_; }

private:
    Matrix m_;
};

class SparseOperator final : public LinearOperator {
public:
    explicit SparseOperator(SparseMatrix m) : m_(std::move(m)) { m_.makeCompressed(); }
    Index rows() const override { return m_.rows(); }
    Index cols() const override { return m_.cols(); }
    Vector apply(const Vector& v) const override { return m_ * v; }
    Vector adjoint(const Vector& w) const override { return m_.transpose() * w; }
    const SparseMatrix& matrix() const { return m_; }

private:
    SparseMatrix m_;
};

class FunctionOperator final : public LinearOperator {
public:
    using Fn = std::function<Vector(const Vector&)>;
    FunctionOperator(Index rows, Index cols, Fn apply, Fn adjoint)
        : rows_(rows), cols_(cols), apply_(std::move(apply)), adjoint_(std::move(adjoint)) {}
    Index rows() const override { return rows_; }
    Index cols() const override { return cols_; }
    Vector apply(const Vector& v) const override { return apply_(v); }
    Vector adjoint(const Vector& w) const override { return adjoint_(w); }

private:
    Index rows_, cols_;
    Fn apply_, adjoint_;
};

inline OperatorPtr make_dense(Matrix m) { return std::make_shared<DenseOperator>(std::move(m)); }
inline OperatorPtr make_sparse(SparseMatrix m) { return std::make_shared<SparseOperator>(std::move(m)); }

inline OperatorPtr make_identity(Index n) {
    auto id = [](const Vector& v) { return v; };
    return std::make_shared<FunctionOperator>(n, n, id, id);
}

// Materialize an operator column by column.
inline Matrix to_dense(const LinearOperator& op) {
    Matrix m(op.rows(), op.cols());
    Vector e = Vector::Zero(op.cols());
    for (Index j = 0; j < op.cols(); ++j) {
        e[j] = 1.0;
        m.col(j) = op.apply(e);
        e[j] = 0.0;
    }
    return m;
}

// Largest singular value by power iteration on A^T A.
inline double operator_norm(const LinearOperator& op, int iterations = 50, unsigned seed = 7) {
    Vector v(op.cols());
    unsigned state = seed;
    for (Index i = 0; i < v.size(); ++i) {
        state = state * 1664525u + 1013904223u;
        v[i] = 0.5 + double(state >> 8) / double(1u << 24);
    }
    double nrm = v.norm();
    if (nrm == 0.0) return 0.0;
    v /= nrm;
    double sigma = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Vector w = op.adjoint(op.apply(v));
        double wn = w.norm();
        if (wn == 0.0) return 0.0;
        sigma = std::sqrt(wn);
        v = w / wn;
    }
    return sigma;
}

}  // namespace rinv

#endif
