#pragma once

#include "lawgp/common.hpp"
#include "lawgp/geometry.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lawgp {

/// Polyharmonic spline phi(r) = r^exponent augmented with polynomials of
/// total degree <= degree.
struct PhsConfig {
    int exponent = 3;
    int degree = 2;

    /// exponent in {3, 5, 7} and degree >= (exponent - 1) / 2.
    void validate() const;
};

enum class DiffOp { Eval, Dx, Dy, Dxx, Dyy, Dxy, Dxxx, Laplacian };

std::string op_name(DiffOp op);
DiffOp parse_op(const std::string& name);
int op_order(DiffOp op);

/// Exponents (a, b) of the monomials x^a y^b with a + b <= degree, ordered
/// by total degree. In 1D only b = 0 terms are produced.
std::vector<std::array<int, 2>> monomial_exponents(int degree, int spatial_dim = 2);

/// L applied to r^k as a function of the displacement d = x - x_i.
double phs_apply(DiffOp op, const Point& d, int exponent, int spatial_dim = 2);

/// L applied to the monomial x^a y^b at p.
double monomial_apply(DiffOp op, const std::array<int, 2>& ab, const Point& p, int spatial_dim = 2);

/// Saddle-point system [[A, P], [P^T, 0]] of one stencil, factorized by LU
/// with partial pivoting. Node coordinates are shifted to the stencil
/// center and scaled by the stencil radius.
class StencilSystem {
public:
    /// nodes: coordinates relative to the stencil center (already
    /// unwrapped for periodic sets).
    StencilSystem(std::vector<Point> nodes, const PhsConfig& cfg, int center_index = -1, int spatial_dim = 2);

    /// Weights w with (L u)(center + offset) ~= sum_i w_i u(node_i).
    Vec weights(DiffOp op, const Point& offset) const;

    const Mat& matrix() const { return saddle_; }
    double scale() const { return scale_; }
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    std::vector<Point> nodes_; // scaled
    PhsConfig cfg_;
    int dim_;
    double scale_ = 1.0;
    std::vector<std::array<int, 2>> monomials_;
    Mat saddle_;
    Eigen::PartialPivLU<Mat> lu_;
};

StencilSystem build_stencil_system(std::span<const Point> nodes, const PhsConfig& cfg, int center_index = -1,
                                   int spatial_dim = 2);

/// M x N sparse matrix mapping values on Y to L u on X. Row j holds the
/// weights of stencil row_stencil[j].
struct SparseOperator {
    DiffOp op = DiffOp::Eval;
    SpMat matrix;
    std::vector<int> row_stencil;

    std::string name() const { return op_name(op); }
    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
    Vec apply(const Vec& on_y) const;
};

using OperatorSet = std::map<DiffOp, SparseOperator>;

/// OpenMP-parallel assembly; one factorization per stencil is shared by all
/// rows assigned to it and by every requested operator.
OperatorSet assemble_operators(const NodeSet& nodes, const PhsConfig& cfg, std::span<const DiffOp> ops);
SparseOperator assemble_operator(const NodeSet& nodes, const PhsConfig& cfg, DiffOp op);

namespace serial {
/// Reference assembly: builds and factorizes a fresh stencil system for
/// every row. Kept for testing the parallel kernel.
SparseOperator assemble_operator(const NodeSet& nodes, const PhsConfig& cfg, DiffOp op);
} // namespace serial

/// Moore-Penrose pseudoinverse of an evaluation matrix, applied through the
/// normal equations (E^T E + 1e-12 I) u = E^T v. When E is the identity
/// (X = Y) the input is returned unchanged.
class PseudoInverse {
public:
    explicit PseudoInverse(const SpMat& eval);
    Vec apply(const Vec& on_x) const;
    bool is_identity() const { return identity_; }

private:
    bool identity_ = false;
    SpMat eval_;
    Eigen::SparseMatrix<double> eval_t_;
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

Vec pseudo_inverse_apply(const SparseOperator& eval, const Vec& on_x);

/// Solves A u = b exactly (sparse LU) when A is square, otherwise in the
/// least-squares sense via normal equations with a 1e-12 diagonal floor.
class LinearSolver {
public:
    explicit LinearSolver(const SpMat& a);
    Vec solve(const Vec& b) const;

private:
    bool square_ = true;
    Eigen::SparseMatrix<double> at_;
    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>> lu_;
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
};

/// Coordinate-format persistence: "rows,cols,nnz" header, one size row,
/// then (row, col, value) triplets.
void save_coo(const SpMat& m, const std::filesystem::path& path);
SpMat load_coo(const std::filesystem::path& path);

} // namespace lawgp
