#include "lawgp/rbffd.hpp"

#include "lawgp/io.hpp"

#include <Eigen/QR>

#include <cmath>
#include <mutex>
#include <optional>

namespace lawgp {

void PhsConfig::validate() const
{
    if (exponent != 3 && exponent != 5 && exponent != 7)
        throw ValidationError("phs exponent must be 3, 5 or 7 (got " + std::to_string(exponent) + ")");
    if (degree < (exponent - 1) / 2)
        throw ValidationError("polynomial degree " + std::to_string(degree) +
                              " is below the conditional positive definiteness order of r^" +
                              std::to_string(exponent));
}

std::string op_name(DiffOp op)
{
    switch (op) {
    case DiffOp::Eval: return "eval";
    case DiffOp::Dx: return "dx";
    case DiffOp::Dy: return "dy";
    case DiffOp::Dxx: return "dxx";
    case DiffOp::Dyy: return "dyy";
    case DiffOp::Dxy: return "dxy";
    case DiffOp::Dxxx: return "dxxx";
    case DiffOp::Laplacian: return "laplacian";
    }
    return "?";
}

DiffOp parse_op(const std::string& name)
{
    for (DiffOp op : {DiffOp::Eval, DiffOp::Dx, DiffOp::Dy, DiffOp::Dxx, DiffOp::Dyy, DiffOp::Dxy, DiffOp::Dxxx,
                      DiffOp::Laplacian})
        if (op_name(op) == name)
            return op;
    throw ValidationError("unsupported operator '" + name + "'");
}

int op_order(DiffOp op)
{
    switch (op) {
    case DiffOp::Eval: return 0;
    case DiffOp::Dx:
    case DiffOp::Dy: return 1;
    case DiffOp::Dxx:
    case DiffOp::Dyy:
    case DiffOp::Dxy:
    case DiffOp::Laplacian: return 2;
    case DiffOp::Dxxx: return 3;
    }
    return 0;
}

std::vector<std::array<int, 2>> monomial_exponents(int degree, int spatial_dim)
{
    std::vector<std::array<int, 2>> out;
    for (int total = 0; total <= degree; ++total) {
        if (spatial_dim == 1) {
            out.push_back({total, 0});
            continue;
        }
        for (int b = 0; b <= total; ++b)
            out.push_back({total - b, b});
    }
    return out;
}

double phs_apply(DiffOp op, const Point& d, int k, int spatial_dim)
{
    const double r = d.norm();
    if (r == 0.0)
        return 0.0; // every operator of r^k (k >= 3) vanishes at the origin
    const double dx = d.x(), dy = d.y();
    auto pw = [r](int e) { return std::pow(r, e); };
    switch (op) {
    case DiffOp::Eval: return pw(k);
    case DiffOp::Dx: return k * pw(k - 2) * dx;
    case DiffOp::Dy: return k * pw(k - 2) * dy;
    case DiffOp::Dxx: return k * pw(k - 2) + k * (k - 2) * pw(k - 4) * dx * dx;
    case DiffOp::Dyy: return k * pw(k - 2) + k * (k - 2) * pw(k - 4) * dy * dy;
    case DiffOp::Dxy: return k * (k - 2) * pw(k - 4) * dx * dy;
    case DiffOp::Dxxx: return 3.0 * k * (k - 2) * pw(k - 4) * dx + k * (k - 2) * (k - 4) * pw(k - 6) * dx * dx * dx;
    case DiffOp::Laplacian:
        return spatial_dim == 1 ? k * (k - 1) * pw(k - 2) : static_cast<double>(k * k) * pw(k - 2);
    }
    return 0.0;
}

namespace {

// d^i/dx^i of x^a evaluated at x
double falling_power(int a, int i, double x)
{
    if (i > a)
        return 0.0;
    double c = 1.0;
    for (int t = 0; t < i; ++t)
        c *= (a - t);
    return c * std::pow(x, a - i);
}

double monomial_derivative(const std::array<int, 2>& ab, int i, int j, const Point& p)
{
    return falling_power(ab[0], i, p.x()) * falling_power(ab[1], j, p.y());
}

} // namespace

double monomial_apply(DiffOp op, const std::array<int, 2>& ab, const Point& p, int spatial_dim)
{
    switch (op) {
    case DiffOp::Eval: return monomial_derivative(ab, 0, 0, p);
    case DiffOp::Dx: return monomial_derivative(ab, 1, 0, p);
    case DiffOp::Dy: return monomial_derivative(ab, 0, 1, p);
    case DiffOp::Dxx: return monomial_derivative(ab, 2, 0, p);
    case DiffOp::Dyy: return monomial_derivative(ab, 0, 2, p);
    case DiffOp::Dxy: return monomial_derivative(ab, 1, 1, p);
    case DiffOp::Dxxx: return monomial_derivative(ab, 3, 0, p);
    case DiffOp::Laplacian:
        return spatial_dim == 1 ? monomial_derivative(ab, 2, 0, p)
                                : monomial_derivative(ab, 2, 0, p) + monomial_derivative(ab, 0, 2, p);
    }
    return 0.0;
}

// ------------------------------------------------------------ StencilSystem

StencilSystem::StencilSystem(std::vector<Point> nodes, const PhsConfig& cfg, int center_index, int spatial_dim)
    : nodes_(std::move(nodes)), cfg_(cfg), dim_(spatial_dim)
{
    const std::string where = " (stencil center " + std::to_string(center_index) + ")";
    if (nodes_.empty())
        throw ValidationError("empty stencil" + where);
    if (cfg_.degree < 0 || cfg_.exponent < 1 || cfg_.exponent % 2 == 0)
        throw ValidationError("invalid PHS configuration" + where);
    scale_ = 0.0;
    for (const auto& p : nodes_)
        scale_ = std::max(scale_, p.norm());
    if (scale_ == 0.0)
        scale_ = 1.0;
    for (auto& p : nodes_)
        p /= scale_;

    monomials_ = monomial_exponents(cfg_.degree, dim_);
    const int n = static_cast<int>(nodes_.size());
    const int m = static_cast<int>(monomials_.size());
    if (n < m)
        throw RuntimeError("singular stencil system" + where + ": " + std::to_string(n) + " nodes < " +
                           std::to_string(m) + " polynomial terms");

    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if ((nodes_[i] - nodes_[j]).norm() < 1e-12)
                throw RuntimeError("singular stencil system" + where + ": coincident nodes");

    Mat poly(n, m);
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < m; ++l)
            poly(i, l) = monomial_apply(DiffOp::Eval, monomials_[l], nodes_[i], dim_);
    Eigen::ColPivHouseholderQR<Mat> qr(poly);
    qr.setThreshold(1e-10);
    if (qr.rank() < m)
        throw RuntimeError("singular stencil system" + where + ": nodes are not unisolvent for degree " +
                           std::to_string(cfg_.degree) + " polynomials");

    saddle_ = Mat::Zero(n + m, n + m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            saddle_(i, j) = phs_apply(DiffOp::Eval, nodes_[i] - nodes_[j], cfg_.exponent, dim_);
    saddle_.topRightCorner(n, m) = poly;
    saddle_.bottomLeftCorner(m, n) = poly.transpose();
    lu_.compute(saddle_);
}

Vec StencilSystem::weights(DiffOp op, const Point& offset) const
{
    if (dim_ == 1 && (op == DiffOp::Dy || op == DiffOp::Dyy || op == DiffOp::Dxy))
        throw ValidationError("operator " + op_name(op) + " is not defined in 1D");
    const int n = static_cast<int>(nodes_.size());
    const int m = static_cast<int>(monomials_.size());
    const Point xi = offset / scale_;
    Vec rhs(n + m);
    for (int i = 0; i < n; ++i)
        rhs[i] = phs_apply(op, xi - nodes_[i], cfg_.exponent, dim_);
    for (int l = 0; l < m; ++l)
        rhs[n + l] = monomial_apply(op, monomials_[l], xi, dim_);
    // the saddle matrix is symmetric, so solving with it yields the
    // cardinal-function values L Phi_i(x)
    Vec sol = lu_.solve(rhs);
    return sol.head(n) / std::pow(scale_, op_order(op));
}

StencilSystem build_stencil_system(std::span<const Point> nodes, const PhsConfig& cfg, int center_index,
                                   int spatial_dim)
{
    return StencilSystem(std::vector<Point>(nodes.begin(), nodes.end()), cfg, center_index, spatial_dim);
}

// ---------------------------------------------------------------- assembly

Vec SparseOperator::apply(const Vec& on_y) const
{
    if (on_y.size() != matrix.cols())
        throw ValidationError("operator " + name() + ": vector length " + std::to_string(on_y.size()) +
                              " != " + std::to_string(matrix.cols()));
    return matrix * on_y;
}

namespace {

void check_ops(const NodeSet& nodes, std::span<const DiffOp> ops)
{
    for (DiffOp op : ops) {
        if (op == DiffOp::Dxxx && nodes.dimension() != 1)
            throw ValidationError("operator dxxx requires a 1D node set");
        if (nodes.dimension() == 1 && (op == DiffOp::Dy || op == DiffOp::Dyy || op == DiffOp::Dxy))
            throw ValidationError("operator " + op_name(op) + " is not defined in 1D");
    }
}

std::vector<Point> local_nodes(const NodeSet& nodes, int center)
{
    const auto& stencil = nodes.stencil(center);
    const auto& y = nodes.interp_points();
    std::vector<Point> local;
    local.reserve(stencil.size());
    for (int idx : stencil)
        local.push_back(nodes.displacement(y[idx], y[center]));
    return local;
}

SpMat to_sparse(std::size_t rows, std::size_t cols, int n, const std::vector<int>& col_idx, const std::vector<double>& val)
{
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(val.size());
    for (std::size_t j = 0; j < rows; ++j)
        for (int l = 0; l < n; ++l)
            trips.emplace_back(static_cast<int>(j), col_idx[j * n + l], val[j * n + l]);
    SpMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

} // namespace

OperatorSet assemble_operators(const NodeSet& nodes, const PhsConfig& cfg, std::span<const DiffOp> ops)
{
    check_ops(nodes, ops);
    const std::size_t rows = nodes.num_eval(), cols = nodes.num_interp();
    const int n = nodes.stencil_size();
    const auto& x = nodes.eval_points();
    const auto& y = nodes.interp_points();

    std::vector<std::vector<int>> rows_of(cols);
    for (std::size_t j = 0; j < rows; ++j)
        rows_of[nodes.assignment(j)].push_back(static_cast<int>(j));

    std::vector<int> col_idx(rows * n);
    std::vector<std::vector<double>> vals(ops.size(), std::vector<double>(rows * n));

    std::optional<std::string> failure;
    std::mutex failure_lock;

#pragma omp parallel for schedule(dynamic, 32)
    for (std::size_t i = 0; i < cols; ++i) {
        if (rows_of[i].empty())
            continue;
        try {
            StencilSystem sys(local_nodes(nodes, static_cast<int>(i)), cfg, static_cast<int>(i), nodes.dimension());
            const auto& stencil = nodes.stencil(i);
            for (int j : rows_of[i]) {
                const Point offset = nodes.displacement(x[j], y[i]);
                for (int l = 0; l < n; ++l)
                    col_idx[static_cast<std::size_t>(j) * n + l] = stencil[l];
                for (std::size_t o = 0; o < ops.size(); ++o) {
                    Vec w = sys.weights(ops[o], offset);
                    std::copy(w.data(), w.data() + n, vals[o].begin() + static_cast<std::ptrdiff_t>(j) * n);
                }
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> guard(failure_lock);
            if (!failure)
                failure = e.what();
        }
    }
    if (failure)
        throw RuntimeError(*failure);

    OperatorSet out;
    for (std::size_t o = 0; o < ops.size(); ++o) {
        SparseOperator so;
        so.op = ops[o];
        so.matrix = to_sparse(rows, cols, n, col_idx, vals[o]);
        so.row_stencil = nodes.assignments();
        out.emplace(ops[o], std::move(so));
    }
    return out;
}

SparseOperator assemble_operator(const NodeSet& nodes, const PhsConfig& cfg, DiffOp op)
{
    const DiffOp ops[] = {op};
    auto set = assemble_operators(nodes, cfg, ops);
    return std::move(set.at(op));
}

namespace serial {

SparseOperator assemble_operator(const NodeSet& nodes, const PhsConfig& cfg, DiffOp op)
{
    const DiffOp ops[] = {op};
    check_ops(nodes, ops);
    const std::size_t rows = nodes.num_eval(), cols = nodes.num_interp();
    const int n = nodes.stencil_size();
    std::vector<int> col_idx(rows * n);
    std::vector<double> val(rows * n);
    for (std::size_t j = 0; j < rows; ++j) {
        const int s = nodes.assignment(j);
        StencilSystem sys(local_nodes(nodes, s), cfg, s, nodes.dimension());
        Vec w = sys.weights(op, nodes.displacement(nodes.eval_points()[j], nodes.interp_points()[s]));
        for (int l = 0; l < n; ++l) {
            col_idx[j * n + l] = nodes.stencil(s)[l];
            val[j * n + l] = w[l];
        }
    }
    SparseOperator so;
    so.op = op;
    so.matrix = to_sparse(rows, cols, n, col_idx, val);
    so.row_stencil = nodes.assignments();
    return so;
}

} // namespace serial

// ----------------------------------------------------------- pseudoinverse

PseudoInverse::PseudoInverse(const SpMat& eval) : eval_(eval)
{
    if (eval.rows() < eval.cols())
        throw ValidationError("pseudoinverse: evaluation matrix must have at least as many rows as columns");
    if (eval.rows() == eval.cols()) {
        double dev = 0.0;
        for (Eigen::Index r = 0; r < eval.outerSize(); ++r)
            for (SpMat::InnerIterator it(eval, r); it; ++it)
                dev = std::max(dev, std::abs(it.value() - (it.col() == r ? 1.0 : 0.0)));
        // also require every diagonal entry to be stored
        Eigen::Index diag = 0;
        for (Eigen::Index r = 0; r < eval.outerSize(); ++r)
            for (SpMat::InnerIterator it(eval, r); it; ++it)
                if (it.col() == r)
                    ++diag;
        identity_ = dev < 1e-10 && diag == eval.rows();
    }
    if (identity_)
        return;
    Eigen::SparseMatrix<double> e = eval;
    eval_t_ = e.transpose();
    Eigen::SparseMatrix<double> normal = eval_t_ * e;
    Eigen::SparseMatrix<double> floor(normal.rows(), normal.cols());
    floor.setIdentity();
    normal += 1e-12 * floor;
    ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(normal);
    if (ldlt_->info() != Eigen::Success)
        throw RuntimeError("pseudoinverse: normal-equation factorization failed");
}

Vec PseudoInverse::apply(const Vec& on_x) const
{
    if (on_x.size() != eval_.rows())
        throw ValidationError("pseudoinverse: dimension mismatch (" + std::to_string(on_x.size()) + " vs " +
                              std::to_string(eval_.rows()) + ")");
    if (identity_)
        return on_x;
    return ldlt_->solve(eval_t_ * on_x);
}

Vec pseudo_inverse_apply(const SparseOperator& eval, const Vec& on_x)
{
    if (eval.op != DiffOp::Eval)
        throw ValidationError("pseudoinverse requires the eval operator, got " + eval.name());
    return PseudoInverse(eval.matrix).apply(on_x);
}

// ------------------------------------------------------------ LinearSolver

LinearSolver::LinearSolver(const SpMat& a)
{
    Eigen::SparseMatrix<double> col = a;
    square_ = a.rows() == a.cols();
    if (square_) {
        lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>>();
        col.makeCompressed();
        lu_->compute(col);
        if (lu_->info() != Eigen::Success)
            throw RuntimeError("linear solve failed: sparse LU factorization (" + lu_->lastErrorMessage() + ")");
    } else {
        if (a.rows() < a.cols())
            throw ValidationError("linear solve: underdetermined system");
        at_ = col.transpose();
        Eigen::SparseMatrix<double> normal = at_ * col;
        Eigen::SparseMatrix<double> floor(normal.rows(), normal.cols());
        floor.setIdentity();
        normal += 1e-12 * floor;
        ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(normal);
        if (ldlt_->info() != Eigen::Success)
            throw RuntimeError("linear solve failed: normal-equation factorization");
    }
}

Vec LinearSolver::solve(const Vec& b) const
{
    if (square_)
        return lu_->solve(b);
    return ldlt_->solve(at_ * b);
}

// --------------------------------------------------------------------- COO

void save_coo(const SpMat& m, const std::filesystem::path& path)
{
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(m.nonZeros()) + 1);
    rows.push_back({std::to_string(m.rows()), std::to_string(m.cols()), std::to_string(m.nonZeros())});
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SpMat::InnerIterator it(m, r); it; ++it)
            rows.push_back({std::to_string(it.row()), std::to_string(it.col()), io::format_double(it.value())});
    io::write_csv(path, {"rows", "cols", "nnz"}, rows);
}

SpMat load_coo(const std::filesystem::path& path)
{
    auto t = io::read_csv(path);
    if (t.rows.empty() || t.header.size() != 3)
        throw RuntimeError("malformed operator file " + path.string());
    const auto nr = static_cast<Eigen::Index>(t.number(0, 0));
    const auto nc = static_cast<Eigen::Index>(t.number(0, 1));
    const auto nnz = static_cast<std::size_t>(t.number(0, 2));
    if (t.rows.size() != nnz + 1)
        throw RuntimeError("operator file " + path.string() + ": expected " + std::to_string(nnz) + " triplets");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nnz);
    for (std::size_t r = 1; r <= nnz; ++r)
        trips.emplace_back(static_cast<int>(t.number(r, 0)), static_cast<int>(t.number(r, 1)), t.number(r, 2));
    SpMat m(nr, nc);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

} // namespace lawgp
