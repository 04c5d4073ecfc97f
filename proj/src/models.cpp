#include "lawgp/models.hpp"

#include "lawgp/io.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>

namespace lawgp {

// ------------------------------------------------------------- shared bits

TimeGrid TimeGrid::make(double final_time, double tau, int saves)
{
    if (!(tau > 0.0) || !(final_time > 0.0))
        throw ValidationError("time grid: final time and step must be positive");
    if (saves < 1)
        throw ValidationError("time grid: need at least one save time");
    const double ratio = final_time / tau;
    const long steps = std::lround(ratio);
    if (std::abs(ratio - static_cast<double>(steps)) > 1e-6 * ratio)
        throw ValidationError("time grid: final time is not a multiple of the step");
    if (steps % saves != 0)
        throw ValidationError("time grid: " + std::to_string(steps) + " steps cannot be split into " +
                              std::to_string(saves) + " save intervals");
    return TimeGrid{tau, static_cast<int>(steps), saves};
}

std::vector<double> TimeGrid::save_times() const
{
    std::vector<double> t;
    for (int s = 1; s <= saves; ++s)
        t.push_back(tau * s * steps_per_save());
    return t;
}

const SpMat& Discretization::op(DiffOp o) const
{
    auto it = ops.find(o);
    if (it == ops.end())
        throw ValidationError("missing operator " + op_name(o));
    return it->second.matrix;
}

Discretization make_discretization(std::shared_ptr<const NodeSet> nodes, const PhsConfig& phs,
                                   const std::vector<DiffOp>& ops)
{
    Discretization d;
    std::vector<DiffOp> all = ops;
    if (std::find(all.begin(), all.end(), DiffOp::Eval) == all.end())
        all.insert(all.begin(), DiffOp::Eval);
    d.ops = assemble_operators(*nodes, phs, all);
    d.pinv = std::make_shared<PseudoInverse>(d.ops.at(DiffOp::Eval).matrix);
    d.phs = phs;
    const auto& xb = nodes->eval_boundary();
    for (std::size_t j = 0; j < nodes->num_eval(); ++j)
        (xb[j] ? d.boundary_rows : d.interior_rows).push_back(static_cast<int>(j));
    d.nodes = std::move(nodes);
    return d;
}

void PdeModel::check_theta(const Vec& theta) const
{
    const auto ps = params();
    if (theta.size() != static_cast<Eigen::Index>(ps.size()))
        throw ValidationError(name() + ": expected " + std::to_string(ps.size()) + " parameters, got " +
                              std::to_string(theta.size()));
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (!(theta[i] >= ps[i].lower && theta[i] <= ps[i].upper))
            throw ValidationError(name() + ": parameter " + ps[i].name + " = " + io::format_double(theta[i]) +
                                  " outside [" + io::format_double(ps[i].lower) + ", " +
                                  io::format_double(ps[i].upper) + "]");
}

std::vector<Residual> PdeModel::residual(const Vec& theta, const Discretization& d, const Fields& now,
                                        const Fields& before) const
{
    const auto nv = variables().size();
    for (const Fields* f : {&now, &before}) {
        if (f->size() != nv)
            throw ValidationError(name() + ": expected " + std::to_string(nv) + " fields");
        for (const auto& v : *f)
            if (v.size() != static_cast<Eigen::Index>(d.num_eval()))
                throw ValidationError(name() + ": field length " + std::to_string(v.size()) + " != |X| = " +
                                      std::to_string(d.num_eval()));
    }
    Fields ny, by;
    for (std::size_t v = 0; v < nv; ++v) {
        ny.push_back(d.to_interp(now[v]));
        by.push_back(d.to_interp(before[v]));
    }
    return residual_interp(theta, d, ny, by);
}

namespace {

Vec select(const Vec& v, const std::vector<int>& rows)
{
    Vec out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out[i] = v[rows[i]];
    return out;
}

Residual split(const Vec& r, const Discretization& d)
{
    return Residual{select(r, d.interior_rows), select(r, d.boundary_rows)};
}

/// Sparse matrix whose row j is row j of `a` scaled by wa[j] plus row j of
/// `b` scaled by wb[j]; used to stitch interior and boundary rows.
SpMat blend_rows(const SpMat& a, const Vec& wa, const SpMat& b, const Vec& wb)
{
    return wa.asDiagonal() * a + wb.asDiagonal() * b;
}

void check_finite(const Vec& v, const std::string& model, int step)
{
    if (!v.allFinite())
        throw RuntimeError(model + ": non-finite values at step " + std::to_string(step));
}

Vec boundary_mask(const Discretization& d)
{
    Vec m = Vec::Zero(static_cast<Eigen::Index>(d.num_eval()));
    for (int j : d.boundary_rows)
        m[j] = 1.0;
    return m;
}

void check_interp(const Discretization& d, const Fields& f, std::size_t count, const std::string& what)
{
    if (f.size() != count)
        throw ValidationError(what + ": expected " + std::to_string(count) + " fields");
    for (const auto& v : f)
        if (v.size() != static_cast<Eigen::Index>(d.num_interp()))
            throw ValidationError(what + ": field length " + std::to_string(v.size()) + " != |Y| = " +
                                  std::to_string(d.num_interp()));
}

// ---------------------------------------------------------------- Allen-Cahn

class AllenCahn final : public PdeModel {
public:
    explicit AllenCahn(const AllenCahnOptions& opt)
        : PdeModel(TimeGrid::make(opt.final_time, opt.tau, opt.saves)), opt_(opt)
    {
    }

    std::string name() const override { return "allen_cahn"; }
    std::vector<std::string> variables() const override { return {"u"}; }
    std::vector<ParamSpec> params() const override { return {opt_.epsilon}; }
    std::vector<DiffOp> required_ops() const override { return {DiffOp::Eval, DiffOp::Laplacian}; }
    Domain domain() const override { return Domain::rectangle(-1, 1, -1, 1); }

    Trajectory solve(const Vec& theta, const Discretization& d) const override
    {
        check_theta(theta);
        const double eps2 = theta[0] * theta[0];
        const double tau = grid_.tau;
        const SpMat& e = d.op(DiffOp::Eval);
        const Vec bmask = boundary_mask(d);
        const Vec imask = Vec::Ones(bmask.size()) - bmask;
        const SpMat a = blend_rows(SpMat(e - tau * eps2 * d.op(DiffOp::Laplacian)), imask, e, bmask);
        const LinearSolver solver(a);

        Vec u = *initial_state(theta, d)[0];

        Trajectory tr;
        tr.saved.assign(1, Mat(grid_.saves, u.size()));
        tr.previous.assign(1, Mat(grid_.saves, u.size()));
        for (int n = 1; n <= grid_.steps; ++n) {
            if (n % grid_.steps_per_save() == 0)
                tr.previous[0].row(n / grid_.steps_per_save() - 1) = u.transpose();
            Vec rhs = imask.cwiseProduct(u - tau * reaction(u)) + opt_.boundary_value * bmask;
            u = e * solver.solve(rhs);
            check_finite(u, name(), n);
            if (n % grid_.steps_per_save() == 0)
                tr.saved[0].row(n / grid_.steps_per_save() - 1) = u.transpose();
        }
        return tr;
    }

    std::vector<std::optional<Vec>> initial_state(const Vec&, const Discretization& d) const override
    {
        const auto& x = d.nodes->eval_points();
        Vec u(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            u[j] = opt_.star_initial ? allen_cahn_star(x[j]) : opt_.initial_value;
        return {u};
    }

    std::vector<Residual> residual_interp(const Vec& theta, const Discretization& d, const Fields& now,
                                          const Fields& before) const override
    {
        check_interp(d, now, 1, name());
        check_interp(d, before, 1, name());
        const double eps2 = theta[0] * theta[0];
        const double tau = grid_.tau;
        const SpMat& e = d.op(DiffOp::Eval);
        const Vec eu = e * now[0];
        const Vec eb = e * before[0];
        Vec r = eu - tau * eps2 * (d.op(DiffOp::Laplacian) * now[0]) - (eb - tau * reaction(eb));
        for (int j : d.boundary_rows)
            r[j] = eu[j] - opt_.boundary_value;
        return {split(r, d)};
    }

private:
    static Vec reaction(const Vec& u) { return u.array().cube() - u.array(); }

    AllenCahnOptions opt_;
};

// ----------------------------------------------------------------------- KdV

class Kdv final : public PdeModel {
public:
    explicit Kdv(const KdvOptions& opt) : PdeModel(TimeGrid::make(opt.final_time, opt.tau, opt.saves)), opt_(opt)
    {
        if (!(opt.xmax > opt.xmin))
            throw ValidationError("kdv: empty interval");
    }

    std::string name() const override { return "kdv"; }
    std::vector<std::string> variables() const override { return {"u"}; }
    std::vector<ParamSpec> params() const override { return {opt_.theta1, opt_.theta2}; }
    std::vector<DiffOp> required_ops() const override { return {DiffOp::Eval, DiffOp::Dx, DiffOp::Dxxx}; }
    Domain domain() const override { return Domain::periodic_interval(opt_.xmin, opt_.xmax); }

    Trajectory solve(const Vec& theta, const Discretization& d) const override
    {
        check_theta(theta);
        const double tau = grid_.tau;
        const SpMat& e = d.op(DiffOp::Eval);
        const SpMat& dx = d.op(DiffOp::Dx);
        const LinearSolver solver(SpMat(e + tau * theta[1] * d.op(DiffOp::Dxxx)));

        Vec uy(d.num_interp());
        const auto& y = d.nodes->interp_points();
        for (std::size_t i = 0; i < y.size(); ++i)
            uy[i] = initial(y[i].x());
        Vec u = *initial_state(theta, d)[0];

        Trajectory tr;
        tr.saved.assign(1, Mat(grid_.saves, u.size()));
        tr.previous.assign(1, Mat(grid_.saves, u.size()));
        for (int n = 1; n <= grid_.steps; ++n) {
            if (n % grid_.steps_per_save() == 0)
                tr.previous[0].row(n / grid_.steps_per_save() - 1) = u.transpose();
            Vec rhs = u - tau * theta[0] * u.cwiseProduct(dx * uy);
            uy = solver.solve(rhs);
            u = e * uy;
            check_finite(u, name(), n);
            if (n % grid_.steps_per_save() == 0)
                tr.saved[0].row(n / grid_.steps_per_save() - 1) = u.transpose();
        }
        return tr;
    }

    std::vector<std::optional<Vec>> initial_state(const Vec&, const Discretization& d) const override
    {
        const auto& x = d.nodes->eval_points();
        Vec u(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            u[j] = initial(x[j].x());
        return {u};
    }

    std::vector<Residual> residual_interp(const Vec& theta, const Discretization& d, const Fields& now,
                                          const Fields& before) const override
    {
        check_interp(d, now, 1, name());
        check_interp(d, before, 1, name());
        const double tau = grid_.tau;
        const SpMat& e = d.op(DiffOp::Eval);
        const Vec eb = e * before[0];
        Vec r = e * now[0] + tau * theta[1] * (d.op(DiffOp::Dxxx) * now[0]) -
                (eb - tau * theta[0] * eb.cwiseProduct(d.op(DiffOp::Dx) * before[0]));
        return {split(r, d)};
    }

private:
    double initial(double x) const
    {
        double u = kdv_soliton(x, opt_.c1, opt_.l1);
        if (opt_.c2 > 0.0)
            u += kdv_soliton(x, opt_.c2, opt_.l2);
        return u;
    }

    KdvOptions opt_;
};

// ------------------------------------------------------------------ flooding

class Flooding final : public PdeModel {
public:
    explicit Flooding(const FloodingOptions& opt)
        : PdeModel(TimeGrid::make(opt.final_time, opt.tau, opt.saves)), opt_(opt)
    {
        if (opt.num_params != 2 && opt.num_params != 3)
            throw ValidationError("flooding: num_params must be 2 or 3");
        if (!(opt.diffusion >= 0.0))
            throw ValidationError("flooding: diffusion must be nonnegative");
    }

    std::string name() const override { return opt_.num_params == 2 ? "flooding2" : "flooding3"; }
    std::vector<std::string> variables() const override { return {"p", "c"}; }
    std::vector<ParamSpec> params() const override
    {
        if (opt_.num_params == 2)
            return {opt_.kappa, opt_.phi};
        return {opt_.kappa, opt_.mu, opt_.phi};
    }
    std::vector<DiffOp> required_ops() const override
    {
        return {DiffOp::Eval, DiffOp::Dx, DiffOp::Dy, DiffOp::Laplacian};
    }
    Domain domain() const override { return flooding_domain(); }

    Trajectory solve(const Vec& theta, const Discretization& d) const override
    {
        check_theta(theta);
        const Coefficients k = coefficients(theta);
        const Setup s = setup(d);

        const LinearSolver psolver(pressure_matrix(d, s, k));
        const Vec py = psolver.solve(pressure_rhs(s));
        check_finite(py, name(), 0);
        const Vec p = d.op(DiffOp::Eval) * py;

        const Vec vx = k.mobility * (d.op(DiffOp::Dx) * py);
        const Vec vy = k.mobility * (d.op(DiffOp::Dy) * py);
        const LinearSolver csolver(concentration_matrix(d, s, k, vx, vy));

        Vec c = *initial_state(theta, d)[1];
        Trajectory tr;
        tr.saved.assign(2, Mat(grid_.saves, c.size()));
        tr.previous.assign(2, Mat(grid_.saves, c.size()));
        for (int s_idx = 0; s_idx < grid_.saves; ++s_idx) {
            tr.saved[0].row(s_idx) = p.transpose();
            tr.previous[0].row(s_idx) = p.transpose();
        }
        for (int n = 1; n <= grid_.steps; ++n) {
            if (n % grid_.steps_per_save() == 0)
                tr.previous[1].row(n / grid_.steps_per_save() - 1) = c.transpose();
            c = d.op(DiffOp::Eval) * csolver.solve(concentration_rhs(s, k, c));
            check_finite(c, name(), n);
            if (n % grid_.steps_per_save() == 0)
                tr.saved[1].row(n / grid_.steps_per_save() - 1) = c.transpose();
        }
        return tr;
    }

    std::vector<std::optional<Vec>> initial_state(const Vec&, const Discretization& d) const override
    {
        return {std::nullopt, Vec(Vec::Zero(static_cast<Eigen::Index>(d.num_eval())))};
    }

    std::vector<Residual> residual_interp(const Vec& theta, const Discretization& d, const Fields& now,
                                          const Fields& before) const override
    {
        check_interp(d, now, 2, name());
        check_interp(d, before, 2, name());
        const Coefficients k = coefficients(theta);
        const Setup s = setup(d);
        const SpMat& e = d.op(DiffOp::Eval);
        const SpMat& dx = d.op(DiffOp::Dx);
        const SpMat& dy = d.op(DiffOp::Dy);
        const SpMat& lap = d.op(DiffOp::Laplacian);

        const Vec& py = now[0];
        Vec rp = -k.mobility * (lap * py) - s.source;
        const Vec pdx = dx * py, pdy = dy * py;
        for (int j : d.boundary_rows)
            rp[j] = s.nx[j] * pdx[j] + s.ny[j] * pdy[j];
        rp[s.pin] = (e * py)[s.pin];

        // the transport step is driven by the pressure of the previous step
        const Vec vx = k.mobility * (dx * before[0]), vy = k.mobility * (dy * before[0]);
        const Vec& cy = now[1];
        const Vec cdx = dx * cy, cdy = dy * cy;
        const Vec ec = e * cy;
        const double tau = grid_.tau;
        Vec rc = k.porosity * ec - tau * (vx.cwiseProduct(cdx) + vy.cwiseProduct(cdy)) -
                 tau * opt_.diffusion * (lap * cy) + tau * s.injection.cwiseProduct(ec) -
                 concentration_rhs(s, k, e * before[1]);
        for (int j : d.boundary_rows)
            rc[j] = s.nx[j] * cdx[j] + s.ny[j] * cdy[j];
        return {split(rp, d), split(rc, d)};
    }

private:
    struct Coefficients {
        double mobility; // k / m
        double porosity;
    };

    struct Setup {
        Vec source, injection, nx, ny, interior, boundary;
        int pin = 0;
    };

    Coefficients coefficients(const Vec& theta) const
    {
        const double kappa = std::exp(theta[0]);
        const double mu = opt_.num_params == 3 ? std::exp(theta[1]) : 1.0;
        const double phi = std::exp(theta[opt_.num_params - 1]);
        return {kappa / mu, phi};
    }

    Setup setup(const Discretization& d) const
    {
        const auto& x = d.nodes->eval_points();
        const auto& nrm = d.nodes->eval_normals();
        const Eigen::Index m = static_cast<Eigen::Index>(x.size());
        Setup s{Vec(m), Vec(m), Vec::Zero(m), Vec::Zero(m), Vec::Ones(m), Vec::Zero(m), 0};
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            s.source[j] = flooding_source(opt_, x[j]);
            s.injection[j] = opt_.injection_term ? std::max(s.source[j], 0.0) : 0.0;
            if (x[j].norm() < best && !d.nodes->eval_boundary()[j]) {
                best = x[j].norm();
                s.pin = static_cast<int>(j);
            }
        }
        for (int j : d.boundary_rows) {
            s.nx[j] = nrm[j].x();
            s.ny[j] = nrm[j].y();
            s.interior[j] = 0.0;
            s.boundary[j] = 1.0;
        }
        return s;
    }

    SpMat pressure_matrix(const Discretization& d, const Setup& s, const Coefficients& k) const
    {
        SpMat normal = SpMat(s.nx.asDiagonal() * d.op(DiffOp::Dx)) + SpMat(s.ny.asDiagonal() * d.op(DiffOp::Dy));
        Vec interior = s.interior, pin = Vec::Zero(s.interior.size());
        interior[s.pin] = 0.0;
        pin[s.pin] = 1.0;
        SpMat a = SpMat(interior.asDiagonal() * (-k.mobility * d.op(DiffOp::Laplacian))) +
                  SpMat(s.boundary.asDiagonal() * normal) + SpMat(pin.asDiagonal() * d.op(DiffOp::Eval));
        a.prune(0.0);
        return a;
    }

    Vec pressure_rhs(const Setup& s) const
    {
        Vec b = s.interior.cwiseProduct(s.source);
        b[s.pin] = 0.0;
        return b;
    }

    SpMat concentration_matrix(const Discretization& d, const Setup& s, const Coefficients& k, const Vec& vx,
                               const Vec& vy) const
    {
        const double tau = grid_.tau;
        const SpMat& e = d.op(DiffOp::Eval);
        SpMat interior = k.porosity * e - tau * SpMat(vx.asDiagonal() * d.op(DiffOp::Dx)) -
                         tau * SpMat(vy.asDiagonal() * d.op(DiffOp::Dy)) -
                         tau * opt_.diffusion * d.op(DiffOp::Laplacian) + tau * SpMat(s.injection.asDiagonal() * e);
        SpMat normal = SpMat(s.nx.asDiagonal() * d.op(DiffOp::Dx)) + SpMat(s.ny.asDiagonal() * d.op(DiffOp::Dy));
        SpMat a = SpMat(s.interior.asDiagonal() * interior) + SpMat(s.boundary.asDiagonal() * normal);
        a.prune(0.0);
        return a;
    }

    Vec concentration_rhs(const Setup& s, const Coefficients& k, const Vec& c) const
    {
        return s.interior.cwiseProduct(k.porosity * c + grid_.tau * s.injection);
    }

    FloodingOptions opt_;
};

} // namespace

std::unique_ptr<PdeModel> make_allen_cahn(const AllenCahnOptions& opt) { return std::make_unique<AllenCahn>(opt); }
std::unique_ptr<PdeModel> make_kdv(const KdvOptions& opt) { return std::make_unique<Kdv>(opt); }
std::unique_ptr<PdeModel> make_flooding(const FloodingOptions& opt) { return std::make_unique<Flooding>(opt); }

double allen_cahn_star(const Point& p)
{
    const double r = p.norm();
    double g = 0.0;
    if (r > 0.0) {
        g = std::acos(std::clamp(p.x() / r, -1.0, 1.0));
        if (p.y() < 0.0)
            g = 2.0 * std::numbers::pi - g;
    }
    return r <= (3.0 + 3.0 * std::sin(5.0 * g)) / 8.0 ? 1.0 : 0.0;
}

double kdv_soliton(double x, double c, double l)
{
    const double s = 1.0 / std::cosh(0.5 * std::sqrt(c) * (x - l));
    return 0.5 * c * s * s;
}

Domain flooding_domain()
{
    return Domain::star(1.0, {{7, 0.1, 0.0}, {1, 0.1, 0.0}}, BoundingBox{-1.5, 1.5, -1.5, 1.5});
}

double flooding_source(const FloodingOptions& opt, const Point& p)
{
    return std::exp(-opt.source_width * (p - opt.injector).squaredNorm()) -
           std::exp(-opt.source_width * (p - opt.producer).squaredNorm());
}

// ----------------------------------------------------------------- snapshots

Mat SnapshotSet::inputs() const
{
    const Eigen::Index q = thetas.cols();
    const auto s = static_cast<Eigen::Index>(times.size());
    Mat in(thetas.rows() * s, q + 1);
    for (Eigen::Index i = 0; i < thetas.rows(); ++i)
        for (Eigen::Index k = 0; k < s; ++k) {
            in.row(i * s + k).head(q) = thetas.row(i);
            in(i * s + k, q) = times[static_cast<std::size_t>(k)];
        }
    return in;
}

namespace {

SnapshotSet empty_set(const PdeModel& model, const Discretization& d, const Mat& thetas)
{
    if (thetas.rows() == 0)
        throw ValidationError("build_snapshots: empty parameter list");
    if (thetas.cols() != static_cast<Eigen::Index>(model.params().size()))
        throw ValidationError("build_snapshots: parameter dimension mismatch");
    SnapshotSet s;
    s.variables = model.variables();
    for (const auto& p : model.params())
        s.param_names.push_back(p.name);
    s.thetas = thetas;
    s.times = model.time_grid().save_times();
    const Eigen::Index rows = s.rows(), cols = static_cast<Eigen::Index>(d.num_eval());
    s.saved.assign(s.variables.size(), Mat(rows, cols));
    s.previous.assign(s.variables.size(), Mat(rows, cols));
    return s;
}

void store(SnapshotSet& s, Eigen::Index i, const Trajectory& tr)
{
    const auto saves = static_cast<Eigen::Index>(s.times.size());
    for (std::size_t v = 0; v < s.variables.size(); ++v) {
        s.saved[v].middleRows(i * saves, saves) = tr.saved[v];
        s.previous[v].middleRows(i * saves, saves) = tr.previous[v];
    }
}

std::string theta_text(const Mat& thetas, Eigen::Index i)
{
    std::ostringstream os;
    os << "(";
    for (Eigen::Index k = 0; k < thetas.cols(); ++k)
        os << (k ? ", " : "") << io::format_double(thetas(i, k));
    os << ")";
    return os.str();
}

} // namespace

SnapshotSet build_snapshots(const PdeModel& model, const Discretization& d, const Mat& thetas)
{
    SnapshotSet s = empty_set(model, d, thetas);
    std::optional<std::string> failure;
    std::mutex lock;
#pragma omp parallel for schedule(dynamic, 1)
    for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
        try {
            Trajectory tr = model.solve(thetas.row(i).transpose(), d);
            store(s, i, tr);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> guard(lock);
            if (!failure)
                failure = "forward solve failed at theta = " + theta_text(thetas, i) + ": " + e.what();
        }
    }
    if (failure)
        throw RuntimeError(*failure);
    return s;
}

SnapshotSet serial::build_snapshots(const PdeModel& model, const Discretization& d, const Mat& thetas)
{
    SnapshotSet s = empty_set(model, d, thetas);
    for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
        try {
            store(s, i, model.solve(thetas.row(i).transpose(), d));
        } catch (const std::exception& e) {
            throw RuntimeError("forward solve failed at theta = " + theta_text(thetas, i) + ": " + e.what());
        }
    }
    return s;
}

namespace {

void write_rows(const SnapshotSet& s, const Mat& fields, const std::filesystem::path& path)
{
    std::vector<std::string> header = s.param_names;
    header.push_back("t");
    for (Eigen::Index j = 0; j < fields.cols(); ++j)
        header.push_back("x" + std::to_string(j));
    const Mat in = s.inputs();
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(fields.rows()));
    for (Eigen::Index r = 0; r < fields.rows(); ++r) {
        auto& row = rows[static_cast<std::size_t>(r)];
        row.reserve(static_cast<std::size_t>(in.cols() + fields.cols()));
        for (Eigen::Index k = 0; k < in.cols(); ++k)
            row.push_back(in(r, k));
        for (Eigen::Index j = 0; j < fields.cols(); ++j)
            row.push_back(fields(r, j));
    }
    io::write_csv(path, header, rows);
}

Mat read_rows(const std::filesystem::path& path, std::size_t q, Mat* inputs)
{
    auto t = io::read_csv(path);
    if (t.rows.empty() || t.header.size() <= q + 1)
        throw RuntimeError("malformed snapshot file " + path.string());
    const auto rows = static_cast<Eigen::Index>(t.rows.size());
    const auto cols = static_cast<Eigen::Index>(t.header.size() - q - 1);
    Mat out(rows, cols);
    if (inputs)
        inputs->resize(rows, static_cast<Eigen::Index>(q + 1));
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (t.rows[static_cast<std::size_t>(r)].size() != t.header.size())
            throw RuntimeError("snapshot file " + path.string() + ": ragged row " + std::to_string(r));
        for (Eigen::Index k = 0; k <= static_cast<Eigen::Index>(q) && inputs; ++k)
            (*inputs)(r, k) = t.number(static_cast<std::size_t>(r), static_cast<std::size_t>(k));
        for (Eigen::Index j = 0; j < cols; ++j)
            out(r, j) = t.number(static_cast<std::size_t>(r), static_cast<std::size_t>(j) + q + 1);
    }
    return out;
}

} // namespace

void save_snapshots(const SnapshotSet& s, const std::filesystem::path& dir)
{
    for (std::size_t v = 0; v < s.variables.size(); ++v) {
        write_rows(s, s.saved[v], dir / (s.variables[v] + ".snapshots.csv"));
        write_rows(s, s.previous[v], dir / (s.variables[v] + ".previous.csv"));
    }
}

SnapshotSet load_snapshots(const std::filesystem::path& dir, const std::vector<std::string>& variables,
                           std::size_t num_params)
{
    SnapshotSet s;
    s.variables = variables;
    Mat inputs;
    for (std::size_t v = 0; v < variables.size(); ++v) {
        const auto path = dir / (variables[v] + ".snapshots.csv");
        s.saved.push_back(read_rows(path, num_params, v == 0 ? &inputs : nullptr));
        s.previous.push_back(read_rows(dir / (variables[v] + ".previous.csv"), num_params, nullptr));
        if (v == 0) {
            auto header = io::read_csv(path).header;
            s.param_names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(num_params));
        }
    }
    // recover the theta list and save times from the theta-major layout
    std::vector<double> times;
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        double t = inputs(r, static_cast<Eigen::Index>(num_params));
        if (!times.empty() && t <= times.back())
            break;
        times.push_back(t);
    }
    const auto saves = static_cast<Eigen::Index>(times.size());
    if (saves == 0 || inputs.rows() % saves != 0)
        throw RuntimeError("snapshot rows in " + dir.string() + " are not theta-major");
    s.times = times;
    s.thetas.resize(inputs.rows() / saves, static_cast<Eigen::Index>(num_params));
    for (Eigen::Index i = 0; i < s.thetas.rows(); ++i)
        s.thetas.row(i) = inputs.row(i * saves).head(static_cast<Eigen::Index>(num_params));
    return s;
}

double relative_residual(const PdeModel& model, const Vec& theta, const Discretization& d, const Fields& now,
                         const Fields& before)
{
    Fields zero;
    for (const auto& f : now)
        zero.push_back(Vec::Zero(f.size()));
    double num = 0.0, den = 0.0;
    for (const auto& r : model.residual(theta, d, now, before))
        num += r.interior.squaredNorm() + r.boundary.squaredNorm();
    for (const auto& r : model.residual(theta, d, zero, before))
        den += r.interior.squaredNorm() + r.boundary.squaredNorm();
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace lawgp
