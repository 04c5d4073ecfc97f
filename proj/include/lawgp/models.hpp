#pragma once

#include "lawgp/common.hpp"
#include "lawgp/geometry.hpp"
#include "lawgp/rbffd.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lawgp {

struct ParamSpec {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
};

/// Uniform time grid: `steps` steps of length tau, fields saved every
/// steps / saves steps.
struct TimeGrid {
    double tau = 1e-3;
    int steps = 1000;
    int saves = 10;

    static TimeGrid make(double final_time, double tau, int saves);
    int steps_per_save() const { return steps / saves; }
    std::vector<double> save_times() const;
};

/// Everything a model needs from the spatial discretization. Built once per
/// node set, shared by every solve and residual evaluation.
struct Discretization {
    std::shared_ptr<const NodeSet> nodes;
    PhsConfig phs;
    OperatorSet ops;
    std::shared_ptr<const PseudoInverse> pinv;
    std::vector<int> interior_rows; // X rows off the boundary
    std::vector<int> boundary_rows;

    const SpMat& op(DiffOp op) const;
    std::size_t num_eval() const { return nodes->num_eval(); }
    std::size_t num_interp() const { return nodes->num_interp(); }
    /// E^dagger applied to a field on X.
    Vec to_interp(const Vec& on_x) const { return pinv->apply(on_x); }
};

Discretization make_discretization(std::shared_ptr<const NodeSet> nodes, const PhsConfig& phs,
                                   const std::vector<DiffOp>& ops);

using Fields = std::vector<Vec>; // one vector on X per variable

/// Fields at the save times and one step earlier, per variable
/// (rows = save index, columns = X).
struct Trajectory {
    std::vector<Mat> saved;
    std::vector<Mat> previous;
};

/// Scheme residual of one variable: L E^dagger u - R, split into interior
/// and boundary rows.
struct Residual {
    Vec interior;
    Vec boundary;
};

class PdeModel {
public:
    virtual ~PdeModel() = default;

    virtual std::string name() const = 0;
    virtual std::vector<std::string> variables() const = 0;
    virtual std::vector<ParamSpec> params() const = 0;
    virtual std::vector<DiffOp> required_ops() const = 0;
    virtual Domain domain() const = 0;
    const TimeGrid& time_grid() const { return grid_; }
    /// Relative tolerance for the residual of the model's own solution.
    virtual double tolerance() const { return 1e-6; }

    virtual Trajectory solve(const Vec& theta, const Discretization& disc) const = 0;

    /// Initial field on X per variable; empty for variables that are not
    /// stepped in time (e.g. a pressure solved once per parameter).
    virtual std::vector<std::optional<Vec>> initial_state(const Vec& theta, const Discretization& disc) const = 0;

    /// Residual of the time step that ends at `now`, starting from `before`
    /// (both on X, one vector per variable). Fields are mapped to Y by E^dagger.
    std::vector<Residual> residual(const Vec& theta, const Discretization& disc, const Fields& now,
                                   const Fields& before) const;

    /// Same residual with the fields already given on Y.
    virtual std::vector<Residual> residual_interp(const Vec& theta, const Discretization& disc, const Fields& now_y,
                                                  const Fields& before_y) const = 0;

    /// Throws ValidationError when theta has the wrong length or leaves the
    /// prior box.
    void check_theta(const Vec& theta) const;

protected:
    explicit PdeModel(TimeGrid grid) : grid_(grid) {}
    TimeGrid grid_;
};

// ------------------------------------------------------------ Allen-Cahn

struct AllenCahnOptions {
    double tau = 1e-3;
    double final_time = 1.0;
    int saves = 10;
    double boundary_value = 0.0;
    bool star_initial = true;    // otherwise constant `initial_value`
    double initial_value = 1.0;
    ParamSpec epsilon{"epsilon", 0.0, 1.0};
};

/// u_t = eps^2 Lap u - (u^3 - u) on [-1,1]^2 with Dirichlet data, stepped by
/// u^{n+1} - tau eps^2 Lap u^{n+1} = u^n - tau f(u^n).
std::unique_ptr<PdeModel> make_allen_cahn(const AllenCahnOptions& opt = {});

/// 1 inside the five-petal star r <= (3 + 3 sin 5g) / 8, 0 outside.
double allen_cahn_star(const Point& p);

// ------------------------------------------------------------------- KdV

struct KdvOptions {
    double xmin = -10.0, xmax = 10.0;
    double c1 = 6.0, c2 = 2.0;
    double l1 = -5.0, l2 = -1.0;
    double tau = 1e-4;
    double final_time = 1.0;
    int saves = 10;
    ParamSpec theta1{"theta1", 2.0, 8.0};
    ParamSpec theta2{"theta2", 0.2, 2.0};
};

/// u_t + theta1 u u_x + theta2 u_xxx = 0 on a periodic interval; implicit
/// dispersion, explicit advection. c2 = 0 gives a single soliton.
std::unique_ptr<PdeModel> make_kdv(const KdvOptions& opt = {});

/// (c/2) sech^2(sqrt(c)/2 (x - l))
double kdv_soliton(double x, double c, double l);

// -------------------------------------------------------------- flooding

struct FloodingOptions {
    int num_params = 2; // (kappa, phi) or (kappa, mu, phi)
    double tau = 1e-3;
    double final_time = 0.1;
    int saves = 10;
    double diffusion = 0.01;      // d_m
    double source_width = 50.0;
    Point injector{-0.8, 0.0};
    Point producer{0.8, 0.0};
    bool injection_term = true;   // q+ (1 - c) on the right of the c equation
    ParamSpec kappa{"kappa", -3.0, 3.0};
    ParamSpec mu{"mu", -10.0, 10.0};
    ParamSpec phi{"phi", -6.0, 6.0};
};

/// Incompressible miscible displacement on the seven-petal star:
///   -(k/m) Lap p = q,  phi c_t - (k/m) grad p . grad c - d_m Lap c = q+ (1 - c)
/// with k = exp(kappa), m = exp(mu) (or 1), phi_eff = exp(phi), no-flux
/// boundaries and the pressure pinned at the node nearest the origin.
std::unique_ptr<PdeModel> make_flooding(const FloodingOptions& opt = {});

Domain flooding_domain();
double flooding_source(const FloodingOptions& opt, const Point& p);

// -------------------------------------------------------------- snapshots

/// Rows ordered theta-major: row = i * saves + s.
struct SnapshotSet {
    std::vector<std::string> variables;
    std::vector<std::string> param_names;
    Mat thetas;              // N x q
    std::vector<double> times;
    std::vector<Mat> saved;  // per variable, (N * saves) x M
    std::vector<Mat> previous;

    Eigen::Index rows() const { return thetas.rows() * static_cast<Eigen::Index>(times.size()); }
    /// (theta, t) input of every row, (N * saves) x (q + 1).
    Mat inputs() const;
};

/// Forward solves for every theta (OpenMP over theta).
SnapshotSet build_snapshots(const PdeModel& model, const Discretization& disc, const Mat& thetas);

namespace serial {
SnapshotSet build_snapshots(const PdeModel& model, const Discretization& disc, const Mat& thetas);
} // namespace serial

/// Writes `<var>.snapshots.csv` (theta columns, t, field on X) and
/// `<var>.previous.csv` (fields one step before each save) per variable.
void save_snapshots(const SnapshotSet& s, const std::filesystem::path& dir);
SnapshotSet load_snapshots(const std::filesystem::path& dir, const std::vector<std::string>& variables,
                           std::size_t num_params);

/// l2 norm of the concatenated residual relative to the norm of the
/// right-hand side, used for solver-consistency checks.
double relative_residual(const PdeModel& model, const Vec& theta, const Discretization& disc, const Fields& now,
                         const Fields& before);

} // namespace lawgp
