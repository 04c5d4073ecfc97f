#include "lawgp/lawcorrect.hpp"

#include "lawgp/io.hpp"
#include "lawgp/optimize.hpp"

#include <Eigen/LU>

#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <random>

namespace lawgp {

// ----------------------------------------------------------- SurrogateSet

int SurrogateSet::total_modes() const
{
    int k = 0;
    for (const auto& b : bases)
        k += b.size();
    return k;
}

Vec SurrogateSet::mean(std::size_t var, const Vec& input) const
{
    const auto& g = gps.at(var);
    Vec m(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k)
        m[static_cast<Eigen::Index>(k)] = g[k].predict(input).mean;
    return m;
}

Vec SurrogateSet::stddev(std::size_t var, const Vec& input) const
{
    const auto& g = gps.at(var);
    Vec s(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k)
        s[static_cast<Eigen::Index>(k)] = std::sqrt(g[k].predict(input).variance);
    return s;
}

Vec SurrogateSet::field(std::size_t var, const Vec& input) const
{
    if (gps.at(var).size() != static_cast<std::size_t>(bases.at(var).size()))
        throw ValidationError("predict_field: " + std::to_string(gps[var].size()) + " surrogates for " +
                              std::to_string(bases[var].size()) + " modes");
    return bases[var].reconstruct(mean(var, input));
}

// --------------------------------------------------------- PhsInterpolant

PhsInterpolant::PhsInterpolant(const Mat& centers, const Mat& values) : centers_(centers)
{
    const Eigen::Index n = centers.rows(), d = centers.cols();
    if (n == 0 || values.rows() != n)
        throw ValidationError("interpolant: " + std::to_string(n) + " centers vs " +
                              std::to_string(values.rows()) + " value rows");
    mean_ = centers.colwise().mean().transpose();
    scale_ = ((centers.rowwise() - mean_.transpose()).array().square().colwise().sum() / static_cast<double>(n))
                 .sqrt()
                 .transpose();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (scale_[i] > 1e-14 * std::max(1.0, std::abs(mean_[i])))
            tail_dims_.push_back(i);
        else
            scale_[i] = 1.0;
    }
    scaled_ = (centers.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();

    const auto m = static_cast<Eigen::Index>(tail_dims_.size()) + 1;
    Mat a = Mat::Zero(n + m, n + m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            a(i, j) = std::pow((scaled_.row(i) - scaled_.row(j)).norm(), 3);
        a(i, n) = a(n, i) = 1.0;
        for (std::size_t t = 0; t < tail_dims_.size(); ++t)
            a(i, n + 1 + static_cast<Eigen::Index>(t)) = a(n + 1 + static_cast<Eigen::Index>(t), i) =
                scaled_(i, tail_dims_[t]);
    }
    Mat rhs = Mat::Zero(n + m, values.cols());
    rhs.topRows(n) = values;
    Eigen::FullPivLU<Mat> lu(a);
    if (!lu.isInvertible())
        throw RuntimeError("interpolant: singular system (duplicate centers or degenerate layout)");
    coef_ = lu.solve(rhs);
}

Vec PhsInterpolant::features(const Vec& x) const
{
    if (x.size() != centers_.cols())
        throw ValidationError("interpolant: input dimension mismatch");
    const Vec z = (x - mean_).cwiseQuotient(scale_);
    const Eigen::Index n = scaled_.rows();
    Vec f(coef_.rows());
    for (Eigen::Index i = 0; i < n; ++i)
        f[i] = std::pow((scaled_.row(i).transpose() - z).norm(), 3);
    f[n] = 1.0;
    for (std::size_t t = 0; t < tail_dims_.size(); ++t)
        f[n + 1 + static_cast<Eigen::Index>(t)] = z[tail_dims_[t]];
    return f;
}

Vec PhsInterpolant::evaluate(const Vec& x) const
{
    return coef_.transpose() * features(x);
}

double PhsInterpolant::evaluate(const Vec& x, Eigen::Index column) const
{
    return coef_.col(column).dot(features(x));
}

// ------------------------------------------------------------------ loss

ReducedBasis ReducedBasis::make(const PodBasis& basis, const Discretization& disc)
{
    ReducedBasis r;
    r.psi.resize(static_cast<Eigen::Index>(disc.num_interp()), basis.size());
    for (int k = 0; k < basis.size(); ++k)
        r.psi.col(k) = disc.to_interp(basis.modes().row(k).transpose());
    r.psi_mean = basis.centered() ? disc.to_interp(basis.mean())
                                  : Vec(Vec::Zero(static_cast<Eigen::Index>(disc.num_interp())));
    return r;
}

double law_loss(const PdeModel& model, const Discretization& disc, const std::vector<ReducedBasis>& bases,
                const Vec& theta, const std::vector<Vec>& now, const std::vector<Vec>& before, double lambda)
{
    if (now.size() != bases.size() || before.size() != bases.size())
        throw ValidationError("law_loss: expected coefficients for " + std::to_string(bases.size()) + " variables");
    Fields ny, by;
    for (std::size_t v = 0; v < bases.size(); ++v) {
        if (now[v].size() != bases[v].psi.cols() || before[v].size() != bases[v].psi.cols())
            throw ValidationError("law_loss: coefficient length mismatch for variable " + std::to_string(v));
        ny.push_back(bases[v].interp(now[v]));
        by.push_back(bases[v].interp(before[v]));
    }
    double loss = 0.0;
    for (const auto& r : model.residual_interp(theta, disc, ny, by))
        loss += r.interior.squaredNorm() + lambda * r.boundary.squaredNorm();
    return loss;
}

void CorrectionConfig::validate(std::size_t num_params) const
{
    if (!(c >= 0.0))
        throw ValidationError("correction: c must be nonnegative");
    if (!(lambda >= 0.0))
        throw ValidationError("correction: lambda must be nonnegative");
    if (budget < 1)
        throw ValidationError("correction: budget must be positive");
    if (substeps < 1)
        throw ValidationError("correction: substeps must be at least 1");
    if (theta_law.rows() > 0 && theta_law.cols() != static_cast<Eigen::Index>(num_params))
        throw ValidationError("correction: theta_law has " + std::to_string(theta_law.cols()) +
                              " columns, model has " + std::to_string(num_params) + " parameters");
}

// ---------------------------------------------------------- CorrectionMap

namespace {

Mat entry_inputs(const std::vector<CorrectionEntry>& entries, const Mat& anchors, Mat* values, int total)
{
    std::vector<const CorrectionEntry*> used;
    for (const auto& e : entries)
        if (!e.skipped)
            used.push_back(&e);
    const Eigen::Index d = anchors.cols();
    const auto n = static_cast<Eigen::Index>(used.size()) + anchors.rows();
    Mat x(n, d);
    values->setZero(n, total);
    for (std::size_t i = 0; i < used.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x.row(r).head(d - 1) = used[i]->theta.transpose();
        x(r, d - 1) = used[i]->t;
        values->row(r) = used[i]->omega.transpose();
    }
    x.bottomRows(anchors.rows()) = anchors;
    return x;
}

} // namespace

CorrectionMap::CorrectionMap(std::vector<CorrectionEntry> entries, const Mat& anchors, std::vector<int> modes)
    : entries_(std::move(entries)), anchors_(anchors), modes_(std::move(modes))
{
    int total = 0;
    for (int k : modes_)
        total += k;
    Mat values;
    Mat x = entry_inputs(entries_, anchors_, &values, total);
    interp_ = std::make_shared<PhsInterpolant>(x, values);
}

bool CorrectionMap::any_budget_exhausted() const
{
    for (const auto& e : entries_)
        if (e.budget_exhausted)
            return true;
    return false;
}

double CorrectionMap::shift(std::size_t var, int k, const Vec& input) const
{
    if (var >= modes_.size() || k < 0 || k >= modes_[var])
        throw ValidationError("correction map: no interpolant for variable " + std::to_string(var) + ", mode " +
                              std::to_string(k));
    Eigen::Index col = k;
    for (std::size_t v = 0; v < var; ++v)
        col += modes_[v];
    return interp_->evaluate(input, col);
}

void CorrectionMap::save(const std::filesystem::path& dir, const std::vector<std::string>& variables) const
{
    const Eigen::Index d = anchors_.cols();
    Eigen::Index offset = 0;
    for (std::size_t v = 0; v < variables.size(); ++v) {
        const int k = modes_.at(v);
        std::vector<std::string> header{"kind"};
        for (Eigen::Index i = 0; i + 1 < d; ++i)
            header.push_back("theta" + std::to_string(i));
        header.push_back("t");
        for (int i = 0; i < k; ++i)
            header.push_back("omega" + std::to_string(i));
        for (int i = 0; i < k; ++i)
            header.push_back("bound" + std::to_string(i));
        for (const char* h : {"loss_zero", "loss", "evaluations", "budget_exhausted"})
            header.push_back(h);

        std::vector<std::vector<std::string>> rows;
        for (const auto& e : entries_) {
            std::vector<std::string> r{e.skipped ? "skipped" : "law"};
            for (Eigen::Index i = 0; i < e.theta.size(); ++i)
                r.push_back(io::format_double(e.theta[i]));
            r.push_back(io::format_double(e.t));
            for (int i = 0; i < k; ++i)
                r.push_back(io::format_double(e.omega[offset + i]));
            for (int i = 0; i < k; ++i)
                r.push_back(io::format_double(e.bound[offset + i]));
            r.push_back(io::format_double(e.loss_zero));
            r.push_back(io::format_double(e.loss));
            r.push_back(std::to_string(e.evaluations));
            r.push_back(e.budget_exhausted ? "1" : "0");
            rows.push_back(std::move(r));
        }
        for (Eigen::Index a = 0; a < anchors_.rows(); ++a) {
            std::vector<std::string> r{"anchor"};
            for (Eigen::Index i = 0; i < d; ++i)
                r.push_back(io::format_double(anchors_(a, i)));
            for (int i = 0; i < 2 * k; ++i)
                r.push_back("0");
            for (const char* z : {"0", "0", "0", "0"})
                r.push_back(z);
            rows.push_back(std::move(r));
        }
        io::write_csv(dir / (variables[v] + ".correction.csv"), header, rows);
        offset += k;
    }
}

CorrectionMap CorrectionMap::load(const std::filesystem::path& dir, const std::vector<std::string>& variables,
                                  std::size_t num_params)
{
    std::vector<CorrectionEntry> entries;
    std::vector<int> modes;
    Mat anchors;
    const auto q = static_cast<Eigen::Index>(num_params);
    for (std::size_t v = 0; v < variables.size(); ++v) {
        auto t = io::read_csv(dir / (variables[v] + ".correction.csv"));
        const auto k = static_cast<int>((static_cast<Eigen::Index>(t.header.size()) - 1 - (q + 1) - 4) / 2);
        if (k < 1)
            throw RuntimeError("malformed correction file for " + variables[v]);
        modes.push_back(k);
        std::vector<Vec> anchor_rows;
        std::size_t e = 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string& kind = t.rows[r].at(0);
            Vec input(q + 1);
            for (Eigen::Index i = 0; i <= q; ++i)
                input[i] = t.number(r, static_cast<std::size_t>(i) + 1);
            const std::size_t base = static_cast<std::size_t>(q) + 2;
            if (kind == "anchor") {
                anchor_rows.push_back(input);
                continue;
            }
            if (v == 0) {
                CorrectionEntry ce;
                ce.theta = input.head(q);
                ce.t = input[q];
                ce.skipped = kind == "skipped";
                entries.push_back(ce);
            }
            CorrectionEntry& ce = entries.at(e++);
            Vec om(k), bd(k);
            for (int i = 0; i < k; ++i) {
                om[i] = t.number(r, base + static_cast<std::size_t>(i));
                bd[i] = t.number(r, base + static_cast<std::size_t>(k + i));
            }
            Vec o2(ce.omega.size() + k), b2(ce.bound.size() + k);
            o2 << ce.omega, om;
            b2 << ce.bound, bd;
            ce.omega = o2;
            ce.bound = b2;
            const std::size_t tail = base + 2 * static_cast<std::size_t>(k);
            ce.loss_zero = t.number(r, tail);
            ce.loss = t.number(r, tail + 1);
            ce.evaluations = static_cast<int>(t.number(r, tail + 2));
            ce.budget_exhausted = t.rows[r].at(tail + 3) == "1";
        }
        if (v == 0) {
            anchors.resize(static_cast<Eigen::Index>(anchor_rows.size()), q + 1);
            for (std::size_t a = 0; a < anchor_rows.size(); ++a)
                anchors.row(static_cast<Eigen::Index>(a)) = anchor_rows[a].transpose();
        }
    }
    return CorrectionMap(std::move(entries), anchors, std::move(modes));
}

// ------------------------------------------------------------ optimization

namespace {

bool coincides(const Vec& theta, const Mat& obs)
{
    for (Eigen::Index i = 0; i < obs.rows(); ++i)
        if ((obs.row(i).transpose() - theta).norm() <= 1e-12 * std::max(1.0, theta.norm()))
            return true;
    return false;
}

std::string format_short(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

Vec input_of(const Vec& theta, double t)
{
    Vec x(theta.size() + 1);
    x << theta, t;
    return x;
}

// Corrections at one theta_law, marched forward in time. Between two
// marching points the corrected trajectory is taken linear in t, so the
// state one scheme step before t_j is
//   (1 - tau / dt) u(t_j) + (tau / dt) u(t_{j-1}),
// with u(0) the projected initial state. Variables without an initial state
// use u(t_j) itself at the first point. Only save times produce entries.
std::vector<CorrectionEntry> correct_trajectory(const PdeModel& model, const Discretization& disc,
                                                const SurrogateSet& s, const std::vector<ReducedBasis>& reduced,
                                                const Mat& theta_obs, const CorrectionConfig& cfg, Eigen::Index law)
{
    const auto times = model.time_grid().save_times();
    const double tau = model.time_grid().tau;
    const std::size_t nv = s.variables.size();
    const int total = s.total_modes();
    const Vec theta = cfg.theta_law.row(law).transpose();
    const bool skip = coincides(theta, theta_obs);

    std::vector<Eigen::Index> offset, len;
    for (std::size_t v = 0; v < nv; ++v) {
        offset.push_back(v == 0 ? 0 : offset[v - 1] + len[v - 1]);
        len.push_back(s.bases[v].size());
    }

    std::vector<Vec> prev_state(nv);
    std::vector<bool> anchored(nv, false);
    const auto init = model.initial_state(theta, disc);
    for (std::size_t v = 0; v < nv; ++v)
        if (v < init.size() && init[v]) {
            prev_state[v] = s.bases[v].project(*init[v]);
            anchored[v] = true;
        }

    std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(law + 1)));
    auto random_point = [&](const Vec& lo, const Vec& hi) {
        Vec p(lo.size());
        for (Eigen::Index i = 0; i < lo.size(); ++i)
            p[i] = lo[i] == hi[i] ? lo[i] : std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
        return p;
    };

    std::vector<CorrectionEntry> out;
    Vec prev_omega = Vec::Zero(total);
    double t_prev = 0.0;
    int evaluations = 0;
    bool exhausted = false;
    for (std::size_t si = 0; si < times.size(); ++si) {
        const double t0 = si == 0 ? 0.0 : times[si - 1];
        for (int sub = 1; sub <= cfg.substeps; ++sub) {
            const double t = sub == cfg.substeps ? times[si] : t0 + (times[si] - t0) * sub / cfg.substeps;
            const double w = tau / (t - t_prev);
            if (!(w <= 1.0))
                throw ValidationError("correction: marching step " + format_short(t - t_prev) +
                                      " is shorter than the scheme step");

            CorrectionEntry e;
            e.theta = theta;
            e.t = t;
            e.omega = Vec::Zero(total);
            e.bound = Vec::Zero(total);
            e.skipped = skip;

            std::vector<Vec> a_now;
            for (std::size_t v = 0; v < nv; ++v) {
                Vec mn(len[v]);
                for (Eigen::Index k = 0; k < len[v]; ++k) {
                    const Prediction p = s.gps[v][static_cast<std::size_t>(k)].predict_uncorrected(input_of(theta, t));
                    mn[k] = p.mean;
                    e.bound[offset[v] + k] = skip ? 0.0 : cfg.c * std::sqrt(p.variance);
                }
                a_now.push_back(mn);
            }

            auto loss_of = [&](const Vec& omega) {
                std::vector<Vec> n(nv), b(nv);
                for (std::size_t v = 0; v < nv; ++v) {
                    n[v] = a_now[v] + omega.segment(offset[v], len[v]);
                    b[v] = anchored[v] ? Vec((1.0 - w) * n[v] + w * prev_state[v]) : n[v];
                }
                return law_loss(model, disc, reduced, theta, n, b, cfg.lambda);
            };

            e.loss_zero = loss_of(e.omega);
            e.loss = e.loss_zero;
            if (e.bound.maxCoeff() > 0.0) {
                const Vec lower = -e.bound, upper = e.bound;
                std::vector<Vec> starts{Vec::Zero(total), prev_omega.cwiseMax(lower).cwiseMin(upper)};
                int budget = cfg.budget;

                // single-variable searches with the other variables held at
                // the uncorrected prediction; their optima seed the joint search
                Vec combined = Vec::Zero(total);
                if (nv > 1) {
                    const int share = cfg.budget / (static_cast<int>(nv) * (cfg.joint ? 2 : 1));
                    for (std::size_t v = 0; v < nv; ++v) {
                        Vec lo = Vec::Zero(total), hi = Vec::Zero(total);
                        lo.segment(offset[v], len[v]) = lower.segment(offset[v], len[v]);
                        hi.segment(offset[v], len[v]) = upper.segment(offset[v], len[v]);
                        std::vector<Vec> bs{Vec::Zero(total)};
                        Vec cont = Vec::Zero(total);
                        cont.segment(offset[v], len[v]) = starts[1].segment(offset[v], len[v]);
                        bs.push_back(cont);
                        for (int r = 0; r < cfg.random_starts; ++r)
                            bs.push_back(random_point(lo, hi));
                        BoxSearchOptions o;
                        o.max_evaluations = std::max(share, static_cast<int>(bs.size()));
                        auto res = minimize_in_box(loss_of, lo, hi, bs, o);
                        e.evaluations += res.evaluations;
                        e.budget_exhausted = e.budget_exhausted || res.budget_exhausted;
                        starts.push_back(res.x);
                        combined.segment(offset[v], len[v]) = res.x.segment(offset[v], len[v]);
                        if (res.value <= e.loss) {
                            e.omega = res.x;
                            e.loss = res.value;
                        }
                    }
                    budget -= e.evaluations;
                    starts.push_back(combined);
                }

                if (nv > 1 && !cfg.joint) {
                    const double lc = loss_of(combined);
                    e.evaluations += 1;
                    e.omega = combined;
                    e.loss = lc;
                    if (!(lc <= e.loss_zero)) {
                        e.omega.setZero();
                        e.loss = e.loss_zero;
                    }
                } else {
                    for (int r = 0; r < cfg.random_starts; ++r)
                        starts.push_back(random_point(lower, upper));
                    BoxSearchOptions o;
                    o.max_evaluations = std::max(budget, static_cast<int>(starts.size()));
                    auto res = minimize_in_box(loss_of, lower, upper, starts, o);
                    e.evaluations += res.evaluations;
                    e.budget_exhausted = e.budget_exhausted || res.budget_exhausted;
                    if (res.value <= e.loss) {
                        e.omega = res.x;
                        e.loss = res.value;
                    }
                }
            }

            for (std::size_t v = 0; v < nv; ++v) {
                prev_state[v] = a_now[v] + e.omega.segment(offset[v], len[v]);
                anchored[v] = true;
            }
            prev_omega = e.omega;
            t_prev = t;
            evaluations += e.evaluations;
            exhausted = exhausted || e.budget_exhausted;
            if (sub == cfg.substeps) {
                e.evaluations = evaluations;
                e.budget_exhausted = exhausted;
                evaluations = 0;
                exhausted = false;
                out.push_back(std::move(e));
            }
        }
    }
    return out;
}

struct Prepared {
    std::vector<ReducedBasis> reduced;
    Mat anchors;
    std::vector<int> modes;
};

Prepared prepare(const PdeModel& model, const Discretization& disc, const SurrogateSet& s, const Mat& theta_obs,
                 const CorrectionConfig& cfg)
{
    cfg.validate(model.params().size());
    if (s.bases.size() != s.variables.size() || s.gps.size() != s.variables.size())
        throw ValidationError("correction: surrogate set is incomplete");
    if (theta_obs.cols() != static_cast<Eigen::Index>(model.params().size()))
        throw ValidationError("correction: theta_obs has the wrong number of columns");
    Prepared p;
    for (std::size_t v = 0; v < s.variables.size(); ++v) {
        if (s.gps[v].size() != static_cast<std::size_t>(s.bases[v].size()))
            throw ValidationError("correction: GP count does not match POD modes for " + s.variables[v]);
        p.reduced.push_back(ReducedBasis::make(s.bases[v], disc));
        p.modes.push_back(s.bases[v].size());
    }
    const auto times = model.time_grid().save_times();
    const Eigen::Index q = theta_obs.cols();
    p.anchors.resize(theta_obs.rows() * static_cast<Eigen::Index>(times.size()), q + 1);
    for (Eigen::Index i = 0; i < theta_obs.rows(); ++i)
        for (std::size_t t = 0; t < times.size(); ++t) {
            const Eigen::Index r = i * static_cast<Eigen::Index>(times.size()) + static_cast<Eigen::Index>(t);
            p.anchors.row(r).head(q) = theta_obs.row(i);
            p.anchors(r, q) = times[t];
        }
    return p;
}

std::vector<CorrectionEntry> flatten(std::vector<std::vector<CorrectionEntry>>& per_law)
{
    std::vector<CorrectionEntry> out;
    for (auto& v : per_law)
        for (auto& e : v)
            out.push_back(std::move(e));
    return out;
}

} // namespace

CorrectionMap optimize_corrections(const PdeModel& model, const Discretization& disc, const SurrogateSet& s,
                                   const Mat& theta_obs, const CorrectionConfig& cfg)
{
    Prepared p = prepare(model, disc, s, theta_obs, cfg);
    const Eigen::Index n = cfg.theta_law.rows();
    std::vector<std::vector<CorrectionEntry>> per_law(static_cast<std::size_t>(n));
    std::exception_ptr failure;
    std::mutex lock;
#pragma omp parallel for schedule(dynamic, 1)
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            per_law[static_cast<std::size_t>(i)] = correct_trajectory(model, disc, s, p.reduced, theta_obs, cfg, i);
        } catch (...) {
            std::lock_guard<std::mutex> guard(lock);
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return CorrectionMap(flatten(per_law), p.anchors, p.modes);
}

CorrectionMap serial::optimize_corrections(const PdeModel& model, const Discretization& disc,
                                           const SurrogateSet& s, const Mat& theta_obs,
                                           const CorrectionConfig& cfg)
{
    Prepared p = prepare(model, disc, s, theta_obs, cfg);
    std::vector<std::vector<CorrectionEntry>> per_law;
    for (Eigen::Index i = 0; i < cfg.theta_law.rows(); ++i)
        per_law.push_back(correct_trajectory(model, disc, s, p.reduced, theta_obs, cfg, i));
    return CorrectionMap(flatten(per_law), p.anchors, p.modes);
}

void attach_corrections(SurrogateSet& s, const CorrectionMap& map)
{
    if (map.modes_per_var().size() != s.variables.size())
        throw ValidationError("attach_corrections: map covers " + std::to_string(map.modes_per_var().size()) +
                              " variables, surrogate set has " + std::to_string(s.variables.size()));
    for (std::size_t v = 0; v < s.variables.size(); ++v)
        if (map.modes_per_var()[v] != static_cast<int>(s.gps[v].size()))
            throw ValidationError("attach_corrections: mode count mismatch for " + s.variables[v]);
    auto shared = std::make_shared<CorrectionMap>(map);
    for (std::size_t v = 0; v < s.variables.size(); ++v)
        for (std::size_t k = 0; k < s.gps[v].size(); ++k)
            s.gps[v][k].attach([shared, v, k](const Vec& in) { return shared->shift(v, static_cast<int>(k), in); });
}

void detach_corrections(SurrogateSet& s)
{
    for (auto& g : s.gps)
        for (auto& gp : g)
            gp.detach();
}

double surrogate_law_loss(const PdeModel& model, const Discretization& disc, const SurrogateSet& s,
                          const std::vector<ReducedBasis>& bases, const Vec& theta, double lambda)
{
    const double tau = model.time_grid().tau;
    double total = 0.0;
    for (double t : model.time_grid().save_times()) {
        std::vector<Vec> now, before;
        for (std::size_t v = 0; v < s.variables.size(); ++v) {
            now.push_back(s.mean(v, input_of(theta, t)));
            before.push_back(s.mean(v, input_of(theta, t - tau)));
        }
        total += law_loss(model, disc, bases, theta, now, before, lambda);
    }
    return total;
}

} // namespace lawgp
