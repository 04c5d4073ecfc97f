#include "lawgp/gp.hpp"

#include "lawgp/io.hpp"
#include "lawgp/optimize.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>

namespace lawgp {

double Kernel::operator()(const Vec& a, const Vec& b) const
{
    const double r2 = ((a - b).array() / lengths.array()).square().sum();
    return gamma * gamma * std::exp(-0.5 * r2);
}

Mat Kernel::gram(const Mat& x) const
{
    const Eigen::Index n = x.rows();
    Mat k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = gamma * gamma + jitter;
        for (Eigen::Index j = 0; j < i; ++j)
            k(i, j) = k(j, i) = (*this)(x.row(i).transpose(), x.row(j).transpose());
    }
    return k;
}

namespace {

double lml_from(const Eigen::LLT<Mat>& llt, const Vec& y)
{
    const Vec w = llt.solve(y);
    const Mat& l = llt.matrixLLT();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    return -0.5 * y.dot(w) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

bool factor(const Mat& k, Eigen::LLT<Mat>& llt)
{
    llt.compute(k);
    return llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0;
}

/// Cholesky with jitter 1e-8, 1e-7, ..., 1e-4 on the diagonal; returns the
/// jitter that worked or nullopt.
std::optional<double> factor_escalating(Kernel k, const Mat& x, Eigen::LLT<Mat>& llt)
{
    for (double jit = 1e-8; jit <= 1.0001e-4; jit *= 10.0) {
        k.jitter = jit;
        if (factor(k.gram(x), llt))
            return jit;
    }
    return std::nullopt;
}

Kernel kernel_from(const Vec& log_params, bool isotropic, Eigen::Index dim)
{
    Kernel k;
    const Eigen::Index nl = log_params.size() - 1;
    k.lengths = isotropic ? Vec::Constant(dim, std::exp(log_params[0])) : Vec(log_params.head(nl).array().exp());
    k.gamma = std::exp(log_params[nl]);
    return k;
}

} // namespace

double log_marginal_likelihood(const Kernel& k, const Mat& x, const Vec& y)
{
    Eigen::LLT<Mat> llt;
    if (!factor(k.gram(x), llt))
        return -std::numeric_limits<double>::infinity();
    return lml_from(llt, y);
}

void GpSurrogate::standardize(const Mat& inputs, const Vec& targets)
{
    if (inputs.rows() != targets.size())
        throw ValidationError("fit_gp: " + std::to_string(inputs.rows()) + " inputs vs " +
                              std::to_string(targets.size()) + " targets");
    if (inputs.rows() < 2)
        throw ValidationError("fit_gp: need at least 2 training points");
    if (!inputs.allFinite() || !targets.allFinite())
        throw ValidationError("fit_gp: non-finite training data");
    inputs_ = inputs;
    targets_ = targets;
    const double n = static_cast<double>(inputs.rows());
    x_mean_ = inputs.colwise().mean().transpose();
    x_std_ = ((inputs.rowwise() - x_mean_.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
    for (Eigen::Index i = 0; i < x_std_.size(); ++i)
        if (!(x_std_[i] > 0.0))
            x_std_[i] = 1.0;
    y_mean_ = targets.mean();
    y_std_ = std::sqrt((targets.array() - y_mean_).square().sum() / n);
    if (!(y_std_ > 1e-300))
        y_std_ = 1.0;
    xs_ = (inputs.rowwise() - x_mean_.transpose()).array().rowwise() / x_std_.transpose().array();
    ys_ = (targets.array() - y_mean_) / y_std_;
}

void GpSurrogate::factorize()
{
    auto jit = factor_escalating(kernel_, xs_, chol_);
    if (!jit)
        throw RuntimeError("fit_gp: Cholesky failed for every jitter in [1e-8, 1e-4]");
    kernel_.jitter = *jit;
    weights_ = chol_.solve(ys_);
    lml_ = lml_from(chol_, ys_);
}

GpSurrogate GpSurrogate::fit(const Mat& inputs, const Vec& targets, const GpOptions& opt)
{
    GpSurrogate gp;
    gp.standardize(inputs, targets);
    const Eigen::Index dim = inputs.cols();
    const Eigen::Index nl = opt.isotropic ? 1 : dim;
    Vec lower(nl + 1), upper(nl + 1);
    lower.head(nl).setConstant(std::log(opt.min_length));
    upper.head(nl).setConstant(std::log(opt.max_length));
    lower[nl] = std::log(opt.min_gamma);
    upper[nl] = std::log(opt.max_gamma);

    auto objective = [&](const Vec& lp) {
        Kernel k = kernel_from(lp, opt.isotropic, dim);
        Eigen::LLT<Mat> llt;
        if (!factor_escalating(k, gp.xs_, llt))
            return std::numeric_limits<double>::infinity();
        return -lml_from(llt, gp.ys_);
    };

    std::mt19937_64 rng(opt.seed);
    std::vector<Vec> starts;
    starts.push_back(Vec::Zero(nl + 1));
    for (int s = 1; s < std::max(1, opt.restarts); ++s) {
        Vec p(nl + 1);
        for (Eigen::Index i = 0; i <= nl; ++i)
            p[i] = std::uniform_real_distribution<double>(lower[i], upper[i])(rng);
        starts.push_back(p);
    }

    BoxSearchOptions so;
    so.max_evaluations = opt.evaluations_per_start;
    Vec best;
    double best_value = std::numeric_limits<double>::infinity();
    for (const Vec& s : starts) {
        auto r = minimize_in_box(objective, lower, upper, {s}, so);
        gp.starts_.push_back({s, r.x, -r.value});
        if (r.value < best_value) {
            best_value = r.value;
            best = r.x;
        }
    }
    if (!std::isfinite(best_value))
        throw RuntimeError("fit_gp: Cholesky failed for every jitter in [1e-8, 1e-4] at every start");
    gp.kernel_ = kernel_from(best, opt.isotropic, dim);
    gp.factorize();
    return gp;
}

GpSurrogate GpSurrogate::with_kernel(const Mat& inputs, const Vec& targets, const Kernel& kernel)
{
    GpSurrogate gp;
    gp.standardize(inputs, targets);
    if (kernel.lengths.size() != inputs.cols())
        throw ValidationError("GP kernel has " + std::to_string(kernel.lengths.size()) + " length-scales for " +
                              std::to_string(inputs.cols()) + " inputs");
    gp.kernel_ = kernel;
    if (!factor(gp.kernel_.gram(gp.xs_), gp.chol_))
        gp.factorize();
    gp.weights_ = gp.chol_.solve(gp.ys_);
    gp.lml_ = lml_from(gp.chol_, gp.ys_);
    return gp;
}

Vec GpSurrogate::scaled(const Vec& input) const
{
    if (input.size() != x_mean_.size())
        throw ValidationError("predict: input dimension " + std::to_string(input.size()) + " != " +
                              std::to_string(x_mean_.size()));
    return (input - x_mean_).cwiseQuotient(x_std_);
}

Prediction GpSurrogate::predict_uncorrected(const Vec& input) const
{
    const Vec z = scaled(input);
    Vec ks(xs_.rows());
    for (Eigen::Index i = 0; i < xs_.rows(); ++i)
        ks[i] = kernel_(z, xs_.row(i).transpose());
    const double mean = ks.dot(weights_);
    const double var = kernel_.gamma * kernel_.gamma - ks.dot(chol_.solve(ks));
    return {y_mean_ + y_std_ * mean, std::max(var, 0.0) * y_std_ * y_std_};
}

Prediction GpSurrogate::predict(const Vec& input) const
{
    Prediction p = predict_uncorrected(input);
    if (shift_)
        p.mean += shift_(input);
    return p;
}

void GpSurrogate::save(const std::filesystem::path& path) const
{
    auto row = [](const std::string& tag, const Vec& v) {
        std::vector<std::string> r{tag};
        for (Eigen::Index i = 0; i < v.size(); ++i)
            r.push_back(io::format_double(v[i]));
        return r;
    };
    std::vector<std::vector<std::string>> rows;
    rows.push_back(row("input_mean", x_mean_));
    rows.push_back(row("input_scale", x_std_));
    rows.push_back(row("target_stats", Eigen::Vector2d(y_mean_, y_std_)));
    rows.push_back(row("lengths", kernel_.lengths));
    rows.push_back(row("gamma", Vec::Constant(1, kernel_.gamma)));
    rows.push_back(row("jitter", Vec::Constant(1, kernel_.jitter)));
    rows.push_back(row("lml", Vec::Constant(1, lml_)));
    for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
        Vec v(inputs_.cols() + 1);
        v << inputs_.row(i).transpose(), targets_[i];
        rows.push_back(row("sample", v));
    }
    for (const auto& s : starts_) {
        Vec v(s.log_params.size() + s.optimum.size() + 1);
        v << s.log_params, s.optimum, s.lml;
        rows.push_back(row("start", v));
    }
    io::write_csv(path, {"section", "values"}, rows);
}

GpSurrogate GpSurrogate::load(const std::filesystem::path& path)
{
    auto t = io::read_csv(path);
    auto values = [&](std::size_t r) {
        Vec v(static_cast<Eigen::Index>(t.rows[r].size() - 1));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v[i] = t.number(r, static_cast<std::size_t>(i) + 1);
        return v;
    };
    Kernel k;
    std::vector<Vec> samples, starts;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string& tag = t.rows[r].at(0);
        if (tag == "lengths")
            k.lengths = values(r);
        else if (tag == "gamma")
            k.gamma = values(r)[0];
        else if (tag == "jitter")
            k.jitter = values(r)[0];
        else if (tag == "sample")
            samples.push_back(values(r));
        else if (tag == "start")
            starts.push_back(values(r));
    }
    if (samples.empty() || k.lengths.size() == 0)
        throw RuntimeError("malformed GP file " + path.string());
    const Eigen::Index d = samples[0].size() - 1;
    Mat x(static_cast<Eigen::Index>(samples.size()), d);
    Vec y(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = samples[i].head(d).transpose();
        y[static_cast<Eigen::Index>(i)] = samples[i][d];
    }
    GpSurrogate gp = with_kernel(x, y, k);
    for (const Vec& s : starts) {
        const Eigen::Index half = (s.size() - 1) / 2;
        gp.starts_.push_back({s.head(half), s.segment(half, half), s[s.size() - 1]});
    }
    return gp;
}

std::vector<GpSurrogate> fit_surrogates(const Mat& inputs, const Mat& targets, const GpOptions& options)
{
    std::vector<GpSurrogate> out(static_cast<std::size_t>(targets.cols()));
    std::optional<std::string> failure;
    std::mutex lock;
#pragma omp parallel for schedule(dynamic, 1)
    for (Eigen::Index k = 0; k < targets.cols(); ++k) {
        try {
            GpOptions o = options;
            o.seed = options.seed + static_cast<std::uint64_t>(k);
            out[static_cast<std::size_t>(k)] = GpSurrogate::fit(inputs, targets.col(k), o);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> guard(lock);
            if (!failure)
                failure = "GP for coefficient " + std::to_string(k) + ": " + e.what();
        }
    }
    if (failure)
        throw RuntimeError(*failure);
    return out;
}

Mat predict_means(const std::vector<GpSurrogate>& gps, const Mat& inputs)
{
    Mat out(inputs.rows(), static_cast<Eigen::Index>(gps.size()));
    for (Eigen::Index r = 0; r < inputs.rows(); ++r)
        for (std::size_t k = 0; k < gps.size(); ++k)
            out(r, static_cast<Eigen::Index>(k)) = gps[k].predict(inputs.row(r).transpose()).mean;
    return out;
}

} // namespace lawgp
