#include "lawgp/bayes.hpp"

#include "lawgp/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace lawgp {

void InverseProblem::validate() const
{
    if (!(noise_variance > 0.0))
        throw ValidationError("inverse problem: noise variance must be positive");
    if (beta1 && !(*beta1 >= 0.0))
        throw ValidationError("inverse problem: beta1 must be nonnegative");
    if (!(beta2 >= 0.0))
        throw ValidationError("inverse problem: beta2 must be nonnegative");
    if (lower.size() == 0 || lower.size() != upper.size())
        throw ValidationError("inverse problem: prior bounds missing or mismatched");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (!(lower[i] < upper[i]))
            throw ValidationError("inverse problem: empty prior interval for parameter " + std::to_string(i));
    if (!forward)
        throw ValidationError("inverse problem: no forward map");
    if (observations.size() == 0)
        throw ValidationError("inverse problem: no observations");
    if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != observations.size())
        throw ValidationError("inverse problem: mask has " + std::to_string(mask.size()) + " entries for " +
                              std::to_string(observations.size()) + " observations");
}

double InverseProblem::misfit(const Vec& theta) const
{
    const Vec f = forward(theta);
    if (mask.empty()) {
        if (f.size() != observations.size())
            throw ValidationError("inverse problem: forward map returned " + std::to_string(f.size()) +
                                  " values for " + std::to_string(observations.size()) + " observations");
        return (observations - f).squaredNorm();
    }
    double s = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] < 0 || mask[i] >= f.size())
            throw ValidationError("inverse problem: mask entry out of range");
        const double r = observations[static_cast<Eigen::Index>(i)] - f[mask[i]];
        s += r * r;
    }
    return s;
}

double log_posterior(const InverseProblem& problem, const Vec& theta)
{
    if (theta.size() != problem.lower.size())
        throw ValidationError("log_posterior: theta has the wrong length");
    if (!theta.allFinite())
        throw ValidationError("log_posterior: theta is not finite");
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        if (theta[i] < problem.lower[i] || theta[i] > problem.upper[i])
            return -std::numeric_limits<double>::infinity();
    const double log_prior = -(problem.upper - problem.lower).array().log().sum();
    double v = log_prior - problem.data_weight() * problem.misfit(theta);
    if (problem.law_loss && problem.beta2 > 0.0)
        v -= problem.beta2 * problem.law_loss(theta);
    return v;
}

PosteriorChain run_mh(const LogDensity& log_density, const Vec& lower, const Vec& upper, const McmcOptions& opt)
{
    const Eigen::Index q = lower.size();
    if (opt.iterations < 1)
        throw ValidationError("run_mh: iterations must be positive");
    if (!(opt.burn_in_fraction >= 0.0 && opt.burn_in_fraction < 1.0))
        throw ValidationError("run_mh: burn-in fraction must lie in [0, 1)");
    if (q == 0 || upper.size() != q)
        throw ValidationError("run_mh: bounds missing or mismatched");

    Vec x = opt.start.size() ? opt.start : Vec(0.5 * (lower + upper));
    Vec scale = opt.initial_scale.size() ? opt.initial_scale : Vec(0.1 * (upper - lower));
    if (x.size() != q || scale.size() != q)
        throw ValidationError("run_mh: start or scale has the wrong length");
    if ((scale.array() <= 0.0).any())
        throw ValidationError("run_mh: proposal scale must be positive");
    double lp = log_density(x);
    if (!std::isfinite(lp))
        throw ValidationError("run_mh: log density is not finite at the start point");

    PosteriorChain c;
    c.names = opt.names;
    c.burn_in = static_cast<int>(std::floor(opt.burn_in_fraction * opt.iterations));
    c.samples.resize(opt.iterations, q);
    c.log_posterior.resize(opt.iterations);

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    int window = 0, window_accepted = 0;
    for (int it = 0; it < opt.iterations; ++it) {
        Vec y(q);
        for (Eigen::Index i = 0; i < q; ++i)
            y[i] = x[i] + scale[i] * normal(rng);
        const double u = uniform(rng);
        const bool inside = ((y - lower).array() >= 0.0).all() && ((upper - y).array() >= 0.0).all();
        bool accept = false;
        if (inside) {
            const double ly = log_density(y);
            // symmetric proposal: the Hastings ratio is the density ratio
            if (std::isfinite(ly) && std::log(u) < ly - lp) {
                x = y;
                lp = ly;
                accept = true;
            }
        }
        c.samples.row(it) = x.transpose();
        c.log_posterior[it] = lp;

        if (it < c.burn_in) {
            ++window;
            window_accepted += accept;
            if (opt.adapt && window == opt.adapt_interval) {
                const double rate = static_cast<double>(window_accepted) / window;
                if (rate < opt.target_low)
                    scale *= 0.7;
                else if (rate > opt.target_high)
                    scale *= 1.3;
                window = window_accepted = 0;
            }
        } else if (accept) {
            ++c.accepted;
        }
    }
    c.proposal_scale = scale;

    const int n = opt.iterations - c.burn_in;
    c.acceptance_rate = static_cast<double>(c.accepted) / n;
    const Mat kept = c.samples.bottomRows(n);
    c.mean = kept.colwise().mean().transpose();
    c.stddev = n > 1 ? Vec(((kept.rowwise() - c.mean.transpose()).array().square().colwise().sum() / (n - 1))
                               .sqrt()
                               .transpose())
                     : Vec(Vec::Zero(q));
    return c;
}

PosteriorChain run_mh(const InverseProblem& problem, const McmcOptions& options)
{
    problem.validate();
    return run_mh([&problem](const Vec& t) { return log_posterior(problem, t); }, problem.lower, problem.upper,
                  options);
}

void PosteriorChain::save(const std::filesystem::path& dir) const
{
    const Eigen::Index q = samples.cols();
    auto name = [&](Eigen::Index i) {
        return static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                          : "theta" + std::to_string(i);
    };
    std::vector<std::string> header{"iteration"};
    for (Eigen::Index i = 0; i < q; ++i)
        header.push_back(name(i));
    header.push_back("log_posterior");
    header.push_back("burn_in");
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index it = 0; it < samples.rows(); ++it) {
        std::vector<std::string> r{std::to_string(it)};
        for (Eigen::Index i = 0; i < q; ++i)
            r.push_back(io::format_double(samples(it, i)));
        r.push_back(io::format_double(log_posterior[it]));
        r.push_back(it < burn_in ? "1" : "0");
        rows.push_back(std::move(r));
    }
    io::write_csv(dir / "chain.csv", header, rows);

    std::vector<std::vector<std::string>> summary;
    for (Eigen::Index i = 0; i < q; ++i)
        summary.push_back({name(i), io::format_double(mean[i]), io::format_double(stddev[i]),
                           io::format_double(proposal_scale[i]), io::format_double(acceptance_rate),
                           std::to_string(accepted), std::to_string(samples.rows() - burn_in),
                           std::to_string(burn_in)});
    io::write_csv(dir / "posterior_summary.csv",
                  {"parameter", "mean", "std", "proposal_scale", "acceptance_rate", "accepted", "samples", "burn_in"},
                  summary);
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf)
{
    if (samples.empty())
        throw ValidationError("ks_statistic: no samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

} // namespace lawgp
