#pragma once

#include "lawgp/common.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lawgp {

using LogDensity = std::function<double(const Vec&)>;

/// Noisy observations of a surrogate forward map plus a law-loss penalty:
///   log pi = -beta1 ||y - F(theta)||^2 - beta2 L(theta) + log prior,
/// with a uniform prior on the box [lower, upper].
struct InverseProblem {
    Vec observations;
    std::vector<Eigen::Index> mask; // entries of F(theta) that are observed; empty = all
    double noise_variance = 0.1;
    std::optional<double> beta1;    // defaults to 1 / (2 noise_variance)
    double beta2 = 1.0;
    Vec lower, upper;
    std::function<Vec(const Vec&)> forward;
    std::function<double(const Vec&)> law_loss; // optional

    void validate() const;
    double data_weight() const { return beta1 ? *beta1 : 0.5 / noise_variance; }
    double misfit(const Vec& theta) const; // ||y - F(theta)||^2 over the mask
};

double log_posterior(const InverseProblem& problem, const Vec& theta);

struct McmcOptions {
    int iterations = 20000;
    double burn_in_fraction = 0.2;
    Vec start;         // defaults to the box center
    Vec initial_scale; // defaults to 0.1 * box width
    bool adapt = true; // tune the scale during burn-in only
    int adapt_interval = 100;
    double target_low = 0.25, target_high = 0.40;
    std::uint64_t seed = 1;
    std::vector<std::string> names;
};

struct PosteriorChain {
    Mat samples;       // iterations x q, burn-in included
    Vec log_posterior; // per iteration
    Vec proposal_scale;
    int burn_in = 0;
    long accepted = 0; // after burn-in
    double acceptance_rate = 0.0;
    Vec mean, stddev;  // after burn-in
    std::vector<std::string> names;

    void save(const std::filesystem::path& dir) const; // chain.csv, posterior_summary.csv
};

/// Gaussian random-walk Metropolis-Hastings on a box. Proposals leaving the
/// box are rejected.
PosteriorChain run_mh(const LogDensity& log_density, const Vec& lower, const Vec& upper, const McmcOptions& options);
PosteriorChain run_mh(const InverseProblem& problem, const McmcOptions& options);

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

} // namespace lawgp
