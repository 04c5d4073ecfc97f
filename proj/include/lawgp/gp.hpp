#pragma once

#include "lawgp/common.hpp"

#include <Eigen/Cholesky>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

namespace lawgp {

/// Squared-exponential kernel on standardized inputs:
///   k(a, b) = gamma^2 exp(-1/2 sum_i ((a_i - b_i) / l_i)^2)
struct Kernel {
    Vec lengths;
    double gamma = 1.0;
    double jitter = 1e-8;

    double operator()(const Vec& a, const Vec& b) const;
    Mat gram(const Mat& x) const; // rows are inputs, jitter on the diagonal
};

/// -1/2 y^T K^{-1} y - 1/2 log det K - n/2 log 2 pi with K = gram(x).
/// Returns -inf when K is not numerically positive definite.
double log_marginal_likelihood(const Kernel& k, const Mat& x, const Vec& y);

struct GpOptions {
    int restarts = 8;
    double min_length = 1e-2, max_length = 1e2;
    double min_gamma = 1e-3, max_gamma = 1e3;
    bool isotropic = false;
    int evaluations_per_start = 400;
    std::uint64_t seed = 7;
};

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

/// Additive prior-mean shift s(input) in original target units.
using PriorShift = std::function<double(const Vec&)>;

/// Noise-free GP regression of one scalar target. Inputs and targets are
/// standardized per dimension; the prior mean is zero in standardized
/// space unless a shift is attached, in which case the prediction mean is
/// shifted by s(input) and the variance is unchanged.
class GpSurrogate {
public:
    struct Start {
        Vec log_params; // log lengths..., log gamma
        Vec optimum;
        double lml = 0.0;
    };

    GpSurrogate() = default;

    static GpSurrogate fit(const Mat& inputs, const Vec& targets, const GpOptions& options = {});
    /// Rebuild from stored hyperparameters without optimizing.
    static GpSurrogate with_kernel(const Mat& inputs, const Vec& targets, const Kernel& kernel);

    Prediction predict(const Vec& input) const;
    Prediction predict_uncorrected(const Vec& input) const;

    void attach(PriorShift shift) { shift_ = std::move(shift); }
    void detach() { shift_ = nullptr; }
    bool corrected() const { return static_cast<bool>(shift_); }

    const Kernel& kernel() const { return kernel_; }
    double lml() const { return lml_; }
    Eigen::Index input_dim() const { return x_mean_.size(); }
    const Mat& inputs() const { return inputs_; }
    const Vec& targets() const { return targets_; }
    const std::vector<Start>& starts() const { return starts_; }
    const Vec& input_mean() const { return x_mean_; }
    const Vec& input_scale() const { return x_std_; }
    double target_mean() const { return y_mean_; }
    double target_scale() const { return y_std_; }

    void save(const std::filesystem::path& path) const;
    static GpSurrogate load(const std::filesystem::path& path);

private:
    void standardize(const Mat& inputs, const Vec& targets);
    void factorize(); // escalates jitter 1e-8 -> 1e-4
    Vec scaled(const Vec& input) const;

    Mat inputs_;  // raw
    Vec targets_; // raw
    Vec x_mean_, x_std_;
    double y_mean_ = 0.0, y_std_ = 1.0;
    Mat xs_; // standardized
    Vec ys_;
    Kernel kernel_;
    Eigen::LLT<Mat> chol_;
    Vec weights_; // K^{-1} ys
    double lml_ = 0.0;
    std::vector<Start> starts_;
    PriorShift shift_;
};

/// One GP per column of `targets` (OpenMP over columns). Column k uses
/// seed options.seed + k.
std::vector<GpSurrogate> fit_surrogates(const Mat& inputs, const Mat& targets, const GpOptions& options = {});

/// Mean coefficient vectors at each input row, shape rows x K.
Mat predict_means(const std::vector<GpSurrogate>& gps, const Mat& inputs);

} // namespace lawgp
