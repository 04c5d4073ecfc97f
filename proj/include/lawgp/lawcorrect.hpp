#pragma once

#include "lawgp/common.hpp"
#include "lawgp/gp.hpp"
#include "lawgp/models.hpp"
#include "lawgp/pod.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace lawgp {

/// POD basis plus one GP per retained mode, for every physical variable.
struct SurrogateSet {
    std::vector<std::string> variables;
    std::vector<PodBasis> bases;
    std::vector<std::vector<GpSurrogate>> gps;

    int total_modes() const;
    /// Predicted coefficient means / standard deviations of one variable.
    Vec mean(std::size_t var, const Vec& input) const;
    Vec stddev(std::size_t var, const Vec& input) const;
    Vec field(std::size_t var, const Vec& input) const;
};

/// Interpolation with r^3 plus a linear polynomial tail over standardized
/// inputs. Several value columns share one factorization.
class PhsInterpolant {
public:
    PhsInterpolant() = default;
    PhsInterpolant(const Mat& centers, const Mat& values);

    Vec evaluate(const Vec& x) const;
    double evaluate(const Vec& x, Eigen::Index column) const;
    Eigen::Index columns() const { return coef_.cols(); }
    const Mat& centers() const { return centers_; }

private:
    Vec features(const Vec& z) const; // kernel values and tail terms
    Mat centers_;                     // raw
    Mat scaled_;                      // standardized
    Vec mean_, scale_;
    std::vector<Eigen::Index> tail_dims_;
    Mat coef_;
};

/// Precomputed E^dagger phi_k so reconstructed fields reach Y without a
/// pseudoinverse solve per evaluation.
struct ReducedBasis {
    Mat psi;     // |Y| x K
    Vec psi_mean;

    static ReducedBasis make(const PodBasis& basis, const Discretization& disc);
    Vec interp(const Vec& alpha) const { return psi_mean + psi * alpha; }
};

/// ||r_interior||^2 + lambda ||r_boundary||^2 summed over variables, for the
/// step that ends at coefficients `now` and starts from `before`.
double law_loss(const PdeModel& model, const Discretization& disc, const std::vector<ReducedBasis>& bases,
                const Vec& theta, const std::vector<Vec>& now, const std::vector<Vec>& before, double lambda);

struct CorrectionConfig {
    Mat theta_law; // L x q
    double c = 3.0;
    double lambda = 1.0;
    int budget = 2000;
    int random_starts = 4;
    bool joint = true;
    int substeps = 4; // marching points per save interval
    std::uint64_t seed = 11;

    void validate(std::size_t num_params) const;
};

struct CorrectionEntry {
    Vec theta;
    double t = 0.0;
    Vec omega;  // concatenated over variables
    Vec bound;  // c * sigma_k
    double loss_zero = 0.0; // same objective at omega = 0
    double loss = 0.0;
    int evaluations = 0; // summed over the marching points of the interval
    bool budget_exhausted = false;
    bool skipped = false; // theta_law coincides with a training parameter
};

/// Raw omega table and the interpolants s_k over (theta, t), anchored to 0
/// at every training parameter.
class CorrectionMap {
public:
    CorrectionMap() = default;
    CorrectionMap(std::vector<CorrectionEntry> entries, const Mat& anchors, std::vector<int> modes_per_var);

    const std::vector<CorrectionEntry>& entries() const { return entries_; }
    const Mat& anchors() const { return anchors_; }
    const std::vector<int>& modes_per_var() const { return modes_; }
    bool any_budget_exhausted() const;

    /// s_k^{(var)}(input)
    double shift(std::size_t var, int k, const Vec& input) const;

    void save(const std::filesystem::path& dir, const std::vector<std::string>& variables) const;
    static CorrectionMap load(const std::filesystem::path& dir, const std::vector<std::string>& variables,
                              std::size_t num_params);

private:
    std::vector<CorrectionEntry> entries_;
    Mat anchors_; // (theta_obs, t) rows
    std::vector<int> modes_;
    std::shared_ptr<PhsInterpolant> interp_;
};

/// Runs the bounded search at every (theta_law, save time) pair and builds
/// the interpolants. OpenMP over theta_law; save times are marched in order
/// because each step's objective depends on the previous correction.
CorrectionMap optimize_corrections(const PdeModel& model, const Discretization& disc, const SurrogateSet& s,
                                   const Mat& theta_obs, const CorrectionConfig& cfg);

namespace serial {
CorrectionMap optimize_corrections(const PdeModel& model, const Discretization& disc, const SurrogateSet& s,
                                   const Mat& theta_obs, const CorrectionConfig& cfg);
} // namespace serial

/// Sets every GP's prior shift to its s_k; throws on mode-count mismatch.
void attach_corrections(SurrogateSet& s, const CorrectionMap& map);
void detach_corrections(SurrogateSet& s);

/// Law loss of the surrogate's (possibly corrected) prediction at theta,
/// summed over all save times.
double surrogate_law_loss(const PdeModel& model, const Discretization& disc, const SurrogateSet& s,
                          const std::vector<ReducedBasis>& bases, const Vec& theta, double lambda);

} // namespace lawgp
