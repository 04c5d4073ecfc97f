#pragma once

#include "lawgp/bayes.hpp"
#include "lawgp/common.hpp"
#include "lawgp/gp.hpp"
#include "lawgp/lawcorrect.hpp"
#include "lawgp/models.hpp"
#include "lawgp/pod.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lawgp {

/// A parameter sample: a tensor grid (cell-centered or including the box
/// bounds), uniform random draws, or an explicit list.
struct SampleSpec {
    enum class Layout { Centered, Inclusive, Random, Points };
    Layout layout = Layout::Centered;
    int n = 1;  // per dimension for grids, total for random
    Mat points; // Layout::Points

    Mat realize(const std::vector<ParamSpec>& params, std::uint64_t seed) const;
};

struct CorrectionSet {
    std::string label; // "nlaw<L>"
    SampleSpec law;
};

struct BayesConfig {
    double noise_variance = 0.1;
    std::optional<double> beta1;
    double beta2 = 1.0;
    int iterations = 20000;
    double burn_in = 0.2;
    int obs_time = -1;      // save index, negative counts from the end
    std::string correction; // label of the set to attach; empty = last
    double lambda = 1.0;
    bool law_term = true;
};

struct RunConfig {
    std::string experiment;
    std::filesystem::path output;
    std::uint64_t seed = 1;

    std::string model_kind; // allen_cahn | kdv | flooding
    AllenCahnOptions allen_cahn;
    KdvOptions kdv;
    FloodingOptions flooding;

    NodeOptions nodes;
    PhsConfig phs;
    SampleSpec train, test;
    std::vector<int> pod_modes; // per variable
    bool pod_center = false;
    GpOptions gp;
    CorrectionConfig correction; // theta_law filled per set
    std::vector<CorrectionSet> correction_sets;
    BayesConfig bayes;

    std::map<std::string, std::string> sections; // canonical text, for stage keys
    std::string text;                            // the parsed document

    /// Throws ValidationError on any missing section or key before compute.
    static RunConfig parse(const std::string& text, const std::filesystem::path& base = {});
    static RunConfig load(const std::filesystem::path& path);
    std::unique_ptr<PdeModel> make_model() const;
    /// Replaces the master seed and every seed derived from it.
    void reseed(std::uint64_t seed);
};

struct ErrorRow {
    std::string method; // GP | LC
    std::string label;  // correction set for LC rows
    std::string variable; // or "combined"
    Vec per_time;
    double aggregate = 0.0;
};

/// Relative l2 errors of the test-set mean field against the full-order
/// mean, per save time and aggregated over time.
struct ErrorReport {
    std::vector<double> times;
    Mat test_params;
    std::vector<ErrorRow> rows;

    static const char* definition();
    const ErrorRow& row(const std::string& method, const std::string& label = "",
                        const std::string& variable = "combined") const;
    void save(const std::filesystem::path& dir) const; // error_report.csv, report.txt, test_parameters.csv
};

/// Sparse or full-field observations of the solution at one save time.
struct Observations {
    std::vector<std::string> variable;
    std::vector<Eigen::Index> index; // node on X
    Vec value;

    void save(const std::filesystem::path& path) const;
    static Observations load(const std::filesystem::path& path);
};

struct PipelineOptions {
    bool recompute_stale = true; // otherwise a hash mismatch is an error
    std::ostream* log = nullptr;
};

/// Stage runner over one run directory. Every stage persists its artifacts,
/// records their hashes in manifest.csv keyed by the config sections it
/// depends on, and is skipped on rerun when key and hashes still match.
class Pipeline {
public:
    explicit Pipeline(RunConfig config, PipelineOptions options = {});
    ~Pipeline();

    const RunConfig& config() const { return cfg_; }
    const std::filesystem::path& dir() const { return cfg_.output; }
    const PdeModel& model() const { return *model_; }

    const NodeSet& nodes();
    const Discretization& discretization();
    const SnapshotSet& training();
    const SnapshotSet& testing();
    const std::vector<PodBasis>& pod();
    const SurrogateSet& surrogate(); // uncorrected
    const std::vector<CorrectionMap>& corrections();
    ErrorReport report();
    ErrorReport run();

    SurrogateSet corrected_surrogate(const std::string& label = "");
    std::size_t correction_index(const std::string& label) const;

    /// Predicted fields on X at (theta, t) for every variable.
    std::vector<Vec> predict(const Vec& theta, double t, const std::string& label = "", bool corrected = true);

    Observations synthesize_observations(const Vec& theta, std::optional<std::uint64_t> seed = {});
    InverseProblem inverse_problem(const Observations& obs);
    PosteriorChain estimate(const Observations& obs, std::optional<std::uint64_t> seed = {});

    /// Stage names in execution order.
    static const std::vector<std::string>& stages();

private:
    struct Manifest;
    bool fresh(const std::string& stage);
    void record(const std::string& stage, const std::vector<std::filesystem::path>& artifacts);
    void note(const std::string& msg) const;
    double obs_time() const;

    RunConfig cfg_;
    PipelineOptions opt_;
    std::unique_ptr<PdeModel> model_;
    std::map<std::string, std::string> keys_;
    std::unique_ptr<Manifest> manifest_;

    std::shared_ptr<NodeSet> nodes_;
    std::optional<Discretization> disc_;
    std::optional<SnapshotSet> train_, test_;
    std::optional<std::vector<PodBasis>> pod_;
    std::optional<SurrogateSet> surrogate_;
    std::optional<std::vector<CorrectionMap>> maps_;
};

/// Report of a completed run directory (uses its stored config.toml).
/// Throws RuntimeError listing missing artifacts for an incomplete run.
ErrorReport make_report(const std::filesystem::path& run_dir);

/// Checks |omega_k| <= c sigma_k + 1e-12 and loss <= loss_zero on every
/// persisted entry; returns the violations (empty when all hold).
std::vector<std::string> check_correction_invariants(const CorrectionMap& map, double slack = 1e-12);

} // namespace lawgp
