#pragma once

#include "lawgp/common.hpp"

#include <filesystem>
#include <string>

namespace lawgp {

/// Proper orthogonal decomposition of a snapshot matrix U (rows = samples,
/// columns = evaluation points). Modes are the leading right singular
/// vectors of U, i.e. eigenvectors of C = U^T U / (N - 1).
class PodBasis {
public:
    PodBasis() = default;

    /// Mode k as a row of length D.
    const Mat& modes() const { return modes_; }
    /// Every eigenvalue of C, descending (length min(N, D)).
    const Vec& spectrum() const { return spectrum_; }
    const Vec& singular_values() const { return singular_; }
    int size() const { return static_cast<int>(modes_.rows()); }
    Eigen::Index dim() const { return modes_.cols(); }
    bool centered() const { return centered_; }
    const Vec& mean() const { return mean_; }
    /// sum_{k <= K} lambda_k / sum lambda_k
    double energy() const;

    Vec project(const Vec& field) const;
    /// Row i of the result holds the coefficients of row i of `fields`.
    Mat project_rows(const Mat& fields) const;
    Vec reconstruct(const Vec& alpha) const;

    void save(const std::filesystem::path& dir, const std::string& var) const;
    static PodBasis load(const std::filesystem::path& dir, const std::string& var);

private:
    friend PodBasis fit_pod(const Mat& snapshots, int k, bool center);

    Mat modes_;
    Vec spectrum_, singular_;
    Vec mean_;
    bool centered_ = false;
};

/// Throws ValidationError when k is outside [1, min(N, D)] or exceeds the
/// numerical rank of the (centered) snapshot matrix.
PodBasis fit_pod(const Mat& snapshots, int k, bool center = false);

/// Smallest K whose energy fraction reaches `fraction`.
int modes_for_energy(const Vec& spectrum, double fraction);

} // namespace lawgp
