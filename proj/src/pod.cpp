#include "lawgp/pod.hpp"

#include "lawgp/io.hpp"

#include <Eigen/SVD>

namespace lawgp {

PodBasis fit_pod(const Mat& snapshots, int k, bool center)
{
    const Eigen::Index n = snapshots.rows(), d = snapshots.cols();
    if (n == 0 || d == 0)
        throw ValidationError("fit_pod: empty snapshot matrix");
    if (!snapshots.allFinite())
        throw ValidationError("fit_pod: snapshot matrix has non-finite entries");
    if (k < 1 || k > std::min(n, d))
        throw ValidationError("fit_pod: K = " + std::to_string(k) + " outside [1, " +
                              std::to_string(std::min(n, d)) + "]");

    PodBasis b;
    b.centered_ = center;
    b.mean_ = center ? Vec(snapshots.colwise().mean().transpose()) : Vec::Zero(d);
    Mat u = snapshots;
    if (center)
        u.rowwise() -= b.mean_.transpose();

    Eigen::BDCSVD<Mat> svd(u, Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();
    const double tol = static_cast<double>(std::max(n, d)) * std::numeric_limits<double>::epsilon() *
                       (s.size() ? s[0] : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        rank += s[i] > tol ? 1 : 0;
    if (k > rank)
        throw ValidationError("fit_pod: K = " + std::to_string(k) + " exceeds the numerical rank " +
                              std::to_string(rank) + " of the snapshot matrix");

    b.singular_ = s;
    b.spectrum_ = s.array().square() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    b.modes_ = svd.matrixV().leftCols(k).transpose();
    for (int i = 0; i < k; ++i) {
        Eigen::Index arg = 0;
        b.modes_.row(i).cwiseAbs().maxCoeff(&arg);
        if (b.modes_(i, arg) < 0.0)
            b.modes_.row(i) *= -1.0;
    }
    return b;
}

double PodBasis::energy() const
{
    const double total = spectrum_.sum();
    return total > 0.0 ? spectrum_.head(size()).sum() / total : 1.0;
}

Vec PodBasis::project(const Vec& field) const
{
    if (field.size() != dim())
        throw ValidationError("project: field length " + std::to_string(field.size()) + " != " +
                              std::to_string(dim()));
    return modes_ * (centered_ ? Vec(field - mean_) : field);
}

Mat PodBasis::project_rows(const Mat& fields) const
{
    if (fields.cols() != dim())
        throw ValidationError("project: field length mismatch");
    if (!centered_)
        return fields * modes_.transpose();
    Mat shifted = fields;
    shifted.rowwise() -= mean_.transpose();
    return shifted * modes_.transpose();
}

Vec PodBasis::reconstruct(const Vec& alpha) const
{
    if (alpha.size() != size())
        throw ValidationError("reconstruct: expected " + std::to_string(size()) + " coefficients, got " +
                              std::to_string(alpha.size()));
    Vec f = modes_.transpose() * alpha;
    if (centered_)
        f += mean_;
    return f;
}

int modes_for_energy(const Vec& spectrum, double fraction)
{
    const double total = spectrum.sum();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < spectrum.size(); ++k) {
        acc += spectrum[k];
        if (acc >= fraction * total)
            return static_cast<int>(k + 1);
    }
    return static_cast<int>(spectrum.size());
}

void PodBasis::save(const std::filesystem::path& dir, const std::string& var) const
{
    std::vector<std::string> header{"k"};
    for (Eigen::Index j = 0; j < dim(); ++j)
        header.push_back("x" + std::to_string(j));
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < size(); ++k) {
        std::vector<double> row{static_cast<double>(k)};
        for (Eigen::Index j = 0; j < dim(); ++j)
            row.push_back(modes_(k, j));
        rows.push_back(std::move(row));
    }
    if (centered_) {
        std::vector<double> row{-1.0};
        row.insert(row.end(), mean_.data(), mean_.data() + dim());
        rows.push_back(std::move(row));
    }
    io::write_csv(dir / (var + ".pod.csv"), header, rows);

    std::vector<std::vector<double>> spec;
    for (Eigen::Index k = 0; k < spectrum_.size(); ++k)
        spec.push_back({static_cast<double>(k), singular_[k], spectrum_[k]});
    io::write_csv(dir / (var + ".spectrum.csv"), {"k", "singular_value", "eigenvalue"}, spec);
}

PodBasis PodBasis::load(const std::filesystem::path& dir, const std::string& var)
{
    auto t = io::read_csv(dir / (var + ".pod.csv"));
    auto sp = io::read_csv(dir / (var + ".spectrum.csv"));
    if (t.header.size() < 2 || t.rows.empty())
        throw RuntimeError("malformed POD file for " + var);
    PodBasis b;
    const auto d = static_cast<Eigen::Index>(t.header.size() - 1);
    int k = 0;
    for (const auto& row : t.rows)
        k += row.at(0) == "-1" ? 0 : 1;
    b.modes_.resize(k, d);
    b.mean_ = Vec::Zero(d);
    int r = 0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const bool mean_row = t.rows[i].at(0) == "-1";
        for (Eigen::Index j = 0; j < d; ++j) {
            const double v = t.number(i, static_cast<std::size_t>(j) + 1);
            if (mean_row)
                b.mean_[j] = v;
            else
                b.modes_(r, j) = v;
        }
        if (mean_row)
            b.centered_ = true;
        else
            ++r;
    }
    b.singular_.resize(static_cast<Eigen::Index>(sp.rows.size()));
    b.spectrum_.resize(static_cast<Eigen::Index>(sp.rows.size()));
    for (std::size_t i = 0; i < sp.rows.size(); ++i) {
        b.singular_[static_cast<Eigen::Index>(i)] = sp.number(i, 1);
        b.spectrum_[static_cast<Eigen::Index>(i)] = sp.number(i, 2);
    }
    return b;
}

} // namespace lawgp
