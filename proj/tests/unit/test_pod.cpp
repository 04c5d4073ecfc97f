#include <doctest.h>

#include "lawgp/pod.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace lawgp;

namespace {

Mat smooth_family(const Vec& thetas, int d)
{
    Mat u(thetas.size(), d);
    for (Eigen::Index i = 0; i < thetas.size(); ++i)
        for (int j = 0; j < d; ++j) {
            const double x = -1.0 + 2.0 * j / (d - 1);
            u(i, j) = std::exp(-4.0 * (x - thetas[i]) * (x - thetas[i])) + 0.3 * thetas[i] * x;
        }
    return u;
}

} // namespace

TEST_SUITE("pod")
{
    TEST_CASE("spectrum of the fixed 3x4 matrix matches a dense eigen-decomposition")
    {
        Mat u(3, 4);
        u << 1, 2, 0, -1,
             3, -1, 4, 2,
             0, 5, -2, 1;
        const auto b = fit_pod(u, 2);
        const Mat c = u.transpose() * u / 2.0;
        Eigen::SelfAdjointEigenSolver<Mat> es(c);
        Vec ev = es.eigenvalues().reverse(); // descending
        REQUIRE(b.spectrum().size() == 3);
        for (Eigen::Index i = 0; i < 3; ++i)
            CHECK(std::abs(b.spectrum()[i] - ev[i]) < 1e-10);
        CHECK(std::abs(ev[3]) < 1e-10);
        // leading modes are eigenvectors of C up to sign
        for (int k = 0; k < 2; ++k) {
            const Vec phi = b.modes().row(k).transpose();
            CHECK(std::abs(std::abs(phi.dot(es.eigenvectors().col(3 - k))) - 1.0) < 1e-10);
        }
    }

    TEST_CASE("rank-one snapshots")
    {
        Vec v(5);
        v << 1, -2, 0.5, 3, 1;
        Mat u(4, 5);
        for (int i = 0; i < 4; ++i)
            u.row(i) = (i + 1.0) * v.transpose();
        const auto b = fit_pod(u, 1);
        const Vec phi = b.modes().row(0).transpose();
        CHECK(std::abs(std::abs(phi.dot(v.normalized())) - 1.0) < 1e-12);
        for (int i = 0; i < 4; ++i)
            CHECK((b.reconstruct(b.project(u.row(i).transpose())) - u.row(i).transpose()).norm() < 1e-10);
        CHECK_THROWS_AS(fit_pod(u, 2), ValidationError);
    }

    TEST_CASE("K = N reconstructs every training row")
    {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> g;
        Mat u(6, 20);
        for (Eigen::Index i = 0; i < u.size(); ++i)
            u.data()[i] = g(rng);
        const auto b = fit_pod(u, 6);
        const Mat coef = b.project_rows(u);
        for (Eigen::Index i = 0; i < 6; ++i) {
            CHECK((b.reconstruct(coef.row(i).transpose()) - u.row(i).transpose()).norm() < 1e-8);
            CHECK((b.project(u.row(i).transpose()) - coef.row(i).transpose()).norm() < 1e-10);
        }
    }

    TEST_CASE("orthonormal modes, sign convention, sorted spectrum, energy")
    {
        Vec th = Vec::LinSpaced(12, -0.8, 0.8);
        const Mat u = smooth_family(th, 40);
        double prev_err = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 6; ++k) {
            const auto b = fit_pod(u, k);
            const Mat gram = b.modes() * b.modes().transpose();
            CHECK((gram - Mat::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-10);
            for (int r = 0; r < k; ++r) {
                Eigen::Index at;
                b.modes().row(r).cwiseAbs().maxCoeff(&at);
                CHECK(b.modes()(r, at) > 0.0);
            }
            for (Eigen::Index i = 1; i < b.spectrum().size(); ++i)
                CHECK(b.spectrum()[i] <= b.spectrum()[i - 1]);
            CHECK(b.spectrum().minCoeff() >= 0.0);
            CHECK(b.energy() >= 0.0);
            CHECK(b.energy() <= 1.0);
            const double err = (u - b.project_rows(u) * b.modes()).norm();
            CHECK(err <= prev_err + 1e-12);
            prev_err = err;
        }
    }

    TEST_CASE("project and reconstruct identities")
    {
        const Mat u = smooth_family(Vec::LinSpaced(8, -0.5, 0.5), 30);
        const auto b = fit_pod(u, 3);
        const Vec phi0 = b.modes().row(0).transpose();
        const Vec a = b.project(phi0);
        CHECK(std::abs(a[0] - 1.0) < 1e-12);
        CHECK(a.tail(2).norm() < 1e-12);
        CHECK(b.project(Vec::Zero(30)).norm() == 0.0);
        for (int k = 0; k < 3; ++k)
            CHECK((b.reconstruct(Vec::Unit(3, k)) - b.modes().row(k).transpose()).norm() < 1e-14);
        const Vec alpha(Eigen::Vector3d(0.3, -1.2, 2.0));
        CHECK((b.project(b.reconstruct(alpha)) - alpha).norm() < 1e-10);
        CHECK_THROWS_AS(b.project(Vec::Zero(29)), ValidationError);
        CHECK_THROWS_AS(b.reconstruct(Vec::Zero(2)), ValidationError);
    }

    TEST_CASE("reconstruction error follows the spectral tail")
    {
        const Mat u = smooth_family(Vec::LinSpaced(15, -0.8, 0.8), 60);
        const Mat held = smooth_family(Vec::LinSpaced(7, -0.75, 0.65), 60);
        for (int k : {2, 3, 4, 5}) {
            const auto b = fit_pod(u, k);
            const Vec& s = b.spectrum();
            CAPTURE(k);
            // training rows: sum of squared residuals = (N - 1) * discarded eigenvalues
            double train = 0.0;
            for (Eigen::Index i = 0; i < u.rows(); ++i) {
                const Vec f = u.row(i).transpose();
                train += (b.reconstruct(b.project(f)) - f).squaredNorm();
            }
            CHECK(train == doctest::Approx((u.rows() - 1) * s.tail(s.size() - k).sum()).epsilon(1e-8));
            // held-out rows from the same family, in aggregate
            const double tail = std::sqrt(s.tail(s.size() - k).sum() / s.sum());
            double num = 0.0, den = 0.0;
            for (Eigen::Index i = 0; i < held.rows(); ++i) {
                const Vec f = held.row(i).transpose();
                num += (b.reconstruct(b.project(f)) - f).squaredNorm();
                den += f.squaredNorm();
            }
            CHECK(std::sqrt(num / den) <= 1.1 * tail);
        }
    }

    TEST_CASE("centering and persistence")
    {
        const Mat u = smooth_family(Vec::LinSpaced(10, -0.5, 0.7), 25);
        const auto b = fit_pod(u, 3, true);
        CHECK(b.centered());
        CHECK((b.mean() - u.colwise().mean().transpose()).norm() < 1e-12);
        const auto dir = std::filesystem::temp_directory_path() / "lawgp_pod_roundtrip";
        std::filesystem::create_directories(dir);
        b.save(dir, "u");
        const auto back = PodBasis::load(dir, "u");
        CHECK(back.centered());
        CHECK((back.modes() - b.modes()).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.spectrum() - b.spectrum()).cwiseAbs().maxCoeff() == 0.0);
        const Vec f = u.row(4).transpose();
        CHECK((back.project(f) - b.project(f)).norm() == 0.0);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("mode count validation")
    {
        const Mat u = Mat::Random(4, 6);
        CHECK_THROWS_AS(fit_pod(u, 0), ValidationError);
        CHECK_THROWS_AS(fit_pod(u, 5), ValidationError);
        CHECK(modes_for_energy(Vec(Eigen::Vector3d(8, 1.5, 0.5)), 0.8) == 1);
        CHECK(modes_for_energy(Vec(Eigen::Vector3d(8, 1.5, 0.5)), 0.9) == 2);
    }
}
