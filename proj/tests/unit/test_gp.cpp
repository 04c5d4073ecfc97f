#include <doctest.h>

#include "lawgp/gp.hpp"

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <random>

using namespace lawgp;

namespace {

Mat column(std::initializer_list<double> v)
{
    Mat m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v)
        m(i++, 0) = x;
    return m;
}

double dense_lml(const Kernel& k, const Mat& x, const Vec& y)
{
    const Eigen::Index n = x.rows();
    Mat km(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double r2 = ((x.row(i) - x.row(j)).array() / k.lengths.transpose().array()).square().sum();
            km(i, j) = k.gamma * k.gamma * std::exp(-0.5 * r2) + (i == j ? k.jitter : 0.0);
        }
    Eigen::FullPivLU<Mat> lu(km);
    return -0.5 * y.dot(lu.solve(y)) - 0.5 * std::log(lu.determinant()) -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

// Posterior mean with the fitted hyperparameters, computed from scratch.
double dense_mean(const GpSurrogate& gp, const Vec& at)
{
    const Mat& x = gp.inputs();
    const Eigen::Index n = x.rows();
    auto z = [&](const Vec& p) { return Vec((p - gp.input_mean()).cwiseQuotient(gp.input_scale())); };
    const Kernel& k = gp.kernel();
    Mat km(n, n);
    Vec ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            km(i, j) = k(z(x.row(i).transpose()), z(x.row(j).transpose())) + (i == j ? k.jitter : 0.0);
        ks[i] = k(z(at), z(x.row(i).transpose()));
    }
    const Vec ys = (gp.targets().array() - gp.target_mean()) / gp.target_scale();
    return gp.target_mean() + gp.target_scale() * ks.dot(km.fullPivLu().solve(ys));
}

} // namespace

TEST_SUITE("gp")
{
    TEST_CASE("log marginal likelihood matches the dense formula")
    {
        const Mat x = column({-1.0, -0.3, 0.2, 0.9, 1.4});
        Vec y(5);
        y << 0.3, -0.1, 0.4, 1.2, 0.8;
        Kernel k;
        k.lengths = Vec::Constant(1, 0.7);
        k.gamma = 1.3;
        CHECK(std::abs(log_marginal_likelihood(k, x, y) - dense_lml(k, x, y)) < 1e-8);
        const GpSurrogate gp = GpSurrogate::fit(x, y);
        const Mat xs = (x.array() - gp.input_mean()[0]) / gp.input_scale()[0];
        const Vec ys = (y.array() - gp.target_mean()) / gp.target_scale();
        CHECK(std::abs(gp.lml() - dense_lml(gp.kernel(), xs, ys)) < 1e-8);
        const Vec at = Vec::Constant(1, 0.55);
        CHECK(std::abs(gp.predict(at).mean - dense_mean(gp, at)) < 1e-8);
    }

    TEST_CASE("fitted hyperparameters maximize the likelihood over the recorded starts")
    {
        const Mat x = column({0.0, 0.2, 0.5, 0.7, 1.0});
        const Vec y = (x.col(0).array() * 3.0).sin();
        const GpSurrogate gp = GpSurrogate::fit(x, y);
        REQUIRE(gp.starts().size() == 8);
        for (const auto& s : gp.starts())
            CHECK(s.lml <= gp.lml() + 1e-9);
    }

    TEST_CASE("three points of the identity interpolate the midpoint")
    {
        const Mat x = column({0.0, 0.4, 1.0});
        const Vec y = x.col(0);
        const GpSurrogate gp = GpSurrogate::fit(x, y);
        const Vec mid = Vec::Constant(1, 0.5);
        CHECK(std::abs(gp.predict(mid).mean - 0.5) < 1e-3);
        CHECK(std::abs(gp.predict(mid).mean - dense_mean(gp, mid)) < 1e-8);
    }

    TEST_CASE("constant targets and interpolation at training inputs")
    {
        const Mat x = column({0.0, 0.3, 0.6, 1.0});
        const GpSurrogate flat = GpSurrogate::fit(x, Vec::Constant(4, 2.5));
        for (double t : {0.0, 0.15, 0.8, 3.0})
            CHECK(flat.predict(Vec::Constant(1, t)).mean == doctest::Approx(2.5).epsilon(1e-12));
        for (Eigen::Index i = 0; i < 4; ++i)
            CHECK(flat.predict(x.row(i).transpose()).variance < 1e-8);

        Mat x2(6, 2);
        x2 << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5, 0.2, 0.8;
        Vec y2(6);
        for (Eigen::Index i = 0; i < 6; ++i)
            y2[i] = std::sin(3 * x2(i, 0)) + x2(i, 1) * x2(i, 1);
        const GpSurrogate gp = GpSurrogate::fit(x2, y2);
        for (Eigen::Index i = 0; i < 6; ++i) {
            const auto p = gp.predict(x2.row(i).transpose());
            CHECK(std::abs(p.mean - y2[i]) < 1e-6);
            CHECK(p.variance >= 0.0);
            CHECK(p.variance < 1e-6);
        }
    }

    TEST_CASE("far from the data the prediction reverts to the prior")
    {
        const Mat x = column({0.0, 0.5, 1.0, 1.5});
        Vec y(4);
        y << 1.0, 2.0, 0.5, 1.5;
        const GpSurrogate gp = GpSurrogate::fit(x, y);
        const double far = x.maxCoeff() + 20.0 * gp.kernel().lengths[0] * gp.input_scale()[0];
        const auto p = gp.predict(Vec::Constant(1, far));
        const double prior_var = gp.kernel().gamma * gp.kernel().gamma * gp.target_scale() * gp.target_scale();
        CHECK(std::abs(p.mean - gp.target_mean()) < 1e-8);
        CHECK(std::abs(p.variance - prior_var) < 1e-8 * prior_var);
    }

    TEST_CASE("prior shift adds exactly and leaves the variance")
    {
        const Mat x = column({0.0, 0.5, 1.0});
        const Vec y(Eigen::Vector3d(0.2, 0.9, 0.1));
        GpSurrogate gp = GpSurrogate::fit(x, y);
        const Vec at = Vec::Constant(1, 0.7);
        const auto before = gp.predict(at);
        gp.attach([](const Vec&) { return 0.5; });
        CHECK(gp.corrected());
        const auto after = gp.predict(at);
        CHECK(after.mean == before.mean + 0.5);
        CHECK(after.variance == before.variance);
        CHECK(gp.predict_uncorrected(at).mean == before.mean);
        gp.detach();
        CHECK(gp.predict(at).mean == before.mean);
    }

    TEST_CASE("symmetry, permutation and affine invariance")
    {
        Mat x(5, 2);
        x << 0, 0, 1, 0.3, 0.2, 1, 0.7, 0.6, 0.4, 0.1;
        Vec y(5);
        y << 0.1, 0.5, -0.2, 0.9, 0.3;
        Kernel k;
        k.lengths = Vec(Eigen::Vector2d(0.8, 1.5));
        k.gamma = 1.1;
        const Mat g = k.gram(x);
        CHECK((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

        const GpSurrogate a = GpSurrogate::with_kernel(x, y, k);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
        perm.indices() << 3, 0, 4, 2, 1;
        const GpSurrogate b = GpSurrogate::with_kernel(perm * x, perm * y, k);
        const GpSurrogate c = GpSurrogate::with_kernel(x, (3.0 * y.array() - 7.0).matrix(), k);
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> u(-0.5, 1.5);
        for (int t = 0; t < 20; ++t) {
            const Vec at(Eigen::Vector2d(u(rng), u(rng)));
            const auto pa = a.predict(at);
            CHECK(std::abs(pa.mean - b.predict(at).mean) < 1e-10);
            CHECK(std::abs(pa.variance - b.predict(at).variance) < 1e-10);
            CHECK(std::abs(3.0 * pa.mean - 7.0 - c.predict(at).mean) < 1e-8);
        }
        const GpSurrogate fa = GpSurrogate::fit(x, y);
        const GpSurrogate fc = GpSurrogate::fit(x, (3.0 * y.array() - 7.0).matrix());
        const Vec at(Eigen::Vector2d(0.45, 0.55));
        CHECK(std::abs(3.0 * fa.predict(at).mean - 7.0 - fc.predict(at).mean) < 1e-6);
    }

    TEST_CASE("input validation")
    {
        CHECK_THROWS_AS(GpSurrogate::fit(column({0.5}), Vec::Constant(1, 1.0)), ValidationError);
        CHECK_THROWS_AS(GpSurrogate::fit(column({0.0, 1.0}), Vec(Eigen::Vector2d(1.0, NAN))), ValidationError);
        CHECK_THROWS_AS(GpSurrogate::fit(column({0.0, 1.0}), Vec::Constant(3, 1.0)), ValidationError);
        const GpSurrogate gp = GpSurrogate::fit(column({0.0, 1.0, 2.0}), Vec(Eigen::Vector3d(0, 1, 0)));
        CHECK_THROWS_AS(gp.predict(Vec::Zero(2)), ValidationError);
    }

    TEST_CASE("persistence and parallel fitting")
    {
        Mat x(8, 2);
        Mat t(8, 3);
        for (Eigen::Index i = 0; i < 8; ++i) {
            x(i, 0) = 0.1 * static_cast<double>(i);
            x(i, 1) = std::cos(static_cast<double>(i));
            t(i, 0) = x(i, 0) * x(i, 1);
            t(i, 1) = std::exp(x(i, 0));
            t(i, 2) = x(i, 1) - x(i, 0);
        }
        const auto gps = fit_surrogates(x, t);
        REQUIRE(gps.size() == 3);
        for (Eigen::Index k = 0; k < 3; ++k) {
            GpOptions o;
            o.seed += static_cast<std::uint64_t>(k);
            const auto one = GpSurrogate::fit(x, t.col(k), o);
            CHECK(one.lml() == gps[static_cast<std::size_t>(k)].lml());
        }
        const auto path = std::filesystem::temp_directory_path() / "lawgp_gp_roundtrip.csv";
        gps[1].save(path);
        const auto back = GpSurrogate::load(path);
        const Vec at(Eigen::Vector2d(0.33, 0.2));
        CHECK(std::abs(back.predict(at).mean - gps[1].predict(at).mean) < 1e-12);
        CHECK(std::abs(back.predict(at).variance - gps[1].predict(at).variance) < 1e-12);
        const Mat means = predict_means(gps, x);
        // interpolation up to the diagonal jitter
        CHECK((means - t).cwiseAbs().maxCoeff() < 1e-4 * t.cwiseAbs().maxCoeff());
        std::filesystem::remove(path);
    }
}
