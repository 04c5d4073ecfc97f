#include <doctest.h>

#include "lawgp/bayes.hpp"

#include <cmath>
#include <limits>

using namespace lawgp;

namespace {

double normal_cdf(double x, double mu, double sd) { return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0))); }

InverseProblem linear_problem()
{
    InverseProblem p;
    p.lower = Vec(Eigen::Vector2d(0.0, -1.0));
    p.upper = Vec(Eigen::Vector2d(2.0, 3.0));
    p.forward = [](const Vec& t) { return Vec(Eigen::Vector3d(t[0], t[1], t[0] + 2 * t[1])); };
    p.observations = Vec(Eigen::Vector3d(1.0, 0.5, 2.2));
    p.noise_variance = 0.1;
    return p;
}

} // namespace

TEST_SUITE("bayes")
{
    TEST_CASE("log posterior is assembled from prior, misfit and law term")
    {
        auto p = linear_problem();
        p.law_loss = [](const Vec& t) { return (t[0] - 1.0) * (t[0] - 1.0); };
        p.beta2 = 0.7;
        const Vec t(Eigen::Vector2d(1.2, 0.4));
        const double misfit = 0.2 * 0.2 + 0.1 * 0.1 + 0.2 * 0.2;
        const double expected = -std::log(2.0 * 4.0) - misfit / (2 * 0.1) - 0.7 * 0.04;
        CHECK(log_posterior(p, t) == doctest::Approx(expected).epsilon(1e-14));
        p.beta1 = 3.0;
        CHECK(log_posterior(p, t) == doctest::Approx(-std::log(8.0) - 3.0 * misfit - 0.7 * 0.04).epsilon(1e-14));

        p.mask = {0, 2};
        p.observations = Vec(Eigen::Vector2d(1.0, 2.2));
        CHECK(p.misfit(t) == doctest::Approx(0.04 + 0.04).epsilon(1e-14));
    }

    TEST_CASE("outside the prior box the density vanishes")
    {
        const auto p = linear_problem();
        CHECK(log_posterior(p, Vec(Eigen::Vector2d(-0.01, 0.0))) == -std::numeric_limits<double>::infinity());
        CHECK(log_posterior(p, Vec(Eigen::Vector2d(1.0, 3.5))) == -std::numeric_limits<double>::infinity());
        CHECK(std::isfinite(log_posterior(p, Vec(Eigen::Vector2d(0.0, 3.0)))));
    }

    TEST_CASE("likelihood decreases with the misfit")
    {
        auto p = linear_problem();
        p.forward = [](const Vec& t) { return Vec(Vec::Constant(1, t[0])); };
        p.observations = Vec::Constant(1, 1.0);
        double last = std::numeric_limits<double>::infinity();
        for (double x = 1.0; x <= 2.0; x += 0.1) {
            const double v = log_posterior(p, Vec(Eigen::Vector2d(x, 0.0)));
            CHECK(v < last);
            last = v;
        }
    }

    TEST_CASE("invalid problems are rejected")
    {
        auto p = linear_problem();
        p.noise_variance = 0.0;
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p = linear_problem();
        p.upper[1] = p.lower[1];
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p = linear_problem();
        p.mask = {0};
        CHECK_THROWS_AS(p.validate(), ValidationError);
        p = linear_problem();
        CHECK_THROWS_AS(log_posterior(p, Vec::Zero(3)), ValidationError);
        McmcOptions o;
        o.burn_in_fraction = 1.0;
        CHECK_THROWS_AS(run_mh(p, o), ValidationError);
    }

    TEST_CASE("chain matches a Gaussian target")
    {
        const double mu = 0.3, sd = 0.1;
        McmcOptions o;
        o.iterations = 62500; // 50000 after burn-in
        o.seed = 3;
        const auto c = run_mh([&](const Vec& x) { return -0.5 * (x[0] - mu) * (x[0] - mu) / (sd * sd); },
                              Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), o);
        REQUIRE(c.samples.rows() - c.burn_in == 50000);
        std::vector<double> kept(c.samples.col(0).data() + c.burn_in, c.samples.col(0).data() + c.samples.rows());
        const double d = ks_statistic(kept, [&](double x) { return normal_cdf(x, mu, sd); });
        CAPTURE(d);
        CHECK(d < 0.02);
        CHECK(std::abs(c.mean[0] - mu) < 0.05 * mu);
        CHECK(std::abs(c.stddev[0] - sd) < 0.05 * sd);
        CHECK(c.acceptance_rate > 0.2);
        CHECK(c.acceptance_rate < 0.6);
    }

    TEST_CASE("flat target: every in-box proposal is accepted")
    {
        const double s = 0.1;
        McmcOptions o;
        o.iterations = 60000;
        o.burn_in_fraction = 0.0;
        o.adapt = false;
        o.initial_scale = Vec::Constant(1, s);
        o.seed = 5;
        const auto c = run_mh([](const Vec&) { return 0.0; }, Vec::Zero(1), Vec::Ones(1), o);
        // P(out) = 2 int_0^1 P(s Z > d) dd for x uniform on [0, 1]
        double out = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double d = (i + 0.5) / n;
            out += 2.0 * 0.5 * std::erfc(d / (s * std::sqrt(2.0))) / n;
        }
        CAPTURE(out);
        CHECK(std::abs(c.acceptance_rate - (1.0 - out)) < 0.01);
        CHECK(c.proposal_scale[0] == s);
    }

    TEST_CASE("same seed gives the same chain")
    {
        const auto p = linear_problem();
        McmcOptions o;
        o.iterations = 3000;
        o.seed = 17;
        const auto a = run_mh(p, o);
        const auto b = run_mh(p, o);
        CHECK(a.samples == b.samples);
        CHECK(a.log_posterior == b.log_posterior);
        o.seed = 18;
        const auto c = run_mh(p, o);
        CHECK(!(a.samples == c.samples));
        for (Eigen::Index i = 0; i < a.samples.rows(); ++i) {
            CHECK((a.samples.row(i).transpose().array() >= p.lower.array()).all());
            CHECK((a.samples.row(i).transpose().array() <= p.upper.array()).all());
        }
    }

    TEST_CASE("ks statistic against a known sample")
    {
        CHECK(ks_statistic({0.5}, [](double x) { return x; }) == doctest::Approx(0.5));
        CHECK(ks_statistic({0.25, 0.75}, [](double x) { return x; }) == doctest::Approx(0.25));
        CHECK_THROWS_AS(ks_statistic({}, [](double x) { return x; }), ValidationError);
    }
}
