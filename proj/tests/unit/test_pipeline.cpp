#include <doctest.h>

#include "lawgp/io.hpp"
#include "lawgp/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace lawgp;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tiny_text() { return read_file(fs::path(LAWGP_TEST_DATA) / "tiny_allen_cahn.toml"); }

fs::path scratch(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("lawgp_test_" + name);
    fs::remove_all(d);
    return d;
}

RunConfig tiny(const std::string& name)
{
    auto c = RunConfig::parse(tiny_text());
    c.output = scratch(name);
    return c;
}

std::string replace(std::string s, const std::string& from, const std::string& to)
{
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    return s.replace(at, from.size(), to);
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(LAWGP_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_SUITE("pipeline")
{
    TEST_CASE("configs are validated before any compute")
    {
        const auto text = tiny_text();
        CHECK_NOTHROW(RunConfig::parse(text));
        try {
            RunConfig::parse(replace(text, "K = [2]", ""));
            FAIL("missing pod.K accepted");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("pod.K") != std::string::npos);
        }
        CHECK_THROWS_AS(RunConfig::parse(replace(text, "K = [2]", "K = [2, 3]")), ValidationError);
        CHECK_THROWS_AS(RunConfig::parse(replace(text, "kind = \"allen_cahn\"", "kind = \"heat\"")), ValidationError);
        CHECK_THROWS_AS(RunConfig::parse(replace(text, "[gp]", "")), ValidationError);
        CHECK_THROWS_AS(RunConfig::parse(replace(text, "noise_variance = 0.1", "noise_variance = -1")),
                        ValidationError);
        CHECK_THROWS_AS(RunConfig::parse("experiment = "), ValidationError);
    }

    TEST_CASE("sample layouts")
    {
        const std::vector<ParamSpec> ps{{"a", 0.0, 1.0}, {"b", -2.0, 2.0}};
        SampleSpec s;
        s.n = 2;
        const Mat c = s.realize(ps, 1);
        REQUIRE(c.rows() == 4);
        CHECK(c(0, 0) == 0.25);
        CHECK(c(1, 0) == 0.75); // first parameter varies fastest
        CHECK(c(0, 1) == -1.0);
        CHECK(c(2, 1) == 1.0);
        s.layout = SampleSpec::Layout::Inclusive;
        s.n = 3;
        const Mat g = s.realize(ps, 1);
        CHECK(g.rows() == 9);
        CHECK(g(2, 0) == 1.0);
        CHECK(g(8, 1) == 2.0);
        s.layout = SampleSpec::Layout::Random;
        s.n = 50;
        const Mat r = s.realize(ps, 4);
        CHECK(r == s.realize(ps, 4));
        CHECK((r.col(1).array() >= -2.0).all());
        CHECK((r.col(1).array() <= 2.0).all());
    }

    TEST_CASE("rerun reuses every stage and reproduces the report byte for byte")
    {
        auto cfg = tiny("rerun");
        std::ostringstream log1;
        PipelineOptions o;
        o.log = &log1;
        {
            Pipeline p(cfg, o);
            p.pod(); // stop part way
        }
        CHECK(log1.str().find("fitting POD") != std::string::npos);
        CHECK(log1.str().find("training GP") == std::string::npos);

        std::ostringstream log2;
        o.log = &log2;
        ErrorReport first;
        {
            Pipeline p(cfg, o);
            first = p.run();
        }
        CHECK(log2.str().find("solving") == std::string::npos);
        CHECK(log2.str().find("fitting POD") == std::string::npos);
        CHECK(log2.str().find("training GP") != std::string::npos);
        const auto report1 = read_file(cfg.output / "report" / "error_report.csv");
        REQUIRE(!report1.empty());

        std::ostringstream log3;
        o.log = &log3;
        Pipeline p(cfg, o);
        const auto second = p.run();
        CHECK(log3.str().find("training GP") == std::string::npos);
        CHECK(log3.str().find("optimizing") == std::string::npos);
        CHECK(read_file(cfg.output / "report" / "error_report.csv") == report1);
        CHECK(second.row("GP").aggregate == first.row("GP").aggregate);
        CHECK(second.row("LC", "nlaw2").aggregate == first.row("LC", "nlaw2").aggregate);

        // fresh directory, same config: same numbers
        auto again = cfg;
        again.output = scratch("rerun_fresh");
        Pipeline q(again);
        q.run();
        CHECK(read_file(again.output / "report" / "error_report.csv") == report1);

        const auto from_disk = make_report(cfg.output);
        CHECK(from_disk.row("GP").aggregate == first.row("GP").aggregate);
        fs::remove_all(again.output);
    }

    TEST_CASE("stale artifacts are detected")
    {
        auto cfg = tiny("stale");
        {
            Pipeline p(cfg);
            p.surrogate();
        }
        fs::path victim;
        for (const auto& e : fs::directory_iterator(cfg.output / "pod"))
            victim = e.path();
        REQUIRE(!victim.empty());
        std::ofstream(victim, std::ios::app) << "0\n";

        PipelineOptions strict;
        strict.recompute_stale = false;
        Pipeline s(cfg, strict);
        try {
            s.pod();
            FAIL("stale artifact accepted");
        } catch (const RuntimeError& e) {
            CHECK(std::string(e.what()).find("stale artifact") != std::string::npos);
        }

        std::ostringstream log;
        PipelineOptions o;
        o.log = &log;
        Pipeline p(cfg, o);
        p.pod();
        CHECK(log.str().find("recomputing") != std::string::npos);
        Pipeline s2(cfg, strict);
        CHECK_NOTHROW(s2.pod());
        fs::remove_all(cfg.output);
    }

    TEST_CASE("test set equal to the training set: GP error is the projection error")
    {
        auto cfg = RunConfig::parse(replace(tiny_text(), "{ layout = \"random\", n = 6 }",
                                            "{ layout = \"centered\", n = 3 }"));
        cfg.output = scratch("train_as_test");
        Pipeline p(cfg);
        const auto r = p.report();
        const auto& te = p.testing();
        const auto& b = p.pod()[0];
        const auto nt = static_cast<Eigen::Index>(te.times.size());
        double num = 0.0, den = 0.0;
        for (Eigen::Index si = 0; si < nt; ++si) {
            Vec mean = Vec::Zero(te.saved[0].cols());
            for (Eigen::Index i = 0; i < te.thetas.rows(); ++i)
                mean += te.saved[0].row(i * nt + si).transpose();
            mean /= static_cast<double>(te.thetas.rows());
            num += (b.reconstruct(b.project(mean)) - mean).squaredNorm();
            den += mean.squaredNorm();
        }
        const double floor = std::sqrt(num / den);
        CAPTURE(floor);
        CHECK(std::abs(r.row("GP").aggregate - floor) < 1e-5);
        // the law correction is anchored to zero at training parameters
        CHECK(std::abs(r.row("LC", "nlaw2").aggregate - floor) < 1e-5);
        fs::remove_all(cfg.output);
    }

    TEST_CASE("estimation on the tiny problem")
    {
        auto cfg = tiny("estimate");
        Pipeline p(cfg);
        const Vec truth = Vec::Constant(1, 0.4);
        const auto obs = p.synthesize_observations(truth);
        CHECK(obs.value.size() == static_cast<Eigen::Index>(p.discretization().num_eval()));
        const auto a = p.estimate(obs, 3);
        const auto b = p.estimate(obs, 3);
        CHECK(a.samples == b.samples);
        CHECK(fs::exists(cfg.output / "estimate" / "chain.csv"));
        CHECK(fs::exists(cfg.output / "estimate" / "posterior_summary.csv"));
        CHECK((a.samples.array() >= 0.0).all());
        CHECK((a.samples.array() <= 1.0).all());

        const fs::path f = cfg.output / "obs_copy.csv";
        obs.save(f);
        const auto back = Observations::load(f);
        CHECK(back.index == obs.index);
        CHECK((back.value - obs.value).norm() == 0.0);
        fs::remove_all(cfg.output);
    }

    TEST_CASE("command line exit codes")
    {
        const fs::path d = scratch("cli");
        fs::create_directories(d);
        const fs::path good = d / "tiny.toml";
        std::ofstream(good) << tiny_text();
        const fs::path bad = d / "bad.toml";
        std::ofstream(bad) << replace(tiny_text(), "K = [2]", "");
        const std::string out = " --out " + (d / "run").string() + " --quiet";

        CHECK(run_cli("run --config " + good.string() + out) == 0);
        CHECK(fs::exists(d / "run" / "report" / "error_report.csv"));
        CHECK(run_cli("report --config " + good.string() + out) == 0);
        CHECK(run_cli("predict --theta 0.3 --time 0.1 --config " + good.string() + out) == 0);
        CHECK(run_cli("predict --theta 7 --time 0.1 --config " + good.string() + out) == 2);
        CHECK(run_cli("run --config " + bad.string() + out) == 2);
        CHECK(run_cli("frobnicate --config " + good.string()) == 2);
        CHECK(run_cli("run --config " + (d / "missing.toml").string()) == 2);
        CHECK(run_cli("report --config " + good.string() + " --out " + (d / "empty").string()) == 1);
        fs::remove_all(d);
    }
}
