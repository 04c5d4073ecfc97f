// Acceptance checks P1-P9. One line per criterion:
//   P<n> PASS|FAIL <measured values> (<threshold>)
// Run directories under --work are reused between invocations.

#include "lawgp/bayes.hpp"
#include "lawgp/geometry.hpp"
#include "lawgp/io.hpp"
#include "lawgp/models.hpp"
#include "lawgp/pipeline.hpp"
#include "lawgp/pod.hpp"
#include "lawgp/rbffd.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace lawgp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v)
{
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

fs::path g_work;
fs::path g_configs = LAWGP_CONFIG_DIR;
std::ostream* g_log = nullptr;

RunConfig config(const std::string& name)
{
    auto c = RunConfig::load(g_configs / (name + ".toml"));
    c.output = g_work / name;
    return c;
}

Pipeline& pipeline(const std::string& name)
{
    static std::map<std::string, std::unique_ptr<Pipeline>> cache;
    auto& p = cache[name];
    if (!p) {
        PipelineOptions o;
        o.log = g_log;
        p = std::make_unique<Pipeline>(config(name), o);
    }
    return *p;
}

// ------------------------------------------------------------------ P1

double monomial(int a, int b, const Point& p) { return std::pow(p.x(), a) * std::pow(p.y(), b); }

double monomial_derivative(DiffOp op, int a, int b, const Point& p)
{
    auto term = [&](int da, int db) {
        if (da > a || db > b)
            return 0.0;
        double c = 1.0;
        for (int i = 0; i < da; ++i)
            c *= a - i;
        for (int i = 0; i < db; ++i)
            c *= b - i;
        return c * monomial(a - da, b - db, p);
    };
    switch (op) {
    case DiffOp::Dx: return term(1, 0);
    case DiffOp::Dy: return term(0, 1);
    case DiffOp::Dxx: return term(2, 0);
    case DiffOp::Dyy: return term(0, 2);
    case DiffOp::Laplacian: return term(2, 0) + term(0, 2);
    default: throw ValidationError("unsupported operator");
    }
}

Outcome p1()
{
    NodeOptions o;
    o.spacing = 0.08;
    const NodeSet ns = generate_nodes(flooding_domain(), o);
    const std::vector<DiffOp> ops{DiffOp::Dx, DiffOp::Dy, DiffOp::Dxx, DiffOp::Dyy, DiffOp::Laplacian};
    const auto set = assemble_operators(ns, PhsConfig{3, 2}, ops);
    const auto& y = ns.interp_points();
    const auto& x = ns.eval_points();
    double worst = 0.0;
    for (const auto& ab : monomial_exponents(2)) {
        Vec f(static_cast<Eigen::Index>(y.size()));
        for (std::size_t i = 0; i < y.size(); ++i)
            f[static_cast<Eigen::Index>(i)] = monomial(ab[0], ab[1], y[i]);
        for (DiffOp op : ops) {
            const Vec lf = set.at(op).apply(f);
            for (std::size_t j = 0; j < x.size(); ++j)
                worst = std::max(worst,
                                 std::abs(lf[static_cast<Eigen::Index>(j)] - monomial_derivative(op, ab[0], ab[1], x[j])));
        }
    }
    return {worst <= 1e-6, "max error " + num(worst) + ", |Y| = " + std::to_string(y.size()) + " (<= 1e-6)"};
}

// ------------------------------------------------------------------ P2

double laplacian_error(double h)
{
    const auto m = make_allen_cahn();
    NodeOptions o;
    o.spacing = h;
    const NodeSet ns = generate_nodes(m->domain(), o);
    const auto lap = assemble_operator(ns, PhsConfig{3, 2}, DiffOp::Laplacian);
    const double pi = std::numbers::pi;
    const auto& y = ns.interp_points();
    const auto& x = ns.eval_points();
    Vec f(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i)
        f[static_cast<Eigen::Index>(i)] = std::sin(pi * y[i].x()) * std::sin(pi * y[i].y());
    const Vec lf = lap.apply(f);
    double num2 = 0.0, den2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double exact = -2.0 * pi * pi * std::sin(pi * x[j].x()) * std::sin(pi * x[j].y());
        num2 += std::pow(lf[static_cast<Eigen::Index>(j)] - exact, 2);
        den2 += exact * exact;
    }
    return std::sqrt(num2 / den2);
}

Outcome p2()
{
    const double e1 = laplacian_error(0.1), e2 = laplacian_error(0.05);
    const double ratio = e1 / e2;
    return {ratio >= 2.5,
            "relative l2 error h=0.1: " + num(e1) + ", h=0.05: " + num(e2) + ", ratio " + num(ratio) + " (>= 2.5)"};
}

// ------------------------------------------------------------------ P3

Outcome p3()
{
    Mat u(3, 4);
    u << 1, 2, 0, -1,
         3, -1, 4, 2,
         0, 5, -2, 1;
    const auto b = fit_pod(u, 2);
    // the nonzero eigenvalues of U^T U / (N - 1) are those of U U^T / (N - 1)
    Eigen::SelfAdjointEigenSolver<Mat> es(u * u.transpose() / 2.0);
    const Vec ev = es.eigenvalues().reverse();
    const double spec_err = (b.spectrum() - ev).cwiseAbs().maxCoeff();

    Mat x(5, 1);
    x << -1.0, -0.3, 0.2, 0.9, 1.4;
    Vec yv(5);
    yv << 0.3, -0.1, 0.4, 1.2, 0.8;
    const GpSurrogate gp = GpSurrogate::fit(x, yv);
    const Kernel& k = gp.kernel();
    const Vec xs = (x.col(0).array() - gp.input_mean()[0]) / gp.input_scale()[0];
    const Vec ys = (yv.array() - gp.target_mean()) / gp.target_scale();
    Mat km(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            const double r = (xs[i] - xs[j]) / k.lengths[0];
            km(i, j) = k.gamma * k.gamma * std::exp(-0.5 * r * r) + (i == j ? k.jitter : 0.0);
        }
    const Eigen::FullPivLU<Mat> lu(km);
    const double lml = -0.5 * ys.dot(lu.solve(ys)) - 0.5 * std::log(lu.determinant()) -
                       2.5 * std::log(2.0 * std::numbers::pi);
    const double lml_err = std::abs(lml - gp.lml());
    const double at = (0.55 - gp.input_mean()[0]) / gp.input_scale()[0];
    Vec ks(5);
    for (int i = 0; i < 5; ++i)
        ks[i] = k.gamma * k.gamma * std::exp(-0.5 * std::pow((at - xs[i]) / k.lengths[0], 2));
    const double mean = gp.target_mean() + gp.target_scale() * ks.dot(lu.solve(ys));
    const double mean_err = std::abs(mean - gp.predict(Vec::Constant(1, 0.55)).mean);
    return {spec_err <= 1e-10 && lml_err <= 1e-8 && mean_err <= 1e-8,
            "spectrum " + num(spec_err) + " (<= 1e-10), lml " + num(lml_err) + ", mean " + num(mean_err) +
                " (<= 1e-8)"};
}

// ------------------------------------------------------------------ P4-P6

Outcome p4()
{
    const auto r = pipeline("allen_cahn").run();
    const double gp = r.row("GP").aggregate, lc = r.row("LC", "nlaw7").aggregate;
    return {lc <= 0.05 && gp / lc >= 2.0,
            "GP " + num(gp) + ", LC " + num(lc) + " (<= 0.05), ratio " + num(gp / lc) + " (>= 2)"};
}

Outcome p5()
{
    const auto r = pipeline("kdv").run();
    const double gp = r.row("GP").aggregate, l4 = r.row("LC", "nlaw4").aggregate,
                 l9 = r.row("LC", "nlaw9").aggregate;
    const double gap1 = (gp - l4) / gp, gap2 = (l4 - l9) / l4;
    return {l9 < l4 && l4 < gp && gap1 >= 0.2 && gap2 >= 0.2,
            "GP " + num(gp) + ", LC4 " + num(l4) + ", LC9 " + num(l9) + "; gaps " + num(gap1) + ", " + num(gap2) +
                " (>= 0.2)"};
}

Outcome p6()
{
    const auto r = pipeline("flooding2").run();
    const double gp = r.row("GP").aggregate;
    const std::string label = config("flooding2").correction_sets.back().label;
    const double lc = r.row("LC", label).aggregate;
    std::string detail = "combined GP " + num(gp) + ", LC (" + label + ") " + num(lc) + ", ratio " + num(gp / lc) +
                         " (>= 1.5); p " + num(r.row("GP", "", "p").aggregate) + " -> " +
                         num(r.row("LC", label, "p").aggregate) + ", c " + num(r.row("GP", "", "c").aggregate) +
                         " -> " + num(r.row("LC", label, "c").aggregate);
    return {gp / lc >= 1.5, detail};
}

// ------------------------------------------------------------------ P7

Outcome p7()
{
    std::size_t entries = 0, violations = 0;
    std::string first;
    for (const std::string name : {"allen_cahn", "kdv", "flooding2", "flooding3"}) {
        auto& p = pipeline(name);
        p.corrections();
        const auto vars = p.model().variables();
        for (const auto& set : p.config().correction_sets) {
            const auto map = CorrectionMap::load(p.dir() / "correction" / set.label, vars, p.model().params().size());
            entries += map.entries().size();
            const auto bad = check_correction_invariants(map);
            violations += bad.size();
            if (!bad.empty() && first.empty())
                first = name + "/" + set.label + ": " + bad.front();
        }
    }
    return {violations == 0 && entries > 0, std::to_string(entries) + " persisted entries over 4 configs, " +
                                                std::to_string(violations) + " violations" +
                                                (first.empty() ? "" : " (" + first + ")")};
}

// ------------------------------------------------------------------ P8

Outcome p8()
{
    const double mu = 0.3, sd = 0.1;
    McmcOptions o;
    o.iterations = 62500; // 50000 kept
    o.seed = 3;
    auto target = [&](const Vec& x) { return -0.5 * std::pow((x[0] - mu) / sd, 2); };
    const auto c = run_mh(target, Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), o);
    const auto again = run_mh(target, Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), o);
    std::vector<double> kept(c.samples.col(0).data() + c.burn_in, c.samples.col(0).data() + c.samples.rows());
    const double ks =
        ks_statistic(kept, [&](double x) { return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0))); });
    const bool same = c.samples == again.samples && c.log_posterior == again.log_posterior;

    auto& p = pipeline("kdv");
    const Vec truth(Eigen::Vector2d(6.0, 1.0));
    const auto obs = p.synthesize_observations(truth);
    const auto t0 = std::chrono::steady_clock::now();
    const auto chain = p.estimate(obs);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool covered = true;
    std::string post;
    for (Eigen::Index i = 0; i < 2; ++i) {
        covered = covered && std::abs(chain.mean[i] - truth[i]) <= 2.0 * chain.stddev[i];
        post += (i ? ", " : "") + num(chain.mean[i]) + " +- " + num(chain.stddev[i]);
    }
    return {ks < 0.02 && same && covered,
            "KS " + num(ks) + " (< 0.02), seed repeat " + (same ? "bit-exact" : "differs") +
                "; KdV posterior (" + post + ") vs (6, 1), within 2 std: " + (covered ? "yes" : "no") +
                ", chain " + num(secs) + " s"};
}

// ------------------------------------------------------------------ P9

Outcome p9()
{
    auto& p = pipeline("allen_cahn");
    SurrogateSet s = p.surrogate();
    const SurrogateSet plain = s;
    const auto times = p.model().time_grid().save_times();
    std::mt19937_64 rng(p.config().seed + 30);
    std::uniform_real_distribution<double> u(0.0, 1.0), w(-1.0, 1.0);
    std::vector<CorrectionEntry> entries;
    for (int i = 0; i < 12; ++i)
        for (double t : times) {
            CorrectionEntry e;
            e.theta = Vec::Constant(1, u(rng));
            e.t = t;
            e.omega = Vec(s.total_modes());
            for (Eigen::Index k = 0; k < e.omega.size(); ++k)
                e.omega[k] = w(rng);
            e.bound = e.omega.cwiseAbs();
            entries.push_back(e);
        }
    const Mat anchors = p.training().inputs();
    const CorrectionMap map(entries, anchors, {s.bases[0].size()});
    attach_corrections(s, map);
    double dmean = 0.0, dvar = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Vec x(2);
        x << u(rng), times[static_cast<std::size_t>(trial) % times.size()];
        for (int k = 0; k < s.bases[0].size(); ++k) {
            const auto a = s.gps[0][static_cast<std::size_t>(k)].predict(x);
            const auto b = plain.gps[0][static_cast<std::size_t>(k)].predict(x);
            dmean = std::max(dmean, std::abs(a.mean - (b.mean + map.shift(0, k, x))));
            dvar = std::max(dvar, std::abs(a.variance - b.variance));
        }
    }
    return {dmean <= 1e-10 && dvar <= 1e-12,
            "max mean deviation " + num(dmean) + " (<= 1e-10), variance " + num(dvar) + " (<= 1e-12)"};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance checks"};
    std::string work = "acceptance_runs";
    std::vector<std::string> only, expect_fail;
    bool verbose = false;
    app.add_option("--work", work, "run directory root");
    app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
    app.add_option("--expect-fail", expect_fail, "criteria recorded as unattainable")->delimiter(',');
    app.add_flag("--verbose", verbose, "pipeline progress on stderr");
    CLI11_PARSE(app, argc, argv);
    g_work = work;
    g_log = verbose ? &std::cerr : nullptr;
    fs::create_directories(g_work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"P1", p1}, {"P2", p2}, {"P3", p3}, {"P4", p4}, {"P5", p5},
        {"P6", p6}, {"P7", p7}, {"P8", p8}, {"P9", p9}};
    const std::set<std::string> wanted(only.begin(), only.end()), known(expect_fail.begin(), expect_fail.end());

    std::ofstream summary(g_work / "acceptance.txt");
    int unexpected = 0;
    for (const auto& [name, check] : checks) {
        if (!wanted.empty() && !wanted.count(name))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool expected = known.count(name) > 0;
        std::ostringstream line;
        line << name << " " << (r.pass ? "PASS" : "FAIL") << " " << r.detail << " [" << num(secs) << " s]"
             << (expected ? (r.pass ? " (listed as expected failure but passed)" : " (expected failure)") : "");
        std::cout << line.str() << std::endl;
        summary << line.str() << "\n";
        if (r.pass == expected)
            ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
