// lawgp: command-line driver for the surrogate pipeline.
//   lawgp <nodes|solve|pod|gp-train|correct|predict|estimate|report|run>
//         --config FILE [--out DIR] [--seed N]
// Exit status: 0 success, 2 validation error, 1 runtime error.

#include "lawgp/io.hpp"
#include "lawgp/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

using namespace lawgp;

namespace {

Vec parse_vector(const std::string& s, const std::string& what)
{
    const auto parts = io::split(s, ',');
    Vec v(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) {
        try {
            std::size_t used = 0;
            v[static_cast<Eigen::Index>(i)] = std::stod(parts[i], &used);
            if (used != parts[i].size())
                throw std::invalid_argument(parts[i]);
        } catch (const std::exception&) {
            throw ValidationError(what + ": '" + parts[i] + "' is not a number");
        }
    }
    return v;
}

void print_report(const ErrorReport& r)
{
    std::cout << "# " << ErrorReport::definition() << "\n";
    for (const auto& row : r.rows)
        std::cout << row.method << (row.label.empty() ? "" : " " + row.label) << " " << row.variable << " "
                  << io::format_double(row.aggregate) << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Meshfree POD-GP surrogates with law-based prior correction"};
    app.require_subcommand(1, 1);

    std::string config;
    std::string out;
    std::int64_t seed = -1;
    bool strict = false, quiet = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "run configuration (TOML)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "run directory, overrides the config");
        sub->add_option("--seed", seed, "master seed (chain seed for estimate)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--strict", strict, "fail on stale artifacts instead of recomputing them");
        sub->add_flag("--quiet", quiet, "no progress messages");
    };
    auto* nodes = app.add_subcommand("nodes", "generate node sets");
    auto* solve = app.add_subcommand("solve", "full-order snapshots for training and test parameters");
    auto* pod = app.add_subcommand("pod", "POD bases");
    auto* gp = app.add_subcommand("gp-train", "GP surrogates per POD coefficient");
    auto* correct = app.add_subcommand("correct", "law-based prior corrections");
    auto* predict = app.add_subcommand("predict", "surrogate fields at one parameter and time");
    auto* estimate = app.add_subcommand("estimate", "Metropolis-Hastings posterior of the parameters");
    auto* report = app.add_subcommand("report", "error report and figure data of a completed run");
    auto* run = app.add_subcommand("run", "every stage and the report");
    for (auto* s : {nodes, solve, pod, gp, correct, predict, estimate, report, run})
        common(s);

    std::string theta_text, label, obs_file, truth_text;
    double time = 0.0;
    bool uncorrected = false;
    predict->add_option("--theta", theta_text, "comma-separated parameters")->required();
    predict->add_option("--time", time, "save time")->required();
    predict->add_option("--label", label, "correction set (default: last)");
    predict->add_flag("--uncorrected", uncorrected, "plain GP prior");
    auto* obs_opt = estimate->add_option("--obs", obs_file, "observations CSV (variable,index,value)");
    estimate->add_option("--truth", truth_text, "synthesize noisy observations from a full-order solve at this theta")
        ->excludes(obs_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const bool is_estimate = estimate->parsed();
        RunConfig cfg = RunConfig::load(config);
        if (!out.empty())
            cfg.output = out;
        if (seed >= 0 && !is_estimate)
            cfg.reseed(static_cast<std::uint64_t>(seed));
        if (is_estimate && obs_file.empty() && truth_text.empty())
            throw ValidationError("estimate: one of --obs or --truth is required");

        PipelineOptions opt;
        opt.recompute_stale = !strict;
        opt.log = quiet ? nullptr : &std::cerr;

        if (report->parsed()) {
            print_report(make_report(cfg.output));
            return 0;
        }
        Pipeline p(cfg, opt);
        if (nodes->parsed()) {
            const auto& n = p.nodes();
            std::cout << "nodes: |Y| = " << n.num_interp() << ", |X| = " << n.num_eval() << "\n";
        } else if (solve->parsed()) {
            std::cout << "snapshots: " << p.training().thetas.rows() << " training, " << p.testing().thetas.rows()
                      << " test parameters\n";
        } else if (pod->parsed()) {
            const auto& b = p.pod();
            for (std::size_t v = 0; v < b.size(); ++v)
                std::cout << p.model().variables()[v] << ": K = " << b[v].size()
                          << ", energy = " << io::format_double(b[v].energy()) << "\n";
        } else if (gp->parsed()) {
            const auto& s = p.surrogate();
            std::cout << "gp: " << s.total_modes() << " surrogates\n";
        } else if (correct->parsed()) {
            const auto& maps = p.corrections();
            for (std::size_t i = 0; i < maps.size(); ++i) {
                const auto bad = check_correction_invariants(maps[i]);
                std::cout << cfg.correction_sets[i].label << ": " << maps[i].entries().size() << " entries, "
                          << (bad.empty() ? "invariants hold" : std::to_string(bad.size()) + " violations")
                          << (maps[i].any_budget_exhausted() ? ", budget exhausted somewhere" : "") << "\n";
            }
        } else if (predict->parsed()) {
            const Vec theta = parse_vector(theta_text, "--theta");
            const auto fields = p.predict(theta, time, label, !uncorrected);
            const auto vars = p.model().variables();
            const auto& pts = p.nodes().eval_points();
            std::vector<std::string> header{"x", "y"};
            header.insert(header.end(), vars.begin(), vars.end());
            std::vector<std::vector<double>> rows;
            for (std::size_t j = 0; j < pts.size(); ++j) {
                std::vector<double> r{pts[j].x(), pts[j].y()};
                for (const auto& f : fields)
                    r.push_back(f[static_cast<Eigen::Index>(j)]);
                rows.push_back(std::move(r));
            }
            std::filesystem::create_directories(p.dir() / "predict");
            std::ostringstream name;
            name << "prediction_" << theta_text << "_t" << io::format_double(time)
                 << (uncorrected ? "_gp" : "_lc") << ".csv";
            io::write_csv(p.dir() / "predict" / name.str(), header, rows);
            std::cout << "wrote " << (p.dir() / "predict" / name.str()).string() << "\n";
        } else if (is_estimate) {
            std::optional<std::uint64_t> chain_seed;
            if (seed >= 0)
                chain_seed = static_cast<std::uint64_t>(seed);
            const Observations obs = truth_text.empty()
                                         ? Observations::load(obs_file)
                                         : p.synthesize_observations(parse_vector(truth_text, "--truth"));
            const auto chain = p.estimate(obs, chain_seed);
            const auto params = p.model().params();
            for (std::size_t i = 0; i < params.size(); ++i)
                std::cout << params[i].name << ": " << io::format_double(chain.mean[static_cast<Eigen::Index>(i)])
                          << " +- " << io::format_double(chain.stddev[static_cast<Eigen::Index>(i)]) << "\n";
            std::cout << "acceptance rate: " << io::format_double(chain.acceptance_rate) << "\n";
        } else if (run->parsed()) {
            print_report(p.run());
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "lawgp: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "lawgp: " << e.what() << "\n";
        return 1;
    }
}
