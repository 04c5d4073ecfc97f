#include "lawgp/pipeline.hpp"

#include "lawgp/io.hpp"

#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace lawgp {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ samples

Mat SampleSpec::realize(const std::vector<ParamSpec>& params, std::uint64_t seed) const
{
    const auto q = static_cast<Eigen::Index>(params.size());
    if (layout == Layout::Points) {
        if (points.cols() != q)
            throw ValidationError("sample points have " + std::to_string(points.cols()) + " columns, model has " +
                                  std::to_string(q) + " parameters");
        return points;
    }
    if (n < 1)
        throw ValidationError("sample size must be positive");
    if (layout == Layout::Random) {
        std::mt19937_64 rng(seed);
        Mat out(n, q);
        for (int i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < q; ++j)
                out(i, j) = std::uniform_real_distribution<double>(params[static_cast<std::size_t>(j)].lower,
                                                                   params[static_cast<std::size_t>(j)].upper)(rng);
        return out;
    }
    Eigen::Index rows = 1;
    for (Eigen::Index j = 0; j < q; ++j)
        rows *= n;
    Mat out(rows, q);
    // first parameter varies fastest
    for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index idx = r;
        for (Eigen::Index j = 0; j < q; ++j) {
            const auto i = static_cast<double>(idx % n);
            idx /= n;
            double f;
            if (layout == Layout::Centered)
                f = (i + 0.5) / n;
            else
                f = n == 1 ? 0.5 : i / (n - 1);
            const auto& p = params[static_cast<std::size_t>(j)];
            out(r, j) = p.lower + f * (p.upper - p.lower);
        }
    }
    return out;
}

// ------------------------------------------------------------------- config

namespace {

const toml::table& section(const toml::table& root, const std::string& name)
{
    const auto* t = root[name].as_table();
    if (!t)
        throw ValidationError("config: missing section [" + name + "]");
    return *t;
}

template <class T>
T value_or(const toml::table& t, std::string_view key, T fallback)
{
    if (!t.contains(key))
        return fallback;
    auto v = t[key].value<T>();
    if (!v)
        throw ValidationError("config: key '" + std::string(key) + "' has the wrong type");
    return *v;
}

template <class T>
T required(const toml::table& t, const std::string& sec, std::string_view key)
{
    if (!t.contains(key))
        throw ValidationError("config: missing " + sec + "." + std::string(key));
    return value_or<T>(t, key, T{});
}

Vec number_array(const toml::node& node, const std::string& what)
{
    const auto* a = node.as_array();
    if (!a)
        throw ValidationError("config: " + what + " must be an array");
    Vec v(static_cast<Eigen::Index>(a->size()));
    for (std::size_t i = 0; i < a->size(); ++i) {
        auto x = (*a)[i].value<double>();
        if (!x)
            throw ValidationError("config: " + what + " must hold numbers");
        v[static_cast<Eigen::Index>(i)] = *x;
    }
    return v;
}

SampleSpec parse_sample(const toml::node& node, const std::string& what)
{
    const auto* t = node.as_table();
    if (!t)
        throw ValidationError("config: " + what + " must be a table");
    SampleSpec s;
    const auto layout = required<std::string>(*t, what, "layout");
    if (layout == "centered")
        s.layout = SampleSpec::Layout::Centered;
    else if (layout == "inclusive")
        s.layout = SampleSpec::Layout::Inclusive;
    else if (layout == "random")
        s.layout = SampleSpec::Layout::Random;
    else if (layout == "points")
        s.layout = SampleSpec::Layout::Points;
    else
        throw ValidationError("config: unknown layout '" + layout + "' in " + what);
    if (s.layout == SampleSpec::Layout::Points) {
        const auto* a = (*t)["points"].as_array();
        if (!a || a->empty())
            throw ValidationError("config: " + what + ".points must be a nonempty array of arrays");
        std::vector<Vec> rows;
        for (const auto& r : *a)
            rows.push_back(number_array(r, what + ".points"));
        s.points.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.front().size())
                throw ValidationError("config: ragged " + what + ".points");
            s.points.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        }
        s.n = static_cast<int>(rows.size());
    } else {
        s.n = required<int>(*t, what, "n");
        if (s.n < 1)
            throw ValidationError("config: " + what + ".n must be positive");
    }
    return s;
}

void override_bounds(const toml::table& model, ParamSpec& p)
{
    const auto* b = model["bounds"].as_table();
    if (!b || !b->contains(p.name))
        return;
    Vec v = number_array(*(*b)[p.name].node(), "bounds." + p.name);
    if (v.size() != 2 || !(v[0] < v[1]))
        throw ValidationError("config: bounds." + p.name + " must be [lower, upper] with lower < upper");
    p.lower = v[0];
    p.upper = v[1];
}

std::string canonical(const toml::node* n)
{
    if (!n)
        return "";
    const auto* t = n->as_table();
    if (!t)
        throw ValidationError("config: expected a table");
    std::ostringstream os;
    os << *t;
    return os.str();
}

std::string hash_text(const std::vector<std::string>& parts)
{
    std::uint64_t h = io::fnv1a("");
    for (const auto& p : parts)
        h = io::fnv1a(p, h ^ 0x9e3779b97f4a7c15ULL);
    return io::hex(h);
}

} // namespace

RunConfig RunConfig::parse(const std::string& text, const fs::path& base)
{
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config: " << e.description() << " at line " << e.source().begin.line;
        throw ValidationError(os.str());
    }
    RunConfig c;
    c.text = text;
    c.experiment = value_or<std::string>(root, "experiment", "run");
    c.output = value_or<std::string>(root, "output", "runs/" + c.experiment);
    if (c.output.is_relative() && !base.empty())
        c.output = base / c.output;
    const auto seed = value_or<std::int64_t>(root, "seed", 1);
    if (seed < 0)
        throw ValidationError("config: seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(seed);

    for (const char* s : {"model", "geometry", "rbffd", "samples", "pod", "gp", "correction"})
        section(root, s);

    // model
    const auto& m = section(root, "model");
    c.model_kind = required<std::string>(m, "model", "kind");
    if (c.model_kind == "allen_cahn") {
        auto& o = c.allen_cahn;
        o.tau = value_or(m, "tau", o.tau);
        o.final_time = value_or(m, "final_time", o.final_time);
        o.saves = value_or(m, "saves", o.saves);
        o.boundary_value = value_or(m, "boundary_value", o.boundary_value);
        o.star_initial = value_or(m, "star_initial", o.star_initial);
        o.initial_value = value_or(m, "initial_value", o.initial_value);
        override_bounds(m, o.epsilon);
    } else if (c.model_kind == "kdv") {
        auto& o = c.kdv;
        o.tau = value_or(m, "tau", o.tau);
        o.final_time = value_or(m, "final_time", o.final_time);
        o.saves = value_or(m, "saves", o.saves);
        o.xmin = value_or(m, "xmin", o.xmin);
        o.xmax = value_or(m, "xmax", o.xmax);
        o.c1 = value_or(m, "c1", o.c1);
        o.c2 = value_or(m, "c2", o.c2);
        o.l1 = value_or(m, "l1", o.l1);
        o.l2 = value_or(m, "l2", o.l2);
        override_bounds(m, o.theta1);
        override_bounds(m, o.theta2);
    } else if (c.model_kind == "flooding") {
        auto& o = c.flooding;
        o.num_params = value_or(m, "num_params", o.num_params);
        o.tau = value_or(m, "tau", o.tau);
        o.final_time = value_or(m, "final_time", o.final_time);
        o.saves = value_or(m, "saves", o.saves);
        o.diffusion = value_or(m, "diffusion", o.diffusion);
        o.source_width = value_or(m, "source_width", o.source_width);
        o.injection_term = value_or(m, "injection_term", o.injection_term);
        override_bounds(m, o.kappa);
        override_bounds(m, o.mu);
        override_bounds(m, o.phi);
    } else {
        throw ValidationError("config: unknown model.kind '" + c.model_kind + "'");
    }

    // geometry and rbffd
    const auto& g = section(root, "geometry");
    c.nodes.spacing = required<double>(g, "geometry", "spacing");
    c.nodes.oversampling = value_or(g, "oversampling", c.nodes.oversampling);
    c.nodes.stencil_size = value_or(g, "stencil_size", c.nodes.stencil_size);
    c.nodes.relaxation_steps = value_or(g, "relaxation_steps", c.nodes.relaxation_steps);
    const auto& r = section(root, "rbffd");
    c.phs.exponent = value_or(r, "exponent", c.phs.exponent);
    c.phs.degree = value_or(r, "degree", c.phs.degree);
    c.phs.validate();
    c.nodes.polynomial_degree = c.phs.degree;

    // samples
    const auto& s = section(root, "samples");
    if (!s.contains("train") || !s.contains("test"))
        throw ValidationError("config: samples.train and samples.test are required");
    c.train = parse_sample(*s["train"].node(), "samples.train");
    c.test = parse_sample(*s["test"].node(), "samples.test");

    // pod
    const auto& p = section(root, "pod");
    if (!p.contains("K"))
        throw ValidationError("config: missing pod.K");
    const Vec ks = number_array(*p["K"].node(), "pod.K");
    for (Eigen::Index i = 0; i < ks.size(); ++i) {
        if (ks[i] < 1 || ks[i] != std::floor(ks[i]))
            throw ValidationError("config: pod.K entries must be positive integers");
        c.pod_modes.push_back(static_cast<int>(ks[i]));
    }
    c.pod_center = value_or(p, "center", c.pod_center);

    // gp
    const auto& gp = section(root, "gp");
    c.gp.restarts = value_or(gp, "restarts", c.gp.restarts);
    c.gp.isotropic = value_or(gp, "isotropic", c.gp.isotropic);
    c.gp.evaluations_per_start = value_or(gp, "evaluations_per_start", c.gp.evaluations_per_start);
    c.gp.min_length = value_or(gp, "min_length", c.gp.min_length);
    c.gp.max_length = value_or(gp, "max_length", c.gp.max_length);

    // correction
    const auto& cr = section(root, "correction");
    auto& cc = c.correction;
    cc.c = value_or(cr, "c", cc.c);
    cc.lambda = value_or(cr, "lambda", cc.lambda);
    cc.budget = value_or(cr, "budget", cc.budget);
    cc.random_starts = value_or(cr, "random_starts", cc.random_starts);
    cc.joint = value_or(cr, "joint", cc.joint);
    cc.substeps = value_or(cr, "substeps", cc.substeps);
    const auto* law = cr["law"].as_array();
    if (!law || law->empty())
        throw ValidationError("config: correction.law must be a nonempty array of sample tables");
    for (std::size_t i = 0; i < law->size(); ++i)
        c.correction_sets.push_back({"", parse_sample((*law)[i], "correction.law[" + std::to_string(i) + "]")});

    // bayes (optional until estimation)
    if (const auto* b = root["bayes"].as_table()) {
        auto& bc = c.bayes;
        bc.noise_variance = value_or(*b, "noise_variance", bc.noise_variance);
        if (b->contains("beta1"))
            bc.beta1 = value_or(*b, "beta1", 0.0);
        bc.beta2 = value_or(*b, "beta2", bc.beta2);
        bc.iterations = value_or(*b, "iterations", bc.iterations);
        bc.burn_in = value_or(*b, "burn_in", bc.burn_in);
        bc.obs_time = value_or(*b, "obs_time", bc.obs_time);
        bc.correction = value_or(*b, "correction", bc.correction);
        bc.lambda = value_or(*b, "lambda", bc.lambda);
        bc.law_term = value_or(*b, "law_term", bc.law_term);
        if (!(bc.noise_variance > 0.0))
            throw ValidationError("config: bayes.noise_variance must be positive");
    }

    c.reseed(c.seed);

    // cross-checks that need the model
    auto model = c.make_model();
    const auto params = model->params();
    if (c.pod_modes.size() != model->variables().size())
        throw ValidationError("config: pod.K has " + std::to_string(c.pod_modes.size()) + " entries for " +
                              std::to_string(model->variables().size()) + " variables");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < c.correction_sets.size(); ++i) {
        auto& set = c.correction_sets[i];
        const Mat pts = set.law.realize(params, c.seed + 20 + i);
        set.label = "nlaw" + std::to_string(pts.rows());
        if (!labels.insert(set.label).second)
            set.label += "_" + std::to_string(i);
        CorrectionConfig probe = cc;
        probe.theta_law = pts;
        probe.validate(params.size());
    }
    c.train.realize(params, c.seed + 1);
    c.test.realize(params, c.seed + 4);

    for (const char* name : {"model", "geometry", "rbffd", "samples", "pod", "gp", "correction", "bayes"})
        c.sections[name] = canonical(root[name].node());
    return c;
}

RunConfig RunConfig::load(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::reseed(std::uint64_t s)
{
    seed = s;
    nodes.seed = s;
    gp.seed = s + 6;
    correction.seed = s + 10;
    if (!text.empty()) {
        toml::table root = toml::parse(text);
        if (root["seed"].value<std::int64_t>() != static_cast<std::int64_t>(s)) {
            root.insert_or_assign("seed", static_cast<std::int64_t>(s));
            std::ostringstream os;
            os << root << "\n";
            text = os.str();
        }
    }
}

std::unique_ptr<PdeModel> RunConfig::make_model() const
{
    if (model_kind == "allen_cahn")
        return make_allen_cahn(allen_cahn);
    if (model_kind == "kdv")
        return make_kdv(kdv);
    if (model_kind == "flooding")
        return make_flooding(flooding);
    throw ValidationError("config: unknown model.kind '" + model_kind + "'");
}

// ------------------------------------------------------------------- report

const char* ErrorReport::definition()
{
    return "relative error at save time t: ||mean_pred(t) - mean_ref(t)||_2 / ||mean_ref(t)||_2 over X, where "
           "mean_* is the test-set mean field and mean_ref comes from full-order solves; aggregate: "
           "sqrt(sum_t ||mean_pred(t) - mean_ref(t)||^2 / sum_t ||mean_ref(t)||^2); combined: mean of the "
           "per-variable values";
}

const ErrorRow& ErrorReport::row(const std::string& method, const std::string& label,
                                 const std::string& variable) const
{
    for (const auto& r : rows)
        if (r.method == method && r.variable == variable && (method == "GP" || label.empty() || r.label == label))
            return r;
    throw ValidationError("report: no row for " + method + " " + label + " " + variable);
}

void ErrorReport::save(const fs::path& dir) const
{
    fs::create_directories(dir);
    std::vector<std::string> header{"method", "label", "variable"};
    for (double t : times)
        header.push_back("t=" + io::format_double(t));
    header.push_back("aggregate");
    std::vector<std::vector<std::string>> table;
    for (const auto& r : rows) {
        std::vector<std::string> cells{r.method, r.label, r.variable};
        for (Eigen::Index i = 0; i < r.per_time.size(); ++i)
            cells.push_back(io::format_double(r.per_time[i]));
        cells.push_back(io::format_double(r.aggregate));
        table.push_back(std::move(cells));
    }
    io::write_csv(dir / "error_report.csv", header, table);

    std::vector<std::string> ph;
    for (Eigen::Index j = 0; j < test_params.cols(); ++j)
        ph.push_back("theta" + std::to_string(j));
    std::vector<std::vector<double>> pr;
    for (Eigen::Index i = 0; i < test_params.rows(); ++i) {
        std::vector<double> v;
        for (Eigen::Index j = 0; j < test_params.cols(); ++j)
            v.push_back(test_params(i, j));
        pr.push_back(std::move(v));
    }
    io::write_csv(dir / "test_parameters.csv", ph, pr);

    std::ofstream out(dir / "report.txt");
    out << "# " << definition() << "\n";
    out << "# test samples: " << test_params.rows() << "\n";
    out << std::left << std::setw(8) << "method" << std::setw(10) << "label" << std::setw(10) << "variable"
        << "aggregate\n";
    for (const auto& r : rows)
        out << std::setw(8) << r.method << std::setw(10) << (r.label.empty() ? "-" : r.label) << std::setw(10)
            << r.variable << io::format_double(r.aggregate) << "\n";
}

// ------------------------------------------------------------- observations

void Observations::save(const fs::path& path) const
{
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < variable.size(); ++i)
        rows.push_back({variable[i], std::to_string(index[i]),
                        io::format_double(value[static_cast<Eigen::Index>(i)])});
    io::write_csv(path, {"variable", "index", "value"}, rows);
}

Observations Observations::load(const fs::path& path)
{
    if (!fs::exists(path))
        throw ValidationError("observations: cannot open " + path.string());
    const auto t = io::read_csv(path);
    const int cv = t.column("variable"), ci = t.column("index"), cx = t.column("value");
    if (cv < 0 || ci < 0 || cx < 0)
        throw ValidationError("observations: expected columns variable,index,value in " + path.string());
    Observations o;
    o.value.resize(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        o.variable.push_back(t.rows[r][static_cast<std::size_t>(cv)]);
        const double idx = t.number(r, static_cast<std::size_t>(ci));
        if (idx < 0 || idx != std::floor(idx))
            throw ValidationError("observations: bad node index on row " + std::to_string(r + 1));
        o.index.push_back(static_cast<Eigen::Index>(idx));
        o.value[static_cast<Eigen::Index>(r)] = t.number(r, static_cast<std::size_t>(cx));
    }
    if (o.variable.empty())
        throw ValidationError("observations: file is empty");
    return o;
}

// ----------------------------------------------------------------- pipeline

struct Pipeline::Manifest {
    struct Entry {
        std::string key;
        std::vector<std::pair<std::string, std::string>> artifacts; // relative path, hash
    };
    std::map<std::string, Entry> stages;

    void load(const fs::path& path)
    {
        stages.clear();
        if (!fs::exists(path))
            return;
        const auto t = io::read_csv(path);
        for (const auto& r : t.rows) {
            if (r.size() != 4)
                throw RuntimeError("manifest: malformed row in " + path.string());
            auto& e = stages[r[0]];
            e.key = r[1];
            e.artifacts.emplace_back(r[2], r[3]);
        }
    }
    void save(const fs::path& path) const
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& stage : Pipeline::stages()) {
            auto it = stages.find(stage);
            if (it == stages.end())
                continue;
            for (const auto& [a, h] : it->second.artifacts)
                rows.push_back({stage, it->second.key, a, h});
        }
        io::write_csv(path, {"stage", "key", "artifact", "hash"}, rows);
    }
};

const std::vector<std::string>& Pipeline::stages()
{
    static const std::vector<std::string> names{"nodes", "operators", "snapshots", "pod",
                                                "gp",    "correct",   "report"};
    return names;
}

namespace {

std::vector<fs::path> files_in(const fs::path& dir)
{
    std::vector<fs::path> out;
    if (fs::exists(dir))
        for (const auto& e : fs::recursive_directory_iterator(dir))
            if (e.is_regular_file())
                out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// Rethrows with the stage name, keeping the error category.
template <class F>
decltype(auto) staged(const std::string& stage, F&& f)
{
    try {
        return f();
    } catch (const ValidationError& e) {
        throw ValidationError("stage " + stage + ": " + e.what());
    } catch (const RuntimeError& e) {
        throw RuntimeError("stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
        throw RuntimeError("stage " + stage + ": " + e.what());
    }
}

Vec input_of(const Vec& theta, double t)
{
    Vec x(theta.size() + 1);
    x << theta, t;
    return x;
}

} // namespace

Pipeline::Pipeline(RunConfig config, PipelineOptions options)
    : cfg_(std::move(config)), opt_(options), model_(cfg_.make_model()), manifest_(std::make_unique<Manifest>())
{
    const auto& s = cfg_.sections;
    const std::string seed = std::to_string(cfg_.seed);
    keys_["nodes"] = hash_text({"nodes", s.at("model"), s.at("geometry"), s.at("rbffd"), seed});
    keys_["operators"] = hash_text({keys_["nodes"], s.at("rbffd")});
    keys_["snapshots"] = hash_text({keys_["operators"], s.at("model"), s.at("samples")});
    keys_["pod"] = hash_text({keys_["snapshots"], s.at("pod")});
    keys_["gp"] = hash_text({keys_["pod"], s.at("gp")});
    keys_["correct"] = hash_text({keys_["gp"], s.at("correction")});
    keys_["report"] = hash_text({keys_["correct"]});
    fs::create_directories(dir());
    manifest_->load(dir() / "manifest.csv");
    std::ofstream(dir() / "config.toml") << cfg_.text;
}

Pipeline::~Pipeline() = default;

void Pipeline::note(const std::string& msg) const
{
    if (opt_.log)
        *opt_.log << "[" << cfg_.experiment << "] " << msg << std::endl;
}

bool Pipeline::fresh(const std::string& stage)
{
    auto it = manifest_->stages.find(stage);
    if (it == manifest_->stages.end() || it->second.key != keys_.at(stage))
        return false;
    for (const auto& [rel, h] : it->second.artifacts) {
        const fs::path p = dir() / rel;
        if (!fs::exists(p) || io::hex(io::hash_file(p)) != h) {
            const std::string msg = "stale artifact " + rel + " (hash mismatch)";
            if (!opt_.recompute_stale)
                throw RuntimeError(msg);
            note("stage " + stage + ": " + msg + ", recomputing");
            return false;
        }
    }
    return true;
}

void Pipeline::record(const std::string& stage, const std::vector<fs::path>& artifacts)
{
    Manifest::Entry e;
    e.key = keys_.at(stage);
    for (const auto& a : artifacts)
        e.artifacts.emplace_back(fs::relative(a, dir()).generic_string(), io::hex(io::hash_file(a)));
    manifest_->stages[stage] = std::move(e);
    manifest_->save(dir() / "manifest.csv");
}

const NodeSet& Pipeline::nodes()
{
    if (nodes_)
        return *nodes_;
    return staged("nodes", [&]() -> const NodeSet& {
        const fs::path path = dir() / "nodes" / "nodes.csv";
        const Domain domain = model_->domain();
        const double period = domain.kind() == DomainKind::PeriodicInterval ? domain.period() : 0.0;
        if (fresh("nodes")) {
            nodes_ = std::make_shared<NodeSet>(
                NodeSet::load_csv(path, domain.dimension(), period, cfg_.nodes.stencil_size));
        } else {
            note("generating nodes");
            nodes_ = std::make_shared<NodeSet>(generate_nodes(domain, cfg_.nodes));
            fs::create_directories(path.parent_path());
            nodes_->save_csv(path);
            record("nodes", {path});
        }
        return *nodes_;
    });
}

const Discretization& Pipeline::discretization()
{
    if (disc_)
        return *disc_;
    nodes();
    auto ns = nodes_;
    return staged("operators", [&]() -> const Discretization& {
        const bool ok = fresh("operators");
        if (!ok)
            note("assembling operators");
        disc_ = make_discretization(ns, cfg_.phs, model_->required_ops());
        if (!ok) {
            const fs::path d = dir() / "operators";
            fs::create_directories(d);
            std::vector<fs::path> files;
            for (const auto& [op, so] : disc_->ops) {
                files.push_back(d / (op_name(op) + ".coo.csv"));
                save_coo(so.matrix, files.back());
            }
            record("operators", files);
        }
        return *disc_;
    });
}

const SnapshotSet& Pipeline::training()
{
    if (!train_)
        (void)testing();
    return *train_;
}

const SnapshotSet& Pipeline::testing()
{
    if (test_)
        return *test_;
    const auto& d = discretization();
    return staged("snapshots", [&]() -> const SnapshotSet& {
        const fs::path tr = dir() / "snapshots" / "train", te = dir() / "snapshots" / "test";
        const auto vars = model_->variables();
        const auto q = model_->params().size();
        if (fresh("snapshots")) {
            train_ = load_snapshots(tr, vars, q);
            test_ = load_snapshots(te, vars, q);
        } else {
            const Mat thetas_train = cfg_.train.realize(model_->params(), cfg_.seed + 1);
            const Mat thetas_test = cfg_.test.realize(model_->params(), cfg_.seed + 4);
            note("solving " + std::to_string(thetas_train.rows()) + " training and " +
                 std::to_string(thetas_test.rows()) + " test parameters");
            train_ = build_snapshots(*model_, d, thetas_train);
            test_ = build_snapshots(*model_, d, thetas_test);
            fs::create_directories(tr);
            fs::create_directories(te);
            save_snapshots(*train_, tr);
            save_snapshots(*test_, te);
            record("snapshots", files_in(dir() / "snapshots"));
        }
        return *test_;
    });
}

const std::vector<PodBasis>& Pipeline::pod()
{
    if (pod_)
        return *pod_;
    const auto& tr = training();
    return staged("pod", [&]() -> const std::vector<PodBasis>& {
        const fs::path d = dir() / "pod";
        const auto vars = model_->variables();
        std::vector<PodBasis> bases;
        if (fresh("pod")) {
            for (const auto& v : vars)
                bases.push_back(PodBasis::load(d, v));
        } else {
            note("fitting POD bases");
            fs::create_directories(d);
            for (std::size_t v = 0; v < vars.size(); ++v) {
                bases.push_back(fit_pod(tr.saved[v], cfg_.pod_modes[v], cfg_.pod_center));
                bases.back().save(d, vars[v]);
            }
            record("pod", files_in(d));
        }
        pod_ = std::move(bases);
        return *pod_;
    });
}

const SurrogateSet& Pipeline::surrogate()
{
    if (surrogate_)
        return *surrogate_;
    const auto& bases = pod();
    const auto& tr = training();
    return staged("gp", [&]() -> const SurrogateSet& {
        const fs::path d = dir() / "gp";
        SurrogateSet s;
        s.variables = model_->variables();
        s.bases = bases;
        auto file = [&](std::size_t v, int k) {
            return d / (s.variables[v] + ".gp." + std::to_string(k) + ".csv");
        };
        if (fresh("gp")) {
            for (std::size_t v = 0; v < s.variables.size(); ++v) {
                std::vector<GpSurrogate> g;
                for (int k = 0; k < bases[v].size(); ++k)
                    g.push_back(GpSurrogate::load(file(v, k)));
                s.gps.push_back(std::move(g));
            }
        } else {
            note("training GP surrogates");
            fs::create_directories(d);
            std::vector<fs::path> files;
            const Mat inputs = tr.inputs();
            for (std::size_t v = 0; v < s.variables.size(); ++v) {
                s.gps.push_back(fit_surrogates(inputs, bases[v].project_rows(tr.saved[v]), cfg_.gp));
                for (int k = 0; k < bases[v].size(); ++k) {
                    files.push_back(file(v, k));
                    s.gps[v][static_cast<std::size_t>(k)].save(files.back());
                }
            }
            record("gp", files);
        }
        surrogate_ = std::move(s);
        return *surrogate_;
    });
}

const std::vector<CorrectionMap>& Pipeline::corrections()
{
    if (maps_)
        return *maps_;
    const auto& s = surrogate();
    const auto& d = discretization();
    const Mat theta_obs = training().thetas;
    return staged("correct", [&]() -> const std::vector<CorrectionMap>& {
        const fs::path root = dir() / "correction";
        const auto q = model_->params().size();
        std::vector<CorrectionMap> maps;
        if (fresh("correct")) {
            for (const auto& set : cfg_.correction_sets)
                maps.push_back(CorrectionMap::load(root / set.label, s.variables, q));
        } else {
            for (std::size_t i = 0; i < cfg_.correction_sets.size(); ++i) {
                const auto& set = cfg_.correction_sets[i];
                CorrectionConfig cc = cfg_.correction;
                cc.theta_law = set.law.realize(model_->params(), cfg_.seed + 20 + i);
                note("optimizing corrections " + set.label);
                maps.push_back(optimize_corrections(*model_, d, s, theta_obs, cc));
                fs::create_directories(root / set.label);
                maps.back().save(root / set.label, s.variables);
                if (maps.back().any_budget_exhausted())
                    note("warning: evaluation budget exhausted for some entries of " + set.label);
            }
            record("correct", files_in(root));
        }
        maps_ = std::move(maps);
        return *maps_;
    });
}

std::size_t Pipeline::correction_index(const std::string& label) const
{
    if (label.empty())
        return cfg_.correction_sets.size() - 1;
    for (std::size_t i = 0; i < cfg_.correction_sets.size(); ++i)
        if (cfg_.correction_sets[i].label == label)
            return i;
    throw ValidationError("unknown correction set '" + label + "'");
}

SurrogateSet Pipeline::corrected_surrogate(const std::string& label)
{
    const std::size_t i = correction_index(label);
    SurrogateSet s = surrogate();
    attach_corrections(s, corrections()[i]);
    return s;
}

std::vector<Vec> Pipeline::predict(const Vec& theta, double t, const std::string& label, bool corrected)
{
    model_->check_theta(theta);
    SurrogateSet s = corrected ? corrected_surrogate(label) : surrogate();
    std::vector<Vec> out;
    for (std::size_t v = 0; v < s.variables.size(); ++v)
        out.push_back(s.field(v, input_of(theta, t)));
    return out;
}

ErrorReport Pipeline::report()
{
    const auto& te = testing();
    const auto& base = surrogate();
    const auto& maps = corrections();
    return staged("report", [&]() {
        ErrorReport r;
        r.times = te.times;
        r.test_params = te.thetas;
        const auto nt = static_cast<Eigen::Index>(te.times.size());
        const Eigen::Index n = te.thetas.rows();
        const auto& vars = base.variables;
        const Eigen::Index m = static_cast<Eigen::Index>(discretization().num_eval());

        // reference means, per variable: saves x M
        std::vector<Mat> ref(vars.size(), Mat::Zero(nt, m));
        for (std::size_t v = 0; v < vars.size(); ++v)
            for (Eigen::Index i = 0; i < n; ++i)
                ref[v] += te.saved[v].middleRows(i * nt, nt);
        for (auto& x : ref)
            x /= static_cast<double>(n);

        std::vector<std::pair<std::string, std::string>> methods{{"GP", ""}};
        for (const auto& set : cfg_.correction_sets)
            methods.emplace_back("LC", set.label);

        std::vector<std::vector<Mat>> means; // per method, per variable
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            SurrogateSet s = base;
            if (mi > 0)
                attach_corrections(s, maps[mi - 1]);
            std::vector<Mat> mean(vars.size(), Mat::Zero(nt, m));
            for (std::size_t v = 0; v < vars.size(); ++v) {
                std::vector<Mat> partial(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 4)
                for (Eigen::Index i = 0; i < n; ++i) {
                    Mat f(nt, m);
                    for (Eigen::Index si = 0; si < nt; ++si)
                        f.row(si) = s.field(v, input_of(te.thetas.row(i).transpose(),
                                                        te.times[static_cast<std::size_t>(si)]))
                                        .transpose();
                    partial[static_cast<std::size_t>(i)] = std::move(f);
                }
                // summed in order so the result does not depend on the thread count
                for (const auto& f : partial)
                    mean[v] += f;
                mean[v] /= static_cast<double>(n);
            }
            ErrorRow combined{methods[mi].first, methods[mi].second, "combined", Vec::Zero(nt), 0.0};
            for (std::size_t v = 0; v < vars.size(); ++v) {
                ErrorRow row{methods[mi].first, methods[mi].second, vars[v], Vec(nt), 0.0};
                double num = 0.0, den = 0.0;
                for (Eigen::Index si = 0; si < nt; ++si) {
                    const double a = (mean[v].row(si) - ref[v].row(si)).squaredNorm();
                    const double b = ref[v].row(si).squaredNorm();
                    row.per_time[si] = b > 0.0 ? std::sqrt(a / b) : std::sqrt(a);
                    num += a;
                    den += b;
                }
                row.aggregate = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
                combined.per_time += row.per_time / static_cast<double>(vars.size());
                combined.aggregate += row.aggregate / static_cast<double>(vars.size());
                r.rows.push_back(std::move(row));
            }
            r.rows.push_back(std::move(combined));
            means.push_back(std::move(mean));
        }

        const fs::path d = dir() / "report";
        r.save(d);

        // figure data: mean fields and their errors on X
        const auto& pts = nodes().eval_points();
        for (std::size_t v = 0; v < vars.size(); ++v) {
            std::vector<std::string> header{"x", "y", "t", "reference"};
            for (const auto& [mname, label] : methods) {
                const std::string tag = mname == "GP" ? "gp" : "lc_" + label;
                header.push_back(tag);
                header.push_back(tag + "_error");
            }
            std::vector<std::vector<double>> rows;
            for (Eigen::Index si = 0; si < nt; ++si)
                for (Eigen::Index j = 0; j < m; ++j) {
                    std::vector<double> row{pts[static_cast<std::size_t>(j)].x(), pts[static_cast<std::size_t>(j)].y(),
                                            te.times[static_cast<std::size_t>(si)], ref[v](si, j)};
                    for (const auto& mean : means) {
                        row.push_back(mean[v](si, j));
                        row.push_back(mean[v](si, j) - ref[v](si, j));
                    }
                    rows.push_back(std::move(row));
                }
            io::write_csv(d / (vars[v] + ".mean_fields.csv"), header, rows);
        }

        // posterior histogram data when a chain is present
        const fs::path chain = dir() / "estimate" / "chain.csv";
        if (fs::exists(chain)) {
            const auto t = io::read_csv(chain);
            const int burn = t.column("burn_in");
            std::vector<std::vector<std::string>> hist;
            for (std::size_t c = 1; c + 2 < t.header.size(); ++c) {
                std::vector<double> xs;
                for (std::size_t i = 0; i < t.rows.size(); ++i)
                    if (burn < 0 || t.rows[i][static_cast<std::size_t>(burn)] == "0")
                        xs.push_back(t.number(i, c));
                if (xs.empty())
                    continue;
                const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
                const int bins = 40;
                const double w = std::max(*hi - *lo, 1e-300) / bins;
                std::vector<int> counts(bins, 0);
                for (double x : xs)
                    ++counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>((x - *lo) / w)))];
                for (int b = 0; b < bins; ++b)
                    hist.push_back({t.header[c], io::format_double(*lo + b * w), io::format_double(*lo + (b + 1) * w),
                                    std::to_string(counts[static_cast<std::size_t>(b)])});
            }
            io::write_csv(d / "posterior_hist.csv", {"parameter", "lower", "upper", "count"}, hist);
        }
        record("report", files_in(d));
        return r;
    });
}

ErrorReport Pipeline::run()
{
    nodes();
    discretization();
    testing();
    pod();
    surrogate();
    corrections();
    return report();
}

double Pipeline::obs_time() const
{
    const auto times = model_->time_grid().save_times();
    const int n = static_cast<int>(times.size());
    const int i = cfg_.bayes.obs_time < 0 ? n + cfg_.bayes.obs_time : cfg_.bayes.obs_time;
    if (i < 0 || i >= n)
        throw ValidationError("bayes.obs_time " + std::to_string(cfg_.bayes.obs_time) + " outside the " +
                              std::to_string(n) + " save times");
    return times[static_cast<std::size_t>(i)];
}

Observations Pipeline::synthesize_observations(const Vec& theta, std::optional<std::uint64_t> seed)
{
    model_->check_theta(theta);
    const auto& d = discretization();
    const double t = obs_time();
    const auto traj = model_->solve(theta, d);
    const auto times = model_->time_grid().save_times();
    const auto si = static_cast<Eigen::Index>(std::find(times.begin(), times.end(), t) - times.begin());
    std::mt19937_64 rng(seed.value_or(cfg_.seed + 13));
    std::normal_distribution<double> noise(0.0, std::sqrt(cfg_.bayes.noise_variance));
    Observations o;
    const auto vars = model_->variables();
    std::vector<double> values;
    for (std::size_t v = 0; v < vars.size(); ++v)
        for (Eigen::Index j = 0; j < traj.saved[v].cols(); ++j) {
            o.variable.push_back(vars[v]);
            o.index.push_back(j);
            values.push_back(traj.saved[v](si, j) + noise(rng));
        }
    o.value = Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
    return o;
}

InverseProblem Pipeline::inverse_problem(const Observations& obs)
{
    const auto vars = model_->variables();
    const auto m = static_cast<Eigen::Index>(discretization().num_eval());
    InverseProblem p;
    p.observations = obs.value;
    for (std::size_t i = 0; i < obs.variable.size(); ++i) {
        const auto it = std::find(vars.begin(), vars.end(), obs.variable[i]);
        if (it == vars.end())
            throw ValidationError("observations: unknown variable '" + obs.variable[i] + "'");
        if (obs.index[i] >= m)
            throw ValidationError("observations: node index " + std::to_string(obs.index[i]) + " outside X");
        p.mask.push_back(static_cast<Eigen::Index>(it - vars.begin()) * m + obs.index[i]);
    }
    p.noise_variance = cfg_.bayes.noise_variance;
    p.beta1 = cfg_.bayes.beta1;
    p.beta2 = cfg_.bayes.beta2;
    const auto params = model_->params();
    p.lower.resize(static_cast<Eigen::Index>(params.size()));
    p.upper.resize(p.lower.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        p.lower[static_cast<Eigen::Index>(i)] = params[i].lower;
        p.upper[static_cast<Eigen::Index>(i)] = params[i].upper;
    }

    auto s = std::make_shared<SurrogateSet>(corrected_surrogate(cfg_.bayes.correction));
    const double t = obs_time();
    p.forward = [s, t, m](const Vec& theta) {
        Vec out(m * static_cast<Eigen::Index>(s->variables.size()));
        for (std::size_t v = 0; v < s->variables.size(); ++v)
            out.segment(static_cast<Eigen::Index>(v) * m, m) = s->field(v, input_of(theta, t));
        return out;
    };
    if (cfg_.bayes.law_term && cfg_.bayes.beta2 > 0.0) {
        auto reduced = std::make_shared<std::vector<ReducedBasis>>();
        for (const auto& b : s->bases)
            reduced->push_back(ReducedBasis::make(b, discretization()));
        const PdeModel* model = model_.get();
        const Discretization* d = &*disc_;
        const double lambda = cfg_.bayes.lambda;
        p.law_loss = [s, reduced, model, d, lambda](const Vec& theta) {
            return surrogate_law_loss(*model, *d, *s, *reduced, theta, lambda);
        };
    }
    return p;
}

PosteriorChain Pipeline::estimate(const Observations& obs, std::optional<std::uint64_t> seed)
{
    InverseProblem p = inverse_problem(obs);
    return staged("estimate", [&]() {
        McmcOptions o;
        o.iterations = cfg_.bayes.iterations;
        o.burn_in_fraction = cfg_.bayes.burn_in;
        o.seed = seed.value_or(cfg_.seed + 12);
        for (const auto& ps : model_->params())
            o.names.push_back(ps.name);
        note("sampling " + std::to_string(o.iterations) + " iterations");
        PosteriorChain c = run_mh(p, o);
        const fs::path d = dir() / "estimate";
        fs::create_directories(d);
        c.save(d);
        obs.save(d / "observations.csv");
        return c;
    });
}

ErrorReport make_report(const fs::path& run_dir)
{
    const fs::path cfg = run_dir / "config.toml";
    if (!fs::exists(cfg))
        throw RuntimeError("incomplete run " + run_dir.string() + ": missing config.toml");
    std::stringstream ss;
    ss << std::ifstream(cfg).rdbuf();
    RunConfig c = RunConfig::parse(ss.str());
    c.output = run_dir;

    std::vector<std::string> missing;
    if (!fs::exists(run_dir / "manifest.csv")) {
        missing.push_back("manifest.csv");
    } else {
        const auto t = io::read_csv(run_dir / "manifest.csv");
        std::set<std::string> have;
        for (const auto& r : t.rows) {
            have.insert(r[0]);
            if (r[0] != "report" && !fs::exists(run_dir / r[2]))
                missing.push_back(r[2]);
        }
        for (const auto& s : Pipeline::stages())
            if (s != "report" && !have.count(s))
                missing.push_back("stage " + s);
    }
    if (!missing.empty()) {
        std::string msg = "incomplete run " + run_dir.string() + "; missing:";
        for (const auto& m : missing)
            msg += " " + m;
        throw RuntimeError(msg);
    }
    PipelineOptions o;
    o.recompute_stale = false;
    Pipeline p(std::move(c), o);
    return p.report();
}

std::vector<std::string> check_correction_invariants(const CorrectionMap& map, double slack)
{
    std::vector<std::string> bad;
    for (std::size_t i = 0; i < map.entries().size(); ++i) {
        const auto& e = map.entries()[i];
        if (e.skipped)
            continue;
        std::ostringstream where;
        where << "entry " << i << " (t=" << e.t << ")";
        if (e.loss > e.loss_zero)
            bad.push_back(where.str() + ": loss " + io::format_double(e.loss) + " > loss at zero " +
                          io::format_double(e.loss_zero));
        for (Eigen::Index k = 0; k < e.omega.size(); ++k)
            if (std::abs(e.omega[k]) > e.bound[k] + slack)
                bad.push_back(where.str() + ": |omega_" + std::to_string(k) + "| exceeds its bound");
    }
    return bad;
}

} // namespace lawgp
