// Parallel kernels against their serial references.

#include "lawgp/lawcorrect.hpp"
#include "lawgp/models.hpp"
#include "lawgp/rbffd.hpp"

#include <benchmark/benchmark.h>

using namespace lawgp;

namespace {

NodeSet star_nodes(double h)
{
    NodeOptions o;
    o.spacing = h;
    return generate_nodes(flooding_domain(), o);
}

void BM_AssembleParallel(benchmark::State& state)
{
    const NodeSet ns = star_nodes(1.0 / static_cast<double>(state.range(0)));
    const std::vector<DiffOp> ops{DiffOp::Laplacian};
    for (auto _ : state)
        benchmark::DoNotOptimize(assemble_operators(ns, PhsConfig{}, ops));
    state.counters["rows"] = static_cast<double>(ns.num_eval());
}

void BM_AssembleSerial(benchmark::State& state)
{
    const NodeSet ns = star_nodes(1.0 / static_cast<double>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(serial::assemble_operator(ns, PhsConfig{}, DiffOp::Laplacian));
    state.counters["rows"] = static_cast<double>(ns.num_eval());
}

struct AllenCahnCase {
    std::unique_ptr<PdeModel> model;
    Discretization disc;
    Mat thetas;

    AllenCahnCase()
    {
        AllenCahnOptions o;
        o.tau = 1e-2;
        o.final_time = 0.2;
        o.saves = 4;
        model = make_allen_cahn(o);
        NodeOptions no;
        no.spacing = 0.1;
        disc = make_discretization(std::make_shared<NodeSet>(generate_nodes(model->domain(), no)), PhsConfig{},
                                   model->required_ops());
        thetas = Vec::LinSpaced(8, 0.05, 0.95);
    }
};

void BM_SnapshotsParallel(benchmark::State& state)
{
    const AllenCahnCase c;
    for (auto _ : state)
        benchmark::DoNotOptimize(build_snapshots(*c.model, c.disc, c.thetas));
}

void BM_SnapshotsSerial(benchmark::State& state)
{
    const AllenCahnCase c;
    for (auto _ : state)
        benchmark::DoNotOptimize(serial::build_snapshots(*c.model, c.disc, c.thetas));
}

struct CorrectionCase : AllenCahnCase {
    Mat obs;
    SurrogateSet s;
    CorrectionConfig cfg;

    CorrectionCase()
    {
        obs.resize(3, 1);
        obs << 1.0 / 6, 0.5, 5.0 / 6;
        const auto snaps = build_snapshots(*model, disc, obs);
        s.variables = model->variables();
        s.bases.push_back(fit_pod(snaps.saved[0], 2));
        GpOptions g;
        g.restarts = 2;
        s.gps.push_back(fit_surrogates(snaps.inputs(), s.bases[0].project_rows(snaps.saved[0]), g));
        cfg.theta_law = Vec::LinSpaced(4, 0.125, 0.875);
        cfg.c = 30.0;
        cfg.budget = 200;
        cfg.random_starts = 1;
        cfg.substeps = 2;
    }
};

void BM_CorrectionsParallel(benchmark::State& state)
{
    const CorrectionCase c;
    for (auto _ : state)
        benchmark::DoNotOptimize(optimize_corrections(*c.model, c.disc, c.s, c.obs, c.cfg));
}

void BM_CorrectionsSerial(benchmark::State& state)
{
    const CorrectionCase c;
    for (auto _ : state)
        benchmark::DoNotOptimize(serial::optimize_corrections(*c.model, c.disc, c.s, c.obs, c.cfg));
}

} // namespace

BENCHMARK(BM_AssembleParallel)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssembleSerial)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SnapshotsParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SnapshotsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorrectionsParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CorrectionsSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
