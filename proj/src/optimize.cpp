#include "lawgp/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace lawgp {

namespace {

struct SearchState {
    const std::function<double(const Vec&)>* objective;
    Vec lower, upper;
    std::vector<int> free_dims;
    Vec best_x;
    double best_value = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    int budget = 0;

    Vec to_box(const gsl_vector* z) const
    {
        Vec x = 0.5 * (lower + upper);
        for (std::size_t i = 0; i < free_dims.size(); ++i) {
            int d = free_dims[i];
            double mid = 0.5 * (lower[d] + upper[d]);
            double half = 0.5 * (upper[d] - lower[d]);
            x[d] = std::clamp(mid + half * std::sin(gsl_vector_get(z, i)), lower[d], upper[d]);
        }
        return x;
    }

    double evaluate(const Vec& x)
    {
        ++evaluations;
        double v = (*objective)(x);
        if (std::isnan(v))
            v = std::numeric_limits<double>::infinity();
        if (v < best_value) {
            best_value = v;
            best_x = x;
        }
        return v;
    }
};

double gsl_trampoline(const gsl_vector* z, void* params)
{
    auto* s = static_cast<SearchState*>(params);
    double v = s->evaluate(s->to_box(z));
    // GSL's simplex cannot handle infinities
    return std::isfinite(v) ? v : std::numeric_limits<double>::max() / 4;
}

struct MinimizerDeleter {
    void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};
struct VectorDeleter {
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

} // namespace

BoxSearchResult minimize_in_box(const std::function<double(const Vec&)>& objective, const Vec& lower,
                                const Vec& upper, const std::vector<Vec>& starts,
                                const BoxSearchOptions& options)
{
    const Eigen::Index dim = lower.size();
    if (upper.size() != dim)
        throw ValidationError("minimize_in_box: bound size mismatch");
    if (starts.empty())
        throw ValidationError("minimize_in_box: need at least one start point");
    for (Eigen::Index d = 0; d < dim; ++d)
        if (!(upper[d] >= lower[d]))
            throw ValidationError("minimize_in_box: upper bound below lower bound");

    gsl_set_error_handler_off();

    SearchState state;
    state.objective = &objective;
    state.lower = lower;
    state.upper = upper;
    state.budget = options.max_evaluations;
    for (Eigen::Index d = 0; d < dim; ++d)
        if (upper[d] > lower[d])
            state.free_dims.push_back(static_cast<int>(d));

    for (const Vec& s : starts) {
        if (s.size() != dim)
            throw ValidationError("minimize_in_box: start point dimension mismatch");
        state.evaluate(s.cwiseMax(lower).cwiseMin(upper));
    }

    const std::size_t nfree = state.free_dims.size();
    if (nfree > 0) {
        std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> minimizer(
            gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, nfree));
        std::unique_ptr<gsl_vector, VectorDeleter> z(gsl_vector_alloc(nfree));
        std::unique_ptr<gsl_vector, VectorDeleter> step(gsl_vector_alloc(nfree));
        gsl_vector_set_all(step.get(), options.initial_step);

        gsl_multimin_function fn;
        fn.n = nfree;
        fn.f = &gsl_trampoline;
        fn.params = &state;

        const int per_start = std::max<int>(1, (state.budget - state.evaluations) / static_cast<int>(starts.size()));
        for (const Vec& s : starts) {
            if (state.evaluations >= state.budget)
                break;
            for (std::size_t i = 0; i < nfree; ++i) {
                int d = state.free_dims[i];
                double mid = 0.5 * (lower[d] + upper[d]);
                double half = 0.5 * (upper[d] - lower[d]);
                double u = std::clamp((std::clamp(s[d], lower[d], upper[d]) - mid) / half, -1.0, 1.0);
                gsl_vector_set(z.get(), i, std::asin(u));
            }
            gsl_multimin_fminimizer_set(minimizer.get(), &fn, z.get(), step.get());
            const int stop_at = std::min(state.budget, state.evaluations + per_start);
            while (state.evaluations < stop_at) {
                if (gsl_multimin_fminimizer_iterate(minimizer.get()) != GSL_SUCCESS)
                    break;
                double size = gsl_multimin_fminimizer_size(minimizer.get());
                if (gsl_multimin_test_size(size, options.simplex_tolerance) == GSL_SUCCESS)
                    break;
            }
        }
    }

    BoxSearchResult result;
    result.x = state.best_x;
    result.value = state.best_value;
    result.evaluations = state.evaluations;
    result.budget_exhausted = state.evaluations >= state.budget;
    return result;
}

} // namespace lawgp
