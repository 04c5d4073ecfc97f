#pragma once

#include "lawgp/common.hpp"

#include <functional>
#include <vector>

namespace lawgp {

struct BoxSearchOptions {
    int max_evaluations = 2000; // total over all starts
    double simplex_tolerance = 1e-9;
    double initial_step = 0.6; // in the transformed (angle) coordinates
};

struct BoxSearchResult {
    Vec x;
    double value = 0.0;
    int evaluations = 0;
    bool budget_exhausted = false;
};

/// Derivative-free minimization over the box [lower, upper] using the
/// Nelder-Mead simplex (GSL nmsimplex2) on the reparametrization
/// x = mid + half * sin(z), so every trial point is feasible.
///
/// Coordinates with lower == upper are held fixed. Each start point is
/// evaluated before any simplex move and the best point ever evaluated is
/// returned, so the result is never worse than the best start.
BoxSearchResult minimize_in_box(const std::function<double(const Vec&)>& objective, const Vec& lower,
                                const Vec& upper, const std::vector<Vec>& starts,
                                const BoxSearchOptions& options = {});

} // namespace lawgp
