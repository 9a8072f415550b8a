#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ape/engine.hpp"
#include "ape/refine.hpp"
#include "ape/task.hpp"

namespace ape::search {

/// Inclusive linear grid `lo:hi:steps`.
struct Grid {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t steps = 1;

    std::vector<double> values() const;
    static Grid parse(const std::string& spec);
    static Grid point(double x) { return {x, x, 1}; }
};

struct SearchPoint {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    double accuracy = 0.0;
};

enum class Protocol { Validation, LeaveOneShotOut };

struct SearchResult {
    SearchPoint best;
    std::vector<SearchPoint> evaluated;
    Protocol protocol = Protocol::Validation;
};

std::string to_string(Protocol p);

/// Accuracy (%) of APE with `cfg` on the task's validation split, or, when the
/// task has none, averaged over K folds that each hold out shot j of every
/// class and cache the remaining K-1 shots.
double validation_accuracy(const FewShotTask& task, const refine::ChannelMask& mask,
                           const engine::EngineConfig& cfg);

/// Exhaustive search; ties resolve toward smaller alpha, then beta, then gamma.
SearchResult grid_search(const FewShotTask& task, const refine::ChannelMask& mask,
                         const engine::EngineConfig& base, const Grid& alphas, const Grid& betas,
                         const Grid& gammas);

/// Support-set fold `shot`: cache without that shot, queries are the held-out rows.
FewShotTask leave_shot_out(const FewShotTask& task, std::size_t shot);

}  // namespace ape::search
