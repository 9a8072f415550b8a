#include "ape/search.hpp"

#include <algorithm>
#include <sstream>

#include "ape/error.hpp"
#include "ape/numkit.hpp"

namespace ape::search {

std::vector<double> Grid::values() const {
    require(steps >= 1, ErrorKind::InvalidArgument, "grid must have at least one point");
    require(hi >= lo, ErrorKind::InvalidArgument, "grid upper bound below lower bound");
    std::vector<double> out(steps);
    if (steps == 1) {
        out[0] = lo;
        return out;
    }
    for (std::size_t i = 0; i < steps; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    out.back() = hi;
    return out;
}

Grid Grid::parse(const std::string& spec) {
    std::istringstream is(spec);
    std::string lo, hi, steps;
    const bool ok = std::getline(is, lo, ':') && std::getline(is, hi, ':') &&
                    std::getline(is, steps) && is.peek() == EOF;
    require(ok, ErrorKind::Parse, "grid '" + spec + "' is not lo:hi:steps");
    Grid g;
    try {
        std::size_t used = 0;
        g.lo = std::stod(lo, &used);
        require(used == lo.size(), ErrorKind::Parse, "bad grid bound '" + lo + "'");
        g.hi = std::stod(hi, &used);
        require(used == hi.size(), ErrorKind::Parse, "bad grid bound '" + hi + "'");
        require(!steps.empty() && steps.find_first_not_of("0123456789") == std::string::npos,
                ErrorKind::Parse, "bad grid step count '" + steps + "'");
        g.steps = std::stoull(steps);
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::Parse, "grid '" + spec + "' is not lo:hi:steps");
    }
    require(g.steps >= 1, ErrorKind::InvalidArgument, "grid '" + spec + "' is empty");
    require(g.hi >= g.lo, ErrorKind::InvalidArgument, "grid '" + spec + "' has hi < lo");
    return g;
}

std::string to_string(Protocol p) {
    return p == Protocol::Validation ? "validation" : "leave-one-shot-out";
}

FewShotTask leave_shot_out(const FewShotTask& task, std::size_t shot) {
    require(task.k >= 2, ErrorKind::InvalidArgument,
            "support cross-validation needs K >= 2 shots per class");
    require(shot < task.k, ErrorKind::InvalidArgument, "fold index out of range");
    FewShotTask fold;
    fold.c = task.c;
    fold.k = task.k - 1;
    fold.d = task.d;
    fold.text_features = task.text_features;
    fold.support_features = DenseMatrix(task.c * fold.k, task.d);
    fold.support_labels = DenseMatrix(task.c * fold.k, task.c);
    fold.test_features = DenseMatrix(task.c, task.d);
    std::vector<std::size_t> held_labels(task.c);
    for (std::size_t c = 0; c < task.c; ++c) {
        std::size_t dst = c * fold.k;
        for (std::size_t j = 0; j < task.k; ++j) {
            const auto src = task.support_features.row(c * task.k + j);
            if (j == shot) {
                std::copy(src.begin(), src.end(), fold.test_features.row(c).begin());
                continue;
            }
            std::copy(src.begin(), src.end(), fold.support_features.row(dst).begin());
            fold.support_labels(dst, c) = 1.0;
            ++dst;
        }
        held_labels[c] = c;
    }
    fold.test_labels = held_labels;
    return fold;
}

double validation_accuracy(const FewShotTask& task, const refine::ChannelMask& mask,
                           const engine::EngineConfig& cfg) {
    if (task.val_features) {
        const engine::ApeModel model(task, mask, cfg);
        return numkit::accuracy_percent(model.logits(*task.val_features), *task.val_labels);
    }
    double total = 0.0;
    for (std::size_t shot = 0; shot < task.k; ++shot) {
        const FewShotTask fold = leave_shot_out(task, shot);
        total += numkit::accuracy_percent(engine::ape_logits(fold, mask, cfg), *fold.test_labels);
    }
    return total / static_cast<double>(task.k);
}

SearchResult grid_search(const FewShotTask& task, const refine::ChannelMask& mask,
                         const engine::EngineConfig& base, const Grid& alphas, const Grid& betas,
                         const Grid& gammas) {
    const auto a_values = alphas.values();
    const auto b_values = betas.values();
    const auto g_values = gammas.values();
    require(task.val_features.has_value() || task.k >= 2, ErrorKind::InvalidArgument,
            "grid search without a validation split needs K >= 2");

    SearchResult result;
    result.protocol = task.val_features ? Protocol::Validation : Protocol::LeaveOneShotOut;
    bool have_best = false;
    // Ascending lexicographic sweep with strict improvement keeps the
    // smallest (alpha, beta, gamma) among ties.
    for (double a : a_values) {
        for (double b : b_values) {
            for (double g : g_values) {
                engine::EngineConfig cfg = base;
                cfg.alpha = a;
                cfg.beta = b;
                cfg.gamma = g;
                const SearchPoint p{a, b, g, validation_accuracy(task, mask, cfg)};
                result.evaluated.push_back(p);
                if (!have_best || p.accuracy > result.best.accuracy) {
                    result.best = p;
                    have_best = true;
                }
            }
        }
    }
    return result;
}

}  // namespace ape::search
