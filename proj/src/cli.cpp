#include "ape/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "ape/dataio.hpp"
#include "ape/engine.hpp"
#include "ape/error.hpp"
#include "ape/fsutil.hpp"
#include "ape/numkit.hpp"
#include "ape/refine.hpp"
#include "ape/report.hpp"
#include "ape/search.hpp"
#include "ape/trainer.hpp"

namespace ape::cli {

namespace {

constexpr const char* kDefaultAlphaGrid = "0:2:21";
constexpr const char* kDefaultBetaGrid = "1:10:10";

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    bool no_timing = false;

    std::uint64_t effective_seed() const {
        if (seed) return *seed;
        if (const char* env = std::getenv("APE_SEED"); env && *env) {
            try {
                return std::stoull(env);
            } catch (const std::logic_error&) {
                throw UsageError(std::string("APE_SEED is not an integer: ") + env);
            }
        }
        return 0;
    }
};

struct EngineOptions {
    std::optional<double> alpha;
    std::optional<double> beta;
    double gamma = 0.2;
    int kl_sign = 1;
    double kl_temperature = 1.0;
    bool no_renormalize = false;
    std::string alpha_grid = kDefaultAlphaGrid;
    std::string beta_grid = kDefaultBetaGrid;

    void attach(CLI::App* cmd) {
        cmd->add_option("--alpha", alpha, "cache-term weight (grid-searched when omitted)");
        cmd->add_option("--beta", beta, "affinity sharpness (grid-searched when omitted)");
        cmd->add_option("--gamma", gamma, "cache-score smoothing")->capture_default_str();
        cmd->add_option("--kl-sign", kl_sign, "sign of the KL exponent (+1 or -1)")
            ->check(CLI::IsMember({1, -1}))
            ->capture_default_str();
        cmd->add_option("--kl-temperature", kl_temperature, "softmax temperature for F'W'^T")
            ->capture_default_str();
        cmd->add_flag("--no-renormalize", no_renormalize,
                      "keep refined features un-normalized after channel dropping");
        cmd->add_option("--alpha-grid", alpha_grid, "lo:hi:steps used when --alpha is omitted")
            ->capture_default_str();
        cmd->add_option("--beta-grid", beta_grid, "lo:hi:steps used when --beta is omitted")
            ->capture_default_str();
    }
};

search::Grid parse_grid(const std::string& spec) {
    try {
        return search::Grid::parse(spec);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

FewShotTask load(const std::string& path, std::ostream& err) {
    Diagnostics diag;
    FewShotTask task = dataio::load_task(path, &diag);
    for (const auto& w : diag.warnings) err << "warning: " << w << "\n";
    return task;
}

refine::ChannelMask obtain_mask(const FewShotTask& task, const std::string& mask_path,
                                double lambda, std::optional<std::size_t> q) {
    if (!mask_path.empty()) {
        refine::ChannelMask mask = refine::read_mask(mask_path);
        if (mask.d_total != task.d) {
            throw UsageError("mask covers " + std::to_string(mask.d_total) +
                             " channels but the task has D=" + std::to_string(task.d));
        }
        return mask;
    }
    const std::size_t qq = q.value_or(task.d);
    if (qq < 1 || qq > task.d) {
        throw UsageError("--q must lie in [1, " + std::to_string(task.d) + "]");
    }
    return refine::refine_prototypes(task.text_features, lambda, qq);
}

/// Engine config from flags; missing alpha/beta come from the default grid search.
engine::EngineConfig resolve_engine(const FewShotTask& task, const refine::ChannelMask& mask,
                                    const EngineOptions& opts, report::EvalReport& rep) {
    engine::EngineConfig cfg;
    cfg.lambda = mask.lambda;
    cfg.q = mask.q();
    cfg.gamma = opts.gamma;
    cfg.kl_sign = opts.kl_sign;
    cfg.kl_temperature = opts.kl_temperature;
    cfg.renormalize = !opts.no_renormalize;
    try {
        cfg.alpha = opts.alpha.value_or(0.0);
        cfg.beta = opts.beta.value_or(1.0);
        cfg.validate(task.d);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (!opts.alpha || !opts.beta) {
        const auto alphas = opts.alpha ? search::Grid::point(*opts.alpha) : parse_grid(opts.alpha_grid);
        const auto betas = opts.beta ? search::Grid::point(*opts.beta) : parse_grid(opts.beta_grid);
        const auto result =
            search::grid_search(task, mask, cfg, alphas, betas, search::Grid::point(cfg.gamma));
        cfg.alpha = result.best.alpha;
        cfg.beta = result.best.beta;
        rep.add_config("search.protocol", search::to_string(result.protocol));
        rep.add_config("search.alpha_grid", opts.alpha ? "fixed" : opts.alpha_grid);
        rep.add_config("search.beta_grid", opts.beta ? "fixed" : opts.beta_grid);
        rep.add_config("search.best_accuracy", report::format_double(result.best.accuracy));
    }
    return cfg;
}

void echo_engine(report::EvalReport& rep, const engine::EngineConfig& cfg) {
    rep.add_config("lambda", report::format_double(cfg.lambda));
    rep.add_config("q", std::to_string(cfg.q));
    rep.add_config("alpha", report::format_double(cfg.alpha));
    rep.add_config("beta", report::format_double(cfg.beta));
    rep.add_config("gamma", report::format_double(cfg.gamma));
    rep.add_config("kl_sign", std::to_string(cfg.kl_sign));
    rep.add_config("kl_temperature", report::format_double(cfg.kl_temperature));
    rep.add_config("renormalize", cfg.renormalize ? "true" : "false");
}

std::optional<double> accuracy(const DenseMatrix& logits, const FewShotTask& task) {
    if (!task.test_labels) return std::nullopt;
    return numkit::accuracy_percent(logits, *task.test_labels);
}

void finish(report::EvalReport& rep, Clock::time_point start, const CommonOptions& common,
            const std::string& path, std::ostream& out) {
    if (!common.no_timing) {
        rep.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
    }
    const std::string text = rep.format();
    if (!path.empty()) fsutil::atomic_write(path, text);
    out << text;
}

void print_channels(const refine::ChannelMask& mask, std::ostream& out) {
    std::vector<std::size_t> order(mask.d_total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mask.scores[a] < mask.scores[b]; });
    const std::size_t n = std::min<std::size_t>(10, order.size());
    auto line = [&](std::size_t k) {
        out << "  " << std::setw(6) << k << "  J=" << std::setprecision(6) << mask.scores[k]
            << (mask.is_selected(k) ? "  selected" : "") << "\n";
    };
    out << "top " << n << " channels (smallest J):\n";
    for (std::size_t i = 0; i < n; ++i) line(order[i]);
    out << "bottom " << n << " channels (largest J):\n";
    for (std::size_t i = order.size() - n; i < order.size(); ++i) line(order[i]);
}

// Subcommands --------------------------------------------------------------

struct RefineArgs {
    std::string task, out;
    double lambda = 0.7;
    std::optional<std::size_t> q;
};

int cmd_refine(const RefineArgs& a, std::ostream& out, std::ostream& err) {
    const FewShotTask task = load(a.task, err);
    const std::size_t q = a.q.value_or(task.d);
    if (q < 1 || q > task.d) {
        throw UsageError("--q " + std::to_string(q) + " outside [1, " + std::to_string(task.d) + "]");
    }
    if (a.lambda < 0.0 || a.lambda > 1.0) throw UsageError("--lambda must lie in [0, 1]");
    const auto mask = refine::refine_prototypes(task.text_features, a.lambda, q);
    refine::write_mask(a.out, mask);
    out << "refined " << q << " of " << task.d << " channels (lambda=" << a.lambda << ") -> "
        << a.out << "\n";
    print_channels(mask, out);
    return kOk;
}

struct InferArgs {
    std::string task, mask, report, logits;
    double lambda = 0.7;
    std::optional<std::size_t> q;
    EngineOptions engine;
};

int cmd_infer(const InferArgs& a, const CommonOptions& common, std::ostream& out,
              std::ostream& err) {
    const auto start = Clock::now();
    const FewShotTask task = load(a.task, err);
    const auto mask = obtain_mask(task, a.mask, a.lambda, a.q);
    report::EvalReport rep;
    rep.add_config("command", "infer");
    rep.add_config("task", a.task);
    rep.add_config("mask", a.mask.empty() ? "<computed>" : a.mask);
    rep.add_config("seed", std::to_string(common.effective_seed()));
    const auto cfg = resolve_engine(task, mask, a.engine, rep);
    echo_engine(rep, cfg);

    const DenseMatrix zs = engine::zero_shot_logits(task.test_features, task.text_features);
    const DenseMatrix tip = engine::tip_adapter_logits(task, cfg.alpha, cfg.beta);
    const DenseMatrix ape = engine::ape_logits(task, mask, cfg);
    rep.rows.push_back({"zero-shot", 0, 0, accuracy(zs, task)});
    rep.rows.push_back({"tip-adapter", 0, 0, accuracy(tip, task)});
    rep.rows.push_back({"ape", 0, 0, accuracy(ape, task)});
    if (!task.test_labels) {
        const std::string path = a.logits.empty() ? a.report + ".logits.apef" : a.logits;
        dataio::write_matrix(path, ape);
        rep.add_config("logits", path);
        err << "note: task has no test_labels; APE logits written to " << path << "\n";
    }
    finish(rep, start, common, a.report, out);
    return kOk;
}

struct TrainArgs {
    std::string task, mask, report, out;
    double lambda = 0.2;
    std::optional<std::size_t> q;
    EngineOptions engine;
    trainer::OptimConfig optim;
};

std::vector<std::string> history_lines(const trainer::TrainHistory& h) {
    std::vector<std::string> lines;
    std::ostringstream head;
    head << std::setw(6) << "epoch" << std::setw(14) << "loss" << std::setw(12) << "support(%)"
         << std::setw(10) << "test(%)" << std::setw(14) << "lr";
    lines.push_back(head.str());
    auto acc = [](std::optional<double> x) {
        std::ostringstream os;
        if (x) os << std::fixed << std::setprecision(2) << *x; else os << "-";
        return os.str();
    };
    {
        std::ostringstream os;
        os << std::setw(6) << 0 << std::setw(14) << "-" << std::setw(12) << std::fixed
           << std::setprecision(2) << h.initial_support_accuracy << std::setw(10)
           << acc(h.initial_test_accuracy) << std::setw(14) << "-";
        lines.push_back(os.str());
    }
    for (const auto& e : h.epochs) {
        std::ostringstream os;
        os << std::setw(6) << e.epoch << std::setw(14) << std::setprecision(8) << e.loss
           << std::setw(12) << std::fixed << std::setprecision(2) << e.support_accuracy
           << std::setw(10) << acc(e.test_accuracy) << std::setw(14) << std::scientific
           << std::setprecision(4) << e.lr;
        lines.push_back(os.str());
    }
    return lines;
}

int cmd_train(TrainArgs a, const CommonOptions& common, std::ostream& out, std::ostream& err) {
    const auto start = Clock::now();
    const FewShotTask task = load(a.task, err);
    const auto mask = obtain_mask(task, a.mask, a.lambda, a.q);
    a.optim.seed = common.effective_seed();
    try {
        a.optim.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    report::EvalReport rep;
    rep.add_config("command", "train");
    rep.add_config("task", a.task);
    rep.add_config("mask", a.mask.empty() ? "<computed>" : a.mask);
    rep.add_config("seed", std::to_string(a.optim.seed));
    const auto cfg = resolve_engine(task, mask, a.engine, rep);
    echo_engine(rep, cfg);
    rep.add_config("lr", report::format_double(a.optim.lr));
    rep.add_config("epochs", std::to_string(a.optim.epochs));
    rep.add_config("batch_size", std::to_string(a.optim.batch_size));
    rep.add_config("weight_decay", report::format_double(a.optim.weight_decay));
    rep.add_config("adam_beta1", report::format_double(a.optim.beta1));
    rep.add_config("adam_beta2", report::format_double(a.optim.beta2));
    rep.add_config("adam_eps", report::format_double(a.optim.eps));

    const auto result = trainer::train(task, mask, cfg, a.optim);
    const DenseMatrix zs = engine::zero_shot_logits(task.test_features, task.text_features);
    const DenseMatrix ape = engine::ape_logits(task, mask, cfg);
    const DenseMatrix ape_t = trainer::forward(result.state, task.test_features, cfg);
    rep.rows.push_back({"zero-shot", 0, 0, accuracy(zs, task)});
    rep.rows.push_back({"ape", 0, 0, accuracy(ape, task)});
    rep.rows.push_back({"ape-t", a.optim.epochs, trainer::param_count(task.c, mask.q(), task.k),
                        accuracy(ape_t, task)});
    rep.sections.emplace_back("history", history_lines(result.history));
    if (!a.out.empty()) {
        trainer::write_checkpoint(a.out, result.state, cfg);
        rep.add_config("checkpoint", a.out);
    }
    finish(rep, start, common, a.report, out);
    return kOk;
}

struct SearchArgs {
    std::string task, mask, report;
    double lambda = 0.7;
    std::optional<std::size_t> q;
    std::string alpha_grid = kDefaultAlphaGrid;
    std::string beta_grid = kDefaultBetaGrid;
    std::string gamma_grid;
    double gamma = 0.2;
    int kl_sign = 1;
    double kl_temperature = 1.0;
    bool no_renormalize = false;
};

int cmd_search(const SearchArgs& a, const CommonOptions& common, std::ostream& out,
               std::ostream& err) {
    const auto start = Clock::now();
    const FewShotTask task = load(a.task, err);
    const auto mask = obtain_mask(task, a.mask, a.lambda, a.q);
    const auto alphas = parse_grid(a.alpha_grid);
    const auto betas = parse_grid(a.beta_grid);
    const auto gammas = a.gamma_grid.empty() ? search::Grid::point(a.gamma) : parse_grid(a.gamma_grid);
    engine::EngineConfig base;
    base.lambda = mask.lambda;
    base.q = mask.q();
    base.gamma = a.gamma;
    base.kl_sign = a.kl_sign;
    base.kl_temperature = a.kl_temperature;
    base.renormalize = !a.no_renormalize;
    if (!task.val_features && task.k < 2) {
        throw UsageError("search needs a validation split or K >= 2 for leave-one-shot-out");
    }
    const auto result = search::grid_search(task, mask, base, alphas, betas, gammas);

    report::EvalReport rep;
    rep.add_config("command", "search");
    rep.add_config("task", a.task);
    rep.add_config("mask", a.mask.empty() ? "<computed>" : a.mask);
    rep.add_config("seed", std::to_string(common.effective_seed()));
    rep.add_config("alpha_grid", a.alpha_grid);
    rep.add_config("beta_grid", a.beta_grid);
    rep.add_config("gamma_grid", a.gamma_grid.empty() ? "fixed" : a.gamma_grid);
    rep.add_config("protocol", search::to_string(result.protocol));
    engine::EngineConfig best = base;
    best.alpha = result.best.alpha;
    best.beta = result.best.beta;
    best.gamma = result.best.gamma;
    echo_engine(rep, best);

    std::vector<std::string> grid_lines;
    for (const auto& p : result.evaluated) {
        std::ostringstream os;
        os << "alpha=" << report::format_double(p.alpha) << " beta=" << report::format_double(p.beta)
           << " gamma=" << report::format_double(p.gamma) << " acc=" << std::fixed
           << std::setprecision(4) << p.accuracy;
        grid_lines.push_back(os.str());
    }
    rep.sections.emplace_back("grid", grid_lines);
    rep.sections.emplace_back(
        "best", std::vector<std::string>{
                    "best.alpha = " + report::format_double(result.best.alpha),
                    "best.beta = " + report::format_double(result.best.beta),
                    "best.gamma = " + report::format_double(result.best.gamma),
                    "best.validation_acc = " + report::format_double(result.best.accuracy)});
    rep.rows.push_back({"validation", 0, 0, result.best.accuracy});
    finish(rep, start, common, a.report, out);
    return kOk;
}

struct SynthArgs {
    dataio::SyntheticSpec spec;
    std::string out;
};

int cmd_synth(SynthArgs a, const CommonOptions& common, std::ostream& out) {
    a.spec.seed = common.effective_seed();
    FewShotTask task;
    try {
        task = dataio::gen_synthetic(a.spec);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const std::filesystem::path manifest = std::filesystem::path(a.out) / "task.txt";
    std::error_code ec;
    std::filesystem::create_directories(a.out, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create directory " + a.out + ": " + ec.message());
    dataio::save_task(manifest, task);
    out << "wrote " << manifest.string() << " (C=" << task.c << " K=" << task.k << " D=" << task.d
        << " test=" << task.test_features.rows() << " sigma=" << a.spec.noise_sigma
        << " seed=" << a.spec.seed << ")\n";
    return kOk;
}

struct EvalArgs {
    std::string ckpt, task, report;
};

int cmd_eval(const EvalArgs& a, const CommonOptions& common, std::ostream& out,
             std::ostream& err) {
    const auto start = Clock::now();
    const trainer::Checkpoint ck = trainer::read_checkpoint(a.ckpt);
    const FewShotTask task = load(a.task, err);
    if (task.c != ck.state.c) {
        throw UsageError("checkpoint has C=" + std::to_string(ck.state.c) + " but task has C=" +
                         std::to_string(task.c));
    }
    if (task.d != ck.state.d()) {
        throw UsageError("checkpoint has D=" + std::to_string(ck.state.d()) + " but task has D=" +
                         std::to_string(task.d));
    }
    report::EvalReport rep;
    rep.add_config("command", "eval");
    rep.add_config("checkpoint", a.ckpt);
    rep.add_config("task", a.task);
    rep.add_config("seed", std::to_string(common.effective_seed()));
    rep.add_config("step", std::to_string(ck.state.step));
    echo_engine(rep, ck.cfg);
    const DenseMatrix zs = engine::zero_shot_logits(task.test_features, ck.state.text_features);
    const DenseMatrix ape_t = trainer::forward(ck.state, task.test_features, ck.cfg);
    rep.rows.push_back({"zero-shot", 0, 0, accuracy(zs, task)});
    rep.rows.push_back({"ape-t", 0, ck.state.learnable_parameters(), accuracy(ape_t, task)});
    finish(rep, start, common, a.report, out);
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-shot classification over precomputed vision-language embeddings", "ape"};
    app.require_subcommand(1);
    CommonOptions common;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "RNG seed (falls back to APE_SEED, then 0)");
    app.add_flag("--no-timing", common.no_timing, "omit wall time so reports are byte-stable");
    // Let --seed / --no-timing also follow the subcommand name.
    app.fallthrough();

    RefineArgs refine_args;
    auto* refine_cmd = app.add_subcommand("refine", "select refined channels and write a mask");
    refine_cmd->add_option("--task", refine_args.task, "task manifest")->required();
    refine_cmd->add_option("--lambda", refine_args.lambda, "similarity/variance blend")->capture_default_str();
    refine_cmd->add_option("--q", refine_args.q, "channels to keep (default D)");
    refine_cmd->add_option("--out", refine_args.out, "mask file")->required();

    InferArgs infer_args;
    auto* infer_cmd = app.add_subcommand("infer", "training-free zero-shot / Tip-Adapter / APE");
    infer_cmd->add_option("--task", infer_args.task, "task manifest")->required();
    infer_cmd->add_option("--mask", infer_args.mask, "mask file (refined on the fly if omitted)");
    infer_cmd->add_option("--lambda", infer_args.lambda, "blend used when --mask is omitted")->capture_default_str();
    infer_cmd->add_option("--q", infer_args.q, "channels used when --mask is omitted");
    infer_args.engine.attach(infer_cmd);
    infer_cmd->add_option("--report", infer_args.report, "report file")->required();
    infer_cmd->add_option("--logits", infer_args.logits, "logits output when the task has no labels");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train category residuals and cache scores");
    train_cmd->add_option("--task", train_args.task, "task manifest")->required();
    train_cmd->add_option("--mask", train_args.mask, "mask file (refined on the fly if omitted)");
    train_cmd->add_option("--lambda", train_args.lambda, "blend used when --mask is omitted")->capture_default_str();
    train_cmd->add_option("--q", train_args.q, "channels used when --mask is omitted");
    train_args.engine.attach(train_cmd);
    train_cmd->add_option("--lr", train_args.optim.lr, "base learning rate")->capture_default_str();
    train_cmd->add_option("--epochs", train_args.optim.epochs, "epochs")->capture_default_str();
    train_cmd->add_option("--batch-size", train_args.optim.batch_size, "batch size")->capture_default_str();
    train_cmd->add_option("--weight-decay", train_args.optim.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    train_cmd->add_option("--out", train_args.out, "checkpoint file");
    train_cmd->add_option("--report", train_args.report, "report file")->required();

    SearchArgs search_args;
    auto* search_cmd = app.add_subcommand("search", "grid-search alpha, beta (and gamma)");
    search_cmd->add_option("--task", search_args.task, "task manifest")->required();
    search_cmd->add_option("--mask", search_args.mask, "mask file (refined on the fly if omitted)");
    search_cmd->add_option("--lambda", search_args.lambda, "blend used when --mask is omitted")->capture_default_str();
    search_cmd->add_option("--q", search_args.q, "channels used when --mask is omitted");
    search_cmd->add_option("--alpha-grid", search_args.alpha_grid, "lo:hi:steps")->capture_default_str();
    search_cmd->add_option("--beta-grid", search_args.beta_grid, "lo:hi:steps")->capture_default_str();
    search_cmd->add_option("--gamma-grid", search_args.gamma_grid, "lo:hi:steps (default: --gamma only)");
    search_cmd->add_option("--gamma", search_args.gamma, "fixed gamma when no gamma grid")->capture_default_str();
    search_cmd->add_option("--kl-sign", search_args.kl_sign, "sign of the KL exponent")
        ->check(CLI::IsMember({1, -1}));
    search_cmd->add_option("--kl-temperature", search_args.kl_temperature, "softmax temperature");
    search_cmd->add_flag("--no-renormalize", search_args.no_renormalize, "skip renormalization");
    search_cmd->add_option("--report", search_args.report, "report file");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic task");
    synth_cmd->add_option("--c", synth_args.spec.c, "classes")->capture_default_str();
    synth_cmd->add_option("--k", synth_args.spec.k, "shots per class")->capture_default_str();
    synth_cmd->add_option("--d", synth_args.spec.d, "channels")->capture_default_str();
    synth_cmd->add_option("--n-test", synth_args.spec.n_test_per_class, "test samples per class")
        ->capture_default_str();
    synth_cmd->add_option("--sigma", synth_args.spec.noise_sigma, "per-channel noise")->capture_default_str();
    synth_cmd->add_option("--modality-gap", synth_args.spec.modality_gap,
                          "text-to-image center offset per channel")
        ->capture_default_str();
    synth_cmd->add_option("--out", synth_args.out, "output directory")->required();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on another task");
    eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--task", eval_args.task, "task manifest sharing C and class order")->required();
    eval_cmd->add_option("--report", eval_args.report, "report file")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    if (seed_opt->count() > 0) common.seed = seed_value;

    try {
        if (*refine_cmd) return cmd_refine(refine_args, out, err);
        if (*infer_cmd) return cmd_infer(infer_args, common, out, err);
        if (*train_cmd) return cmd_train(train_args, common, out, err);
        if (*search_cmd) return cmd_search(search_args, common, out, err);
        if (*synth_cmd) return cmd_synth(synth_args, common, out);
        if (*eval_cmd) return cmd_eval(eval_args, common, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}

}  // namespace ape::cli
