#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "taskmaml/baseline.hpp"
#include "taskmaml/checkpoint.hpp"
#include "taskmaml/config.hpp"
#include "taskmaml/errors.hpp"
#include "taskmaml/evalharness.hpp"
#include "taskmaml/io.hpp"
#include "taskmaml/meta.hpp"
#include "taskmaml/synthgen.hpp"
#include "taskmaml/taskbank.hpp"

namespace fs = std::filesystem;
using namespace taskmaml;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Raised for mistakes in the invocation itself (exit code 1).
struct UsageError : Error {
    using Error::Error;
};

struct Context {
    fs::path workdir = ".";
    RunConfig config;

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : workdir / path;
    }
    fs::path dataset_dir() const { return resolve(config.paths.dataset); }
    fs::path checkpoint_dir() const { return resolve(config.paths.checkpoint_dir); }
    fs::path report_dir() const { return resolve(config.paths.report_dir); }

    void echo_config(const fs::path& dir, const std::string& name = "effective_config.ini") const {
        io::write_file_atomic(dir / name, to_ini(config));
    }
};

/// Splits leftover `--section.key value` / `--section.key=value` arguments into overrides.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const auto& arg = extras[i];
        if (arg.rfind("--", 0) != 0 || arg.find('.') == std::string::npos) {
            throw UsageError("unexpected argument '" + arg + "'");
        }
        const auto body = arg.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        } else {
            if (i + 1 >= extras.size()) throw UsageError("override '" + arg + "' needs a value");
            out.emplace_back(body, extras[++i]);
        }
    }
    return out;
}

BackboneConfig backbone_for(const RunConfig& config, const Dataset& ds) {
    BackboneConfig b = config.backbone;
    b.input = ds.shape;
    return b;
}

std::string fold_name(const std::string& mode, const std::optional<std::string>& subject) {
    return subject ? mode + "_fold-" + *subject + ".ckpt" : mode + "_full.ckpt";
}

// synth

int cmd_synth(const Context& ctx, const std::string& out_override) {
    const fs::path out = out_override.empty() ? ctx.dataset_dir() : ctx.resolve(out_override);
    const auto ds = generate_bank(ctx.config.synth);
    write_dataset(ds, out, {ctx.config.synth.render_image ? PayloadKind::image_directory : PayloadKind::features_file});
    ctx.echo_config(out);
    std::cout << "wrote " << ds.examples.size() << " examples to " << out.string() << "\n";
    return kExitOk;
}

// train

struct TrainOptions {
    std::string mode;
    std::string fold = "all";
    std::vector<std::string> exclude;
    std::string progress;
};

int cmd_train(const Context& ctx, const TrainOptions& opt) {
    Dataset ds = load_dataset(ctx.dataset_dir());
    if (!opt.exclude.empty()) {
        std::vector<std::string> keep;
        for (const auto& a : opt.exclude) {
            if (!ds.has_attribute(a)) throw UsageError("--exclude-attribute: unknown attribute '" + a + "'");
        }
        for (const auto& a : ds.attributes) {
            if (std::find(opt.exclude.begin(), opt.exclude.end(), a) == opt.exclude.end()) keep.push_back(a);
        }
        if (keep.empty()) throw UsageError("--exclude-attribute removes every attribute");
        ds = subset(ds, ds.subjects, keep);
    }

    std::vector<std::optional<std::string>> folds;
    if (opt.fold == "all") {
        for (const auto& s : ds.subjects) folds.emplace_back(s);
    } else if (opt.fold == "none") {
        folds.emplace_back(std::nullopt);
    } else {
        if (!ds.has_subject(opt.fold)) throw UsageError("--fold: unknown subject '" + opt.fold + "'");
        folds.emplace_back(opt.fold);
    }

    std::ofstream progress_file;
    if (!opt.progress.empty()) {
        const auto p = ctx.resolve(opt.progress);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        progress_file.open(p, std::ios::trunc);
        if (!progress_file) throw Error("cannot open progress file " + p.string());
    }
    std::ostream& progress_out = opt.progress.empty() ? std::cout : progress_file;

    const Backbone net(backbone_for(ctx.config, ds));
    const MetaConfig meta = ctx.config.meta.resolved(ds.attributes.size());
    BaselineConfig base = BaselineConfig::matching(meta);
    base.iterations = ctx.config.baseline.iterations;
    base.batch_per_class = ctx.config.baseline.batch_per_class;

    const fs::path dir = ctx.checkpoint_dir();
    for (const auto& fold : folds) {
        const SplitPlan plan = fold ? enumerate_tasks(ds, *fold) : enumerate_all_tasks(ds);
        const std::string fold_label = fold ? *fold : "none";
        auto sink = [&](const ProgressRecord& r) {
            nlohmann::ordered_json line{{"mode", opt.mode},
                                {"fold", fold_label},
                                {"iteration", r.iteration},
                                {"mean_support_loss", r.mean_support_loss},
                                {"mean_query_loss", r.mean_query_loss},
                                {"wall_ms", r.wall_ms}};
            progress_out << line.dump() << "\n";
        };
        ParameterVector theta;
        if (opt.mode == "meta") {
            TaskBankSource source(ds, plan, meta.shots_train);
            theta = meta_train(net, meta, source, sink);
        } else {
            theta = train_baseline(net, baseline_training_set(ds, plan), base.resolved_iterations(meta), base, sink);
        }
        progress_out.flush();
        Checkpoint ckpt{net.config(), theta, {opt.mode, fold, ds.attributes}};
        save_checkpoint(dir / fold_name(opt.mode, fold), ckpt);
    }
    Context resolved = ctx;
    resolved.config.meta = meta;
    resolved.config.baseline.iterations = base.resolved_iterations(meta);
    resolved.echo_config(dir, "effective_config_" + opt.mode + ".ini");
    std::cerr << "wrote " << folds.size() << " " << opt.mode << " checkpoint(s) to " << dir.string() << "\n";
    return kExitOk;
}

// eval

Checkpoint load_matching(const fs::path& path, const Dataset& ds, const std::string& expected_origin) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.input != ds.shape) {
        throw ShapeError(path.string() + ": checkpoint input " + ckpt.config.input.describe() +
                         " does not match dataset input " + ds.shape.describe());
    }
    if (ckpt.info.origin != expected_origin) {
        throw Error(path.string() + ": expected a " + expected_origin + " checkpoint, found " + ckpt.info.origin);
    }
    return ckpt;
}

struct FoldSet {
    BackboneConfig config;
    FoldParameters params;
};

FoldSet load_folds(const Context& ctx, const Dataset& ds, const std::string& model) {
    FoldSet out;
    for (const auto& s : ds.subjects) {
        auto ckpt = load_matching(ctx.checkpoint_dir() / fold_name(model, s), ds, model);
        if (ckpt.info.held_out_subject != s) {
            throw Error("checkpoint for fold '" + s + "' was trained with a different held-out subject");
        }
        out.config = ckpt.config;
        out.params.emplace(s, std::move(ckpt.params));
    }
    return out;
}

EvalConfig eval_config(const Context& ctx) { return ctx.config.eval; }

int eval_loso(const Context& ctx) {
    const Dataset ds = load_dataset(ctx.dataset_dir());
    const auto meta = load_folds(ctx, ds, "meta");
    const auto base = load_folds(ctx, ds, "baseline");
    const auto meta_layout = Backbone(meta.config).layout()->checksum();
    if (meta_layout != Backbone(base.config).layout()->checksum()) {
        throw ShapeError("meta and baseline checkpoints use different backbone layouts");
    }
    const Backbone net(meta.config);
    const auto comparisons = run_loso(net, ds, meta.params, base.params, eval_config(ctx));
    const fs::path out = ctx.report_dir() / "loso";
    for (const auto& c : comparisons) {
        io::write_file_atomic(out / ("tasks_meta_K" + std::to_string(c.shots) + ".csv"), task_csv(c.meta));
        io::write_file_atomic(out / ("tasks_baseline_K" + std::to_string(c.shots) + ".csv"), task_csv(c.baseline));
    }
    io::write_file_atomic(out / "attribute_table.csv", attribute_table_csv(comparisons));
    io::write_file_atomic(out / "subject_table.csv", subject_table_csv(comparisons));
    io::write_file_atomic(out / "summary.json", summary_json(comparisons));
    ctx.echo_config(out);
    for (const auto& c : comparisons) {
        std::cout << "K=" << c.shots << " meta " << io::format_double(c.meta.grand_mean) << " baseline "
                  << io::format_double(c.baseline.grand_mean) << "\n";
    }
    return kExitOk;
}

int eval_cross_bank(const Context& ctx) {
    const Dataset target = load_dataset(ctx.resolve(ctx.config.paths.target_dataset));
    const auto meta = load_matching(ctx.checkpoint_dir() / fold_name("meta", std::nullopt), target, "meta");
    const auto base = load_matching(ctx.checkpoint_dir() / fold_name("baseline", std::nullopt), target, "baseline");
    if (!(*meta.params.layout() == *base.params.layout())) {
        throw ShapeError("meta and baseline checkpoints use different backbone layouts");
    }
    const Backbone net(meta.config);
    const auto cfg = eval_config(ctx);
    std::vector<ModelComparison> comparisons;
    for (auto k : cfg.k_values) {
        comparisons.push_back({k, cross_bank_eval(net, meta.params, target, meta.info.training_attributes, k, cfg, "meta"),
                               cross_bank_eval(net, base.params, target, base.info.training_attributes, k, cfg,
                                               "baseline")});
    }
    const fs::path out = ctx.report_dir() / "cross_bank";
    for (const auto& c : comparisons) {
        io::write_file_atomic(out / ("tasks_meta_K" + std::to_string(c.shots) + ".csv"), task_csv(c.meta));
        io::write_file_atomic(out / ("tasks_baseline_K" + std::to_string(c.shots) + ".csv"), task_csv(c.baseline));
    }
    io::write_file_atomic(out / "attribute_table.csv", attribute_table_csv(comparisons));
    io::write_file_atomic(out / "subject_table.csv", subject_table_csv(comparisons));
    io::write_file_atomic(out / "summary.json", summary_json(comparisons));
    ctx.echo_config(out);
    for (const auto& c : comparisons) {
        std::cout << "K=" << c.shots << " meta " << io::format_double(c.meta.grand_mean) << " baseline "
                  << io::format_double(c.baseline.grand_mean) << "\n";
    }
    return kExitOk;
}

int eval_sweep(const Context& ctx) {
    const Dataset ds = load_dataset(ctx.dataset_dir());
    const auto cfg = eval_config(ctx);
    const fs::path out = ctx.report_dir() / "sweep";
    for (const std::string model : {"meta", "baseline"}) {
        const auto folds = load_folds(ctx, ds, model);
        const Backbone net(folds.config);
        std::vector<std::vector<SweepPoint>> parts;
        for (const auto& s : ds.subjects) {
            const auto plan = enumerate_tasks(ds, s);
            parts.push_back(gradient_step_sweep(net, folds.params.at(s), ds, plan.test_tasks, cfg.k_values,
                                                ctx.config.sweep_max_steps, cfg));
        }
        io::write_file_atomic(out / ("sweep_" + model + ".csv"), sweep_csv(merge_sweeps(parts)));
    }
    ctx.echo_config(out);
    std::cout << "wrote step curves to " << out.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Context& ctx, const std::string& protocol) {
    if (protocol == "loso") return eval_loso(ctx);
    if (protocol == "cross_bank") return eval_cross_bank(ctx);
    if (protocol == "sweep") return eval_sweep(ctx);
    throw UsageError("unknown protocol '" + protocol + "'");
}

// stats

int cmd_stats(const Context& ctx) {
    const Dataset ds = load_dataset(ctx.dataset_dir());
    std::string csv = "subject,attribute,labeled,positives,positive_fraction\n";
    for (const auto& row : imbalance_stats(ds)) {
        csv += row.task.subject + "," + row.task.attribute + "," + std::to_string(row.labeled) + "," +
               std::to_string(row.positives) + "," + io::format_double(row.positive_fraction) + "\n";
    }
    const fs::path out = ctx.report_dir() / "stats";
    io::write_file_atomic(out / "imbalance.csv", csv);
    ctx.echo_config(out);
    std::cout << "wrote " << out.string() << "/imbalance.csv\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot per-subject attribute detection with model-agnostic meta-learning"};
    app.require_subcommand(1);
    app.allow_extras();

    std::string workdir = ".";
    std::string config_file;
    app.add_option("--workdir", workdir, "Directory that every relative path refers to");
    app.add_option("--config", config_file, "INI run configuration (relative to --workdir)");

    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic task bank");
    synth->add_option("--out", synth_out, "Output directory (default: paths.dataset)");

    TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "Meta-train or train the baseline");
    train->add_option("--mode", train_opt.mode, "meta or baseline")->required()->check(CLI::IsMember({"meta", "baseline"}));
    train->add_option("--fold", train_opt.fold, "Held-out subject, 'all' for every LOSO fold, 'none' for the full bank");
    train->add_option("--exclude-attribute", train_opt.exclude, "Attribute to leave out of training (repeatable)");
    train->add_option("--progress", train_opt.progress, "JSONL progress file (default: standard output)");

    std::string protocol;
    auto* eval = app.add_subcommand("eval", "Adapt checkpoints and write reports");
    eval->add_option("--protocol", protocol, "loso, cross_bank or sweep")
        ->required()
        ->check(CLI::IsMember({"loso", "cross_bank", "sweep"}));

    auto* stats = app.add_subcommand("stats", "Per-task positive fractions");

    for (auto* sub : {synth, train, eval, stats}) {
        sub->allow_extras();
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    Context ctx;
    try {
        ctx.workdir = workdir;
        if (!config_file.empty()) ctx.config = load_config(ctx.resolve(config_file));
        std::vector<std::string> extras = app.remaining();
        for (const auto& [key, value] : parse_overrides(extras)) apply_override(ctx.config, key, value);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(ctx, synth_out);
        if (*train) return cmd_train(ctx, train_opt);
        if (*eval) return cmd_eval(ctx, protocol);
        if (*stats) return cmd_stats(ctx);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
