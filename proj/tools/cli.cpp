#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "igsc/data.hpp"
#include "igsc/error.hpp"
#include "igsc/eval.hpp"
#include "igsc/model.hpp"
#include "igsc/trainer.hpp"

namespace igsc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthOptions {
    SyntheticSpec spec;
    std::string out;
};

struct TrainOptions {
    std::string dataset;
    std::string model;
    std::string history;
    std::string report;
    std::string form = "nonlinear";
    std::size_t h = 30;
    std::string hidden_activation = "tanh";
    std::string scoring = "softmax";
    std::size_t trials = 1;
    double gamma = 0.0;
    TrainConfig config;
};

struct EvalOptions {
    std::string model;
    std::string dataset;
    std::string out;
    double gamma = 0.0;
    bool zsl = false;
};

struct SweepOptions {
    std::string model;
    std::string dataset;
    std::string out;
    std::vector<double> gammas;
    std::size_t grid = 0;
};

struct GradcheckOptions {
    GradcheckConfig config;
};

struct ExportOptions {
    std::string model;
    std::string dataset;
    std::string out;
};

// Writes text to `path` through a temp file, or to `out` when path is empty.
void emit_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    auto tmp = fs::path(path);
    tmp += ".partial";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f << text;
        if (!f) throw IoError("write failed for " + path);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot write " + path);
    }
}

void require_parent_writable(const std::string& path) {
    const fs::path parent = fs::absolute(path).parent_path();
    if (!fs::is_directory(parent)) throw IoError("output directory " + parent.string() + " does not exist");
}

void check_compatible(const HypernetParams& W, const Dataset& ds) {
    if (W.input_dim() != ds.feature_dim()) {
        throw ShapeError("checkpoint expects " + std::to_string(W.input_dim()) +
                         "-dim image embeddings, dataset has " + std::to_string(ds.feature_dim()));
    }
    if (W.form.d != ds.prototype_dim()) {
        throw ShapeError("checkpoint expects " + std::to_string(W.form.d) +
                         "-dim prototypes, dataset has " + std::to_string(ds.prototype_dim()));
    }
}

std::string history_json(const TrainHistory& history, const TrainConfig& cfg) {
    json epochs = json::array();
    for (const auto& r : history) {
        epochs.push_back({{"epoch", r.epoch},
                          {"train_loss", r.train_loss},
                          {"val_accuracy", r.val_accuracy ? json(*r.val_accuracy) : json(nullptr)},
                          {"seconds", r.seconds}});
    }
    json config = {{"form", to_string(cfg.form.variant)},
                   {"d", cfg.form.d},
                   {"h", cfg.form.h},
                   {"h1", cfg.h1},
                   {"h2", cfg.h2},
                   {"hidden_activation", to_string(cfg.hidden_activation)},
                   {"lr", cfg.learning_rate},
                   {"batch_size", cfg.batch_size},
                   {"epochs", cfg.epochs},
                   {"seed", cfg.seed},
                   {"scoring", to_string(cfg.scoring_mode)},
                   {"pure_softmax_ce", cfg.pure_softmax_ce}};
    return json{{"config", config}, {"epochs", epochs}}.dump(2) + "\n";
}

int cmd_synth(const SynthOptions& o, std::ostream& out) {
    o.spec.validate();
    const Dataset ds = make_synthetic(o.spec);

    // Stage in a sibling directory so a failure leaves nothing behind in the target.
    const fs::path target = fs::absolute(o.out);
    fs::path staging = target;
    staging += ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        write_dataset(ds, staging);
        fs::create_directories(target, ec);
        if (ec || !fs::is_directory(target)) throw IoError("cannot create " + target.string());
        for (const char* name : {kFeaturesFile, kLabelsFile, kPrototypesFile, kSplitsFile}) {
            fs::rename(staging / name, target / name, ec);
            if (ec) throw IoError("cannot move " + std::string(name) + " into " + target.string());
        }
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(staging, ec);
    out << "wrote " << ds.sample_count() << " samples, " << ds.class_count() << " classes to "
        << o.out << "\n";
    return kOk;
}

int cmd_train(TrainOptions o, std::ostream& out) {
    o.config.form.variant = variant_from_string(o.form);
    o.config.form.h = o.config.form.is_linear() ? 0 : o.h;
    o.config.hidden_activation = activation_from_string(o.hidden_activation);
    if (o.config.hidden_activation == Activation::sigmoid) {
        throw UsageError("hidden activation must be tanh or relu");
    }
    o.config.scoring_mode = scoring_mode_from_string(o.scoring);
    if (o.trials == 0) throw ValidationError("--trials must be >= 1");
    if (o.history.empty()) o.history = o.model + ".history.json";
    require_parent_writable(o.model);
    require_parent_writable(o.history);
    if (!o.report.empty()) require_parent_writable(o.report);

    const Dataset ds = load_dataset(o.dataset);
    o.config.form.d = ds.prototype_dim();
    o.config.validate();

    std::optional<TrainResult> first;
    std::vector<EvalReport> reports;
    for (std::size_t t = 0; t < o.trials; ++t) {
        TrainConfig cfg = o.config;
        cfg.seed = o.config.seed + t;
        TrainResult result = train(ds, cfg);
        if (!o.report.empty() || o.trials > 1) {
            reports.push_back(evaluate_gzsl(IgscModel(result.params), ds, o.gamma));
        }
        out << "trial " << t << " seed " << cfg.seed << " final loss " << std::setprecision(10)
            << result.history.back().train_loss << "\n";
        if (!first) first = std::move(result);
    }

    save_checkpoint(o.model, first->params);
    emit_text(o.history, history_json(first->history, o.config), out);
    if (!reports.empty()) {
        json doc = report_to_json(average_reports(reports));
        doc["trials"] = o.trials;
        if (o.report.empty()) out << doc.dump(2) << "\n";
        else emit_text(o.report, doc.dump(2) + "\n", out);
    }
    out << "final loss " << std::setprecision(10) << first->history.back().train_loss << "\n";
    return kOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
    if (!o.out.empty()) require_parent_writable(o.out);
    const HypernetParams W = load_checkpoint(o.model);
    const Dataset ds = load_dataset(o.dataset);
    check_compatible(W, ds);
    const IgscModel model(W);
    if (o.zsl) {
        const json doc = {{"zsl_per_class_top1", evaluate_zsl(model, ds)}};
        emit_text(o.out, doc.dump(2) + "\n", out);
        return kOk;
    }
    emit_text(o.out, report_to_json(evaluate_gzsl(model, ds, o.gamma)).dump(2) + "\n", out);
    return kOk;
}

int cmd_sweep(const SweepOptions& o, std::ostream& out) {
    if (!o.out.empty()) require_parent_writable(o.out);
    if (o.gammas.empty() == (o.grid == 0)) {
        throw UsageError("sweep needs exactly one of --gammas or --grid");
    }
    const HypernetParams W = load_checkpoint(o.model);
    const Dataset ds = load_dataset(o.dataset);
    check_compatible(W, ds);
    const IgscModel model(W);
    std::vector<double> gammas = o.gammas;
    if (o.grid > 0) gammas = gamma_grid(test_score_range(model, ds), o.grid);
    emit_text(o.out, sweep_to_json(calibration_sweep(model, ds, gammas)).dump(2) + "\n", out);
    return kOk;
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
    if (o.config.trials == 0) throw ValidationError("--trials must be >= 1");
    if (!(o.config.eps > 0.0)) throw ValidationError("--eps must be > 0");
    const GradcheckReport r = gradient_check(o.config);
    out << "checked " << r.checks << " random nets (linear+nonlinear, softmax+sigmoid)\n";
    out << "worst relative error " << std::scientific << std::setprecision(3) << r.worst_relative_error
        << " in " << r.worst_tensor << " (" << r.worst_case << ")\n";
    if (!r.passed()) {
        out << "FAIL: " << r.failures << " nets exceed tolerance " << o.config.tolerance
            << "; worst tensor " << r.worst_tensor << "\n";
        return kCheckFailed;
    }
    out << "PASS\n";
    return kOk;
}

int cmd_export(const ExportOptions& o, std::ostream& out) {
    const HypernetParams W = load_checkpoint(o.model);
    const Dataset ds = load_dataset(o.dataset);
    check_compatible(W, ds);

    std::vector<std::uint32_t> rows = ds.splits.test_seen_idx;
    rows.insert(rows.end(), ds.splits.test_unseen_idx.begin(), ds.splits.test_unseen_idx.end());
    Matrix weights(rows.size(), packed_size(W.form));
    std::vector<ClassId> labels;
    labels.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Vector packed = pack(generate_classifier(ds.features.row(rows[k]), W));
        std::ranges::copy(packed, weights.row(k).begin());
        labels.push_back(ds.labels[rows[k]]);
    }

    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec || !fs::is_directory(o.out)) throw IoError("cannot create output directory " + o.out);
    write_matrix_file(fs::path(o.out) / "classifiers.f32bin", weights);
    write_labels_file(fs::path(o.out) / "classifier_labels.u32bin", labels);
    out << "exported " << weights.rows() << " classifiers of " << weights.cols() << " values to "
        << o.out << "\n";
    return kOk;
}

// Turns the JSON object in `path` into command-line tokens for `sub`, skipping keys
// that the user also passed on the command line.
std::vector<std::string> config_tokens(const std::string& path, CLI::App& sub,
                                       const std::set<std::string>& explicit_keys) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config file " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw ValidationError("config file " + path + ": top level is not an object");
    std::vector<std::string> tokens;
    for (const auto& [key, value] : doc.items()) {
        const std::string flag = "--" + key;
        const CLI::Option* opt = sub.get_option_no_throw(flag);
        if (opt == nullptr || key == "config") {
            throw ValidationError("config file " + path + ": unknown key \"" + key + "\" for " +
                                  sub.get_name());
        }
        if (explicit_keys.contains(key)) continue;
        if (opt->get_type_size() == 0) {
            if (!value.is_boolean()) throw ValidationError("config key \"" + key + "\" must be a boolean");
            if (value.get<bool>()) tokens.push_back(flag);
            continue;
        }
        auto scalar = [&](const json& v) {
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number() || v.is_boolean()) return v.dump();
            throw ValidationError("config key \"" + key + "\" has an unsupported value " + v.dump());
        };
        tokens.push_back(flag);
        if (value.is_array()) {
            for (const auto& item : value) tokens.push_back(scalar(item));
        } else {
            tokens.push_back(scalar(value));
        }
    }
    return tokens;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"IGSC: image-guided semantic classification for zero-shot learning"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);

    std::string config_path;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON file of option values; flags override it");
    };

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic ZSL dataset");
    synth_cmd->add_option("--seen", synth.spec.seen_count, "Seen class count")->capture_default_str();
    synth_cmd->add_option("--unseen", synth.spec.unseen_count, "Unseen class count")->capture_default_str();
    synth_cmd->add_option("--per-class", synth.spec.samples_per_class, "Samples per class")
        ->capture_default_str();
    synth_cmd->add_option("--d", synth.spec.d, "Prototype dimension")->capture_default_str();
    synth_cmd->add_option("--v", synth.spec.v, "Feature dimension")->capture_default_str();
    synth_cmd->add_option("--noise", synth.spec.noise_sigma, "Feature noise sigma")->capture_default_str();
    synth_cmd->add_option("--seed", synth.spec.seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
    add_config(synth_cmd);

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train the hypernetwork");
    train_cmd->add_option("--dataset", tr.dataset, "Dataset directory")->required();
    train_cmd->add_option("--model", tr.model, "Checkpoint output path")->required();
    train_cmd->add_option("--history", tr.history, "History JSON path (default <model>.history.json)");
    train_cmd->add_option("--report", tr.report, "Write the trial-averaged GZSL report here");
    train_cmd->add_option("--form", tr.form, "Classifier form: linear | nonlinear")->capture_default_str();
    train_cmd->add_option("--h", tr.h, "Hidden width of the nonlinear classifier")->capture_default_str();
    train_cmd->add_option("--h1", tr.config.h1, "First hidden layer width")->capture_default_str();
    train_cmd->add_option("--h2", tr.config.h2, "Second hidden layer width")->capture_default_str();
    train_cmd->add_option("--hidden-activation", tr.hidden_activation, "tanh | relu")->capture_default_str();
    train_cmd->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch-size", tr.config.batch_size, "Mini-batch size")->capture_default_str();
    train_cmd->add_option("--epochs", tr.config.epochs, "Epoch count")->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed, "Random seed")->capture_default_str();
    train_cmd->add_option("--beta1", tr.config.adam_beta1, "Adam beta1")->capture_default_str();
    train_cmd->add_option("--beta2", tr.config.adam_beta2, "Adam beta2")->capture_default_str();
    train_cmd->add_option("--adam-eps", tr.config.adam_eps, "Adam epsilon")->capture_default_str();
    train_cmd->add_option("--scoring", tr.scoring, "softmax | sigmoid")->capture_default_str();
    train_cmd->add_flag("--pure-softmax-ce", tr.config.pure_softmax_ce,
                        "Use -log p_target instead of the per-class binary cross-entropy sum");
    train_cmd->add_flag("--merge-val", tr.config.merge_val, "Train on train + val");
    train_cmd->add_flag("--select-best-on-val", tr.config.select_best_on_val,
                        "Keep the epoch with the best validation accuracy");
    train_cmd->add_option("--patience", tr.config.early_stop_patience,
                          "Early-stop patience in epochs (0 = off)")
        ->capture_default_str();
    train_cmd->add_option("--trials", tr.trials, "Re-seeded runs whose GZSL reports are averaged")
        ->capture_default_str();
    train_cmd->add_option("--gamma", tr.gamma, "Calibration factor for trial reports")->capture_default_str();
    add_config(train_cmd);

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (GZSL by default)");
    eval_cmd->add_option("--model", ev.model, "Checkpoint path")->required();
    eval_cmd->add_option("--dataset", ev.dataset, "Dataset directory")->required();
    eval_cmd->add_option("--gamma", ev.gamma, "Calibration factor")->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "Report path (default stdout)");
    eval_cmd->add_flag("--zsl", ev.zsl, "Report unseen-only ZSL per-class top-1 instead");
    add_config(eval_cmd);

    SweepOptions sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep the calibration factor");
    sweep_cmd->add_option("--model", sw.model, "Checkpoint path")->required();
    sweep_cmd->add_option("--dataset", sw.dataset, "Dataset directory")->required();
    sweep_cmd->add_option("--gammas", sw.gammas, "Strictly increasing gammas")->delimiter(',');
    sweep_cmd->add_option("--grid", sw.grid, "Evenly spaced points from 0 to the test score range");
    sweep_cmd->add_option("--out", sw.out, "Report path (default stdout)");
    add_config(sweep_cmd);

    GradcheckOptions gc;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    grad_cmd->add_option("--trials", gc.config.trials, "Random nets per form/mode")->capture_default_str();
    grad_cmd->add_option("--seed", gc.config.seed, "Random seed")->capture_default_str();
    grad_cmd->add_option("--eps", gc.config.eps, "Finite-difference step")->capture_default_str();
    grad_cmd->add_option("--tolerance", gc.config.tolerance, "Relative error bound")->capture_default_str();
    add_config(grad_cmd);

    ExportOptions ex;
    auto* export_cmd = app.add_subcommand("export-weights", "Export generated classifiers of test images");
    export_cmd->add_option("--model", ex.model, "Checkpoint path")->required();
    export_cmd->add_option("--dataset", ex.dataset, "Dataset directory")->required();
    export_cmd->add_option("--out", ex.out, "Output directory")->required();
    add_config(export_cmd);

    std::vector<std::string> argv_store = args;
    try {
        // Expand --config into tokens placed before the user's own flags.
        if (argv_store.size() >= 2) {
            CLI::App* sub = app.get_subcommand_no_throw(argv_store[1]);
            std::optional<std::string> cfg;
            std::set<std::string> explicit_keys;
            for (std::size_t i = 2; i < argv_store.size(); ++i) {
                const std::string& a = argv_store[i];
                if (a.rfind("--", 0) != 0) continue;
                std::string key = a.substr(2);
                std::optional<std::string> inline_value;
                if (const auto eq = key.find('='); eq != std::string::npos) {
                    inline_value = key.substr(eq + 1);
                    key = key.substr(0, eq);
                }
                if (key == "config") {
                    if (inline_value) cfg = *inline_value;
                    else if (i + 1 < argv_store.size()) cfg = argv_store[i + 1];
                } else {
                    explicit_keys.insert(key);
                }
            }
            if (sub != nullptr && cfg) {
                const auto tokens = config_tokens(*cfg, *sub, explicit_keys);
                argv_store.insert(argv_store.begin() + 2, tokens.begin(), tokens.end());
            }
        }
        std::vector<const char*> argv;
        for (const auto& a : argv_store) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kOk : kUsage;
        }

        if (synth_cmd->parsed()) return cmd_synth(synth, out);
        if (train_cmd->parsed()) return cmd_train(tr, out);
        if (eval_cmd->parsed()) return cmd_eval(ev, out);
        if (sweep_cmd->parsed()) return cmd_sweep(sw, out);
        if (grad_cmd->parsed()) return cmd_gradcheck(gc, out);
        if (export_cmd->parsed()) return cmd_export(ex, out);
        err << "no command given\n";
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
}

}  // namespace igsc::cli
