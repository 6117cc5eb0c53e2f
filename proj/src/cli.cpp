#include "raretok/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "raretok/common.hpp"
#include "raretok/config.hpp"
#include "raretok/pipelines.hpp"
#include "raretok/report.hpp"
#include "raretok/synth.hpp"

namespace raretok {

namespace {

namespace fs = std::filesystem;

// Raised by callbacks for errors that deserve the usage text, e.g. run-all
// without a seed from either source.
struct UsageError {
    std::string message;
    CLI::App* sub;
};

int category_exit_code(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Data: return 3;
        case ErrorCategory::Numeric: return 4;
    }
    return 2;
}

std::string join_path(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

InputDigest digest(const std::string& path) { return {path, fnv1a64_file_hex(path)}; }

std::string show(double v) { return format_double(v, 6); }

// Every knob is registered as a config key, so a command-line flag and the
// matching config file entry parse and validate through the same code.
class Overrides {
public:
    CLI::Option* add(CLI::App* sub, const std::string& flag, const std::string& key,
                     const std::string& help) {
        items_.push_back(std::make_unique<Item>());
        Item* item = items_.back().get();
        item->key = key;
        item->opt = sub->add_option(flag, item->value, help);
        return item->opt;
    }

    CLI::Option* add_flag(CLI::App* sub, const std::string& flag, const std::string& key,
                          const std::string& constant, const std::string& help) {
        items_.push_back(std::make_unique<Item>());
        Item* item = items_.back().get();
        item->key = key;
        item->value = constant;
        item->opt = sub->add_flag(flag, help);
        return item->opt;
    }

    void apply(RunConfig& config) const {
        for (const auto& item : items_) {
            if (item->opt->count() > 0) apply_config_entry(config, item->key, item->value);
        }
    }

private:
    struct Item {
        std::string key;
        std::string value;
        CLI::Option* opt = nullptr;
    };
    std::vector<std::unique_ptr<Item>> items_;
};

void add_io_knobs(CLI::App* sub, Overrides& ov, bool with_corpus) {
    ov.add(sub, "--model", "model", "model container (.bin)")->required();
    if (with_corpus) {
        ov.add(sub, "--corpus", "corpus", "token stream (.bin with .json sidecar)")->required();
        ov.add(sub, "--count-corpus", "count_corpus",
               "separate stream used only for frequency counting");
        ov.add(sub, "--eval-tokens", "eval_tokens", "evaluate only the first N tokens (0: all)");
    }
    ov.add(sub, "--out", "out", "output directory");
}

void add_split_knobs(CLI::App* sub, Overrides& ov) {
    ov.add(sub, "--percentile", "percentile", "rare/common frequency quantile");
    ov.add(sub, "--elbow-window", "elbow_window", "window of the elbow detector");
}

struct StreamInputs {
    ModelBundle bundle;
    TokenStream eval;
    TokenClassSplit split;
};

StreamInputs load_stream_inputs(const RunConfig& cfg) {
    StreamInputs in;
    in.bundle = load_model(cfg.model);
    TokenStream stream = load_token_stream(cfg.corpus);
    TokenStream counting = stream;
    if (!cfg.count_corpus.empty()) counting = load_token_stream(cfg.count_corpus);
    const auto freq = count_frequencies(counting);
    const auto curve = descending_log_frequencies(freq);
    const ElbowResult elbow = detect_elbow(curve, cfg.pipeline.elbow_window);
    in.split = split_classes(freq, elbow, cfg.pipeline.percentile);
    in.eval = truncate_stream(stream, cfg.pipeline.eval_tokens);
    return in;
}

std::vector<int> resolve_group(const std::string& group_arg, const std::string& plateau_path) {
    if (!group_arg.empty() && !plateau_path.empty()) {
        fail(ErrorCode::ConfigError, "give either --group or --plateau, not both");
    }
    if (!group_arg.empty()) return parse_group_list(group_arg);
    if (!plateau_path.empty()) return load_plateau_group(plateau_path);
    fail(ErrorCode::ConfigError, "a neuron group is required: --group or --plateau");
}

std::string plateau_line(const RegimeSegmentation& seg) {
    if (seg.plateau_end_rank == 0) return "plateau: absent";
    return "plateau: present (end rank " + std::to_string(seg.plateau_end_rank) + ")";
}

void print_split(const TokenClassSplit& split) {
    std::cout << "vocab: " << split.classes.size() << "\n"
              << "elbow_rank: " << split.elbow_rank << (split.elbow_found ? "" : " (no bend)")
              << "\n"
              << "rare: " << split.class_size(TokenClass::Rare) << "\n"
              << "common: " << split.class_size(TokenClass::Common) << "\n"
              << "excluded: " << split.class_size(TokenClass::Excluded) << "\n";
}

void print_baseline(const BaselineStats& baseline) {
    std::cout << "baseline_mean: " << show(baseline.mean) << "\n"
              << "baseline_stddev: " << show(baseline.stddev) << "\n"
              << "p_value: " << (baseline.p_defined ? show(baseline.p_value) : "undefined") << "\n";
}

void add_freq_command(CLI::App& app) {
    auto* sub = app.add_subcommand("freq", "Count token frequencies and split the vocabulary");
    auto ov = std::make_shared<Overrides>();
    ov->add(sub, "--corpus", "corpus", "token stream (.bin with .json sidecar)")->required();
    ov->add(sub, "--out", "out", "output directory");
    add_split_knobs(sub, *ov);
    sub->callback([ov] {
        RunConfig cfg;
        ov->apply(cfg);
        cfg.pipeline.validate();
        const TokenStream stream = load_token_stream(cfg.corpus);
        const auto freq = count_frequencies(stream);
        const auto curve = descending_log_frequencies(freq);
        const ElbowResult elbow = detect_elbow(curve, cfg.pipeline.elbow_window);
        const TokenClassSplit split = split_classes(freq, elbow, cfg.pipeline.percentile);
        ensure_dir(cfg.out);
        save_split(split, join_path(cfg.out, "split.json"));
        write_file(join_path(cfg.out, "token_classes.csv"), split_csv(split));
        print_split(split);
    });
}

void add_synth_command(CLI::App& app) {
    auto* sub = app.add_subcommand("synth", "Generate a toy model with planted rare-token neurons");
    struct State {
        std::string spec_path;
        std::string out = ".";
        std::string seed;
    };
    auto st = std::make_shared<State>();
    sub->add_option("--spec", st->spec_path, "plant spec JSON")->required();
    sub->add_option("--out", st->out, "output directory");
    auto* seed_opt = sub->add_option("--seed", st->seed, "override the seed in the spec");
    sub->callback([st, seed_opt] {
        PlantSpec spec = plant_spec_from_json(read_file(st->spec_path));
        if (seed_opt->count() > 0) {
            try {
                std::size_t used = 0;
                spec.seed = std::stoull(st->seed, &used);
                if (used != st->seed.size()) throw std::invalid_argument(st->seed);
            } catch (const std::logic_error&) {
                fail(ErrorCode::ConfigError, "seed must be an unsigned integer, got '" + st->seed + "'");
            }
        }
        const PlantedModel model = make_planted_bundle(spec);
        ensure_dir(st->out);
        save_model(model.bundle, join_path(st->out, "model.bin"));
        save_token_stream(model.stream, join_path(st->out, "stream.bin"));
        write_file(join_path(st->out, "manifest.json"), model.manifest_json());
        write_file(join_path(st->out, "spec_resolved.json"), plant_spec_to_json(model.spec));
        std::cout << "planted_neurons: " << model.planted_neurons.size() << "\n"
                  << "rare_tokens: " << model.rare_token_set.size() << "\n"
                  << "rare_target_positions: " << model.rare_target_positions << "\n"
                  << "stream_tokens: " << model.stream.size() << "\n"
                  << "model: " << join_path(st->out, "model.bin") << "\n"
                  << "stream: " << join_path(st->out, "stream.bin") << "\n";
    });
}

void add_ablate_command(CLI::App& app) {
    auto* sub =
        app.add_subcommand("ablate", "Mean-ablate every last-layer neuron and rank by loss change");
    auto ov = std::make_shared<Overrides>();
    add_io_knobs(sub, *ov, true);
    add_split_knobs(sub, *ov);
    ov->add(sub, "--threads", "threads", "worker threads (0: one per core)");
    sub->callback([ov] {
        RunConfig cfg;
        ov->apply(cfg);
        cfg.pipeline.validate();
        const StreamInputs in = load_stream_inputs(cfg);
        const AblationSweepResult sweep =
            ablation_sweep(in.bundle, in.eval, in.split, cfg.pipeline.threads);
        ensure_dir(cfg.out);
        save_split(in.split, join_path(cfg.out, "split.json"));
        write_file(join_path(cfg.out, "sweep.csv"), sweep_csv(sweep));
        std::cout << "positions: rare " << sweep.rare_positions << ", common "
                  << sweep.common_positions << ", excluded " << sweep.excluded_positions << "\n"
                  << "top neurons by rare delta loss:\n";
        const std::size_t shown = std::min<std::size_t>(10, sweep.ranking.size());
        for (std::size_t r = 0; r < shown; ++r) {
            const int neuron = sweep.ranking[r];
            std::cout << "  " << (r + 1) << ". neuron " << neuron << "  "
                      << show(sweep.delta_loss_rare(neuron)) << "\n";
        }
        std::cout << "sweep: " << join_path(cfg.out, "sweep.csv") << "\n";
    });
}

void add_regimes_command(CLI::App& app) {
    auto* sub =
        app.add_subcommand("regimes", "Segment a ranked influence curve into its three regimes");
    struct State {
        Overrides ov;
        std::string sweep_path;
        std::string class_name;
    };
    auto st = std::make_shared<State>();
    sub->add_option("--sweep", st->sweep_path, "sweep.csv from the ablate step")->required();
    sub->add_option("--class", st->class_name, "token class to segment: rare or common")
        ->required();
    st->ov.add(sub, "--out", "out", "output directory");
    st->ov.add(sub, "--plateau-slope-max", "plateau_slope_max", "max |slope| of a plateau");
    st->ov.add(sub, "--gap-min", "gap_min", "plateau level over power-law extrapolation");
    st->ov.add(sub, "--tail-ratio", "tail_ratio", "tail slope over middle slope");
    sub->callback([st] {
        RunConfig cfg;
        st->ov.apply(cfg);
        cfg.pipeline.validate();
        const TokenClass cls = token_class_from_name(st->class_name);
        const AblationSweepResult sweep = load_sweep_csv(st->sweep_path);
        const RegimeSegmentation seg = segment_regimes(sweep, cls, cfg.pipeline.regimes);
        ensure_dir(cfg.out);
        write_file(join_path(cfg.out, "regimes.csv"), regimes_csv(seg, cls));
        write_file(join_path(cfg.out, "plateau.json"), plateau_json(seg, cls));
        std::cout << plateau_line(seg) << "\n"
                  << "kappa: " << show(seg.kappa) << "\n"
                  << "powerlaw_end_rank: " << seg.powerlaw_end_rank << "\n";
    });
}

void add_group_options(CLI::App* sub, std::string& group_arg, std::string& plateau_path) {
    sub->add_option("--group", group_arg, "comma-separated neuron indices");
    sub->add_option("--plateau", plateau_path, "plateau.json from the regimes step");
}

void add_geometry_command(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "geometry", "Effective dimensionality of a neuron group on rare-target positions");
    struct State {
        Overrides ov;
        std::string group_arg;
        std::string plateau_path;
    };
    auto st = std::make_shared<State>();
    add_io_knobs(sub, st->ov, true);
    add_split_knobs(sub, st->ov);
    add_group_options(sub, st->group_arg, st->plateau_path);
    st->ov.add(sub, "--seed", "seed", "seed for the random baseline groups")->required();
    st->ov.add(sub, "--tau", "tau", "variance fraction defining the effective dimension");
    st->ov.add(sub, "--baselines", "baselines", "number of random baseline groups");
    st->ov.add(sub, "--threads", "threads", "worker threads (0: one per core)");
    sub->callback([st] {
        RunConfig cfg;
        st->ov.apply(cfg);
        cfg.pipeline.validate();
        const std::vector<int> group = resolve_group(st->group_arg, st->plateau_path);
        const StreamInputs in = load_stream_inputs(cfg);
        const GeometryReport rep =
            geometry_analysis(in.bundle, in.eval, in.split, group, cfg.pipeline.baselines,
                              cfg.pipeline.tau, cfg.pipeline.seed, cfg.pipeline.threads);
        ensure_dir(cfg.out);
        write_file(join_path(cfg.out, "geometry.csv"), geometry_csv(rep));
        std::cout << "group_size: " << rep.group_size << "\n"
                  << "d_eff: " << rep.d_eff << "\n"
                  << "d_eff_ratio: " << show(rep.d_eff_ratio) << "\n";
        print_baseline(rep.baseline);
    });
}

void add_graph_command(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "graph", "Mutual-information graph modularity of a neuron group on rare targets");
    struct State {
        Overrides ov;
        std::string group_arg;
        std::string plateau_path;
    };
    auto st = std::make_shared<State>();
    add_io_knobs(sub, st->ov, true);
    add_split_knobs(sub, st->ov);
    add_group_options(sub, st->group_arg, st->plateau_path);
    st->ov.add(sub, "--seed", "seed", "seed for restarts and baseline groups")->required();
    st->ov.add(sub, "--bins", "bins", "histogram bins for mutual information");
    st->ov.add(sub, "--baselines", "baselines", "number of random baseline groups");
    st->ov.add(sub, "--restarts", "restarts", "community detection restarts");
    st->ov.add(sub, "--resolution", "resolution", "modularity resolution parameter");
    st->ov.add(sub, "--threads", "threads", "worker threads (0: one per core)");
    sub->callback([st] {
        RunConfig cfg;
        st->ov.apply(cfg);
        cfg.pipeline.validate();
        const std::vector<int> group = resolve_group(st->group_arg, st->plateau_path);
        const StreamInputs in = load_stream_inputs(cfg);
        const GraphReport rep = graph_analysis(
            in.bundle, in.eval, in.split, group, cfg.pipeline.baselines, cfg.pipeline.bins,
            cfg.pipeline.restarts, cfg.pipeline.resolution, cfg.pipeline.seed,
            cfg.pipeline.threads);
        ensure_dir(cfg.out);
        write_file(join_path(cfg.out, "graph.csv"), graph_csv(rep));
        std::cout << "q: " << show(rep.q) << "\n"
                  << "communities: " << rep.communities << "\n"
                  << "mean_community_size: " << show(rep.mean_community_size) << "\n";
        print_baseline(rep.baseline);
    });
}

void add_attention_command(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "attention", "Attention concentration on rare targets and head ablation impact");
    struct State {
        Overrides ov;
        std::string group_arg;
        std::string plateau_path;
    };
    auto st = std::make_shared<State>();
    add_io_knobs(sub, st->ov, true);
    add_split_knobs(sub, st->ov);
    add_group_options(sub, st->group_arg, st->plateau_path);
    st->ov.add(sub, "--seed", "seed", "seed for the random head pick")->required();
    st->ov.add(sub, "--threads", "threads", "worker threads (0: one per core)");
    sub->callback([st] {
        RunConfig cfg;
        st->ov.apply(cfg);
        cfg.pipeline.validate();
        const std::vector<int> group = resolve_group(st->group_arg, st->plateau_path);
        const StreamInputs in = load_stream_inputs(cfg);
        const AttentionReport rep = attention_analysis(in.bundle, in.eval, in.split, group,
                                                       cfg.pipeline.seed, cfg.pipeline.threads);
        ensure_dir(cfg.out);
        write_file(join_path(cfg.out, "attention_heads.csv"), attention_heads_csv(rep));
        write_file(join_path(cfg.out, "attention_impact.csv"), attention_impact_csv(rep));
        std::cout << "heads: " << rep.heads.size() << "\n"
                  << "spearman_mean: " << show(rep.spearman_mean) << "\n";
        for (const auto& imp : rep.impacts) {
            std::cout << imp.kind << ": layer " << imp.layer;
            if (imp.head >= 0) std::cout << " head " << imp.head;
            std::cout << "  impact " << show(imp.impact) << "\n";
        }
    });
}

void add_spectrum_command(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "spectrum", "Tail exponent of the weight correlation spectrum for a neuron group");
    struct State {
        Overrides ov;
        std::string group_arg;
        std::string plateau_path;
    };
    auto st = std::make_shared<State>();
    add_io_knobs(sub, st->ov, false);
    add_group_options(sub, st->group_arg, st->plateau_path);
    st->ov.add(sub, "--seed", "seed", "seed for the random baseline groups")->required();
    st->ov.add(sub, "--baselines", "baselines", "number of random baseline groups");
    st->ov.add_flag(sub, "--use-w-out", "spectral_use_w_out", "true",
                    "analyze output columns instead of input rows");
    sub->callback([st] {
        RunConfig cfg;
        st->ov.apply(cfg);
        cfg.pipeline.validate();
        const std::vector<int> group = resolve_group(st->group_arg, st->plateau_path);
        const ModelBundle bundle = load_model(cfg.model);
        const SpectralReport rep =
            spectral_analysis(bundle, group, cfg.pipeline.baselines,
                              cfg.pipeline.spectral_use_w_out, cfg.pipeline.seed);
        ensure_dir(cfg.out);
        write_file(join_path(cfg.out, "spectrum.csv"), spectrum_csv(rep));
        std::cout << "alpha: " << show(rep.alpha) << "\n"
                  << "weight_source: " << rep.weight_source << "\n"
                  << "degenerate: " << (rep.degenerate ? "true" : "false") << "\n";
        print_baseline(rep.baseline);
    });
}

void add_run_all_command(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "run-all", "Full pipeline: frequencies, sweep, regimes, group analyses, report");
    struct State {
        Overrides ov;
        std::string config_path;
    };
    auto st = std::make_shared<State>();
    sub->add_option("--config", st->config_path, "key = value config file");
    st->ov.add(sub, "--model", "model", "model container (.bin)");
    st->ov.add(sub, "--corpus", "corpus", "token stream (.bin with .json sidecar)");
    st->ov.add(sub, "--count-corpus", "count_corpus",
               "separate stream used only for frequency counting");
    st->ov.add(sub, "--out", "out", "output directory");
    st->ov.add(sub, "--seed", "seed", "seed for every randomized analysis");
    st->ov.add(sub, "--threads", "threads", "worker threads (0: one per core)");
    st->ov.add(sub, "--eval-tokens", "eval_tokens", "evaluate only the first N tokens (0: all)");
    st->ov.add(sub, "--percentile", "percentile", "rare/common frequency quantile");
    st->ov.add(sub, "--elbow-window", "elbow_window", "window of the elbow detector");
    st->ov.add(sub, "--tau", "tau", "variance fraction defining the effective dimension");
    st->ov.add(sub, "--bins", "bins", "histogram bins for mutual information");
    st->ov.add(sub, "--baselines", "baselines", "number of random baseline groups");
    st->ov.add(sub, "--restarts", "restarts", "community detection restarts");
    st->ov.add(sub, "--resolution", "resolution", "modularity resolution parameter");
    st->ov.add(sub, "--plateau-slope-max", "plateau_slope_max", "max |slope| of a plateau");
    st->ov.add(sub, "--gap-min", "gap_min", "plateau level over power-law extrapolation");
    st->ov.add(sub, "--tail-ratio", "tail_ratio", "tail slope over middle slope");
    st->ov.add_flag(sub, "--use-w-out", "spectral_use_w_out", "true",
                    "spectrum on output columns instead of input rows");
    st->ov.add_flag(sub, "--no-geometry", "geometry", "false", "skip the geometry analysis");
    st->ov.add_flag(sub, "--no-graph", "graph", "false", "skip the graph analysis");
    st->ov.add_flag(sub, "--no-attention", "attention", "false", "skip the attention analysis");
    st->ov.add_flag(sub, "--no-spectral", "spectral", "false", "skip the spectrum analysis");
    sub->callback([st, sub] {
        RunConfig cfg;
        if (!st->config_path.empty()) cfg = load_run_config(st->config_path);
        st->ov.apply(cfg);
        if (!cfg.seed_set) {
            throw UsageError{"a seed is required: pass --seed or set seed in the config file", sub};
        }
        cfg.validate_io(true, true);

        const ModelBundle bundle = load_model(cfg.model);
        const TokenStream stream = load_token_stream(cfg.corpus);
        TokenStream counting;
        const bool has_count = !cfg.count_corpus.empty();
        if (has_count) counting = load_token_stream(cfg.count_corpus);

        const FullRunResult result =
            run_full_pipeline(bundle, stream, cfg.pipeline, has_count ? &counting : nullptr);

        ReportInputs inputs;
        inputs.model = digest(cfg.model);
        inputs.corpus = digest(cfg.corpus);
        if (has_count) inputs.count_corpus = digest(cfg.count_corpus);
        emit_report(result, cfg.resolved_json(), inputs, cfg.out);

        std::cout << "evaluated_tokens: " << result.evaluated_tokens << "\n";
        print_split(result.split);
        std::cout << "rare " << plateau_line(result.regimes_rare) << "\n"
                  << "common " << plateau_line(result.regimes_common) << "\n";
        for (const auto& entry : result.skipped) std::cout << "skipped " << entry << "\n";
        std::cout << "report: " << join_path(cfg.out, "report.json") << "\n";
    });
}

void add_report_command(CLI::App& app) {
    auto* sub = app.add_subcommand("report", "Summarize an existing report.json");
    auto path = std::make_shared<std::string>();
    sub->add_option("path", *path, "report.json or the directory holding it")->required();
    sub->callback([path] {
        fs::path p(*path);
        std::error_code ec;
        if (fs::is_directory(p, ec)) p /= "report.json";
        nlohmann::ordered_json doc;
        try {
            doc = nlohmann::ordered_json::parse(read_file(p.string()));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::MalformedHeader, p.string() + ": " + e.what());
        }
        try {
            std::cout << "schema_version: " << doc.at("schema_version").get<int>() << "\n"
                      << "seed: " << doc.at("config").at("seed").get<std::uint64_t>() << "\n"
                      << "evaluated_tokens: " << doc.at("evaluated_tokens").get<std::int64_t>()
                      << "\n";
            const auto& classes = doc.at("token_classes");
            std::cout << "classes: rare " << classes.at("rare").get<std::int64_t>() << ", common "
                      << classes.at("common").get<std::int64_t>() << ", excluded "
                      << classes.at("excluded").get<std::int64_t>() << "\n";
            const auto& rare = doc.at("regimes").at("rare");
            if (rare.at("plateau_detected").get<bool>()) {
                std::cout << "rare plateau: present (end rank "
                          << rare.at("plateau_end_rank").get<std::int64_t>() << ")\n";
            } else {
                std::cout << "rare plateau: absent\n";
            }
            std::cout << "rare_only_plateau: "
                      << (doc.at("regimes").at("rare_only_plateau").get<bool>() ? "true" : "false")
                      << "\n"
                      << "kappa: " << show(rare.at("kappa").get<double>()) << "\n";
            for (const char* key : {"geometry", "graph", "attention", "spectrum"}) {
                std::cout << key << ": " << (doc.at(key).is_null() ? "absent" : "present") << "\n";
            }
            for (const auto& entry : doc.at("skipped")) {
                std::cout << "skipped " << entry.get<std::string>() << "\n";
            }
            std::cout << "partial: " << (doc.at("partial").get<bool>() ? "true" : "false") << "\n";
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::MalformedHeader, p.string() + ": missing fields: " + e.what());
        }
    });
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Rare-token neuron analysis for small decoder-only transformers"};
    app.name("raretok");
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    add_freq_command(app);
    add_synth_command(app);
    add_ablate_command(app);
    add_regimes_command(app);
    add_geometry_command(app);
    add_graph_command(app);
    add_attention_command(app);
    add_spectrum_command(app);
    add_run_all_command(app);
    add_report_command(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "raretok: " << e.message << "\n\n" << e.sub->help();
        return 2;
    } catch (const Error& e) {
        std::cerr << "raretok: error: " << error_code_name(e.code()) << ": " << e.detail() << "\n";
        if (e.category() == ErrorCategory::Numeric) {
            std::cerr << "flags: " << error_code_name(e.code()) << "\n";
        }
        return category_exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "raretok: unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace raretok
