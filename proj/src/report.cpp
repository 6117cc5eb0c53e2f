#include "raretok/report.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "raretok/common.hpp"

namespace raretok {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) { return format_double(v); }

void append_row(std::string& out, std::initializer_list<std::string> cells) {
    bool first = true;
    for (const auto& cell : cells) {
        if (!first) out += ',';
        out += cell;
        first = false;
    }
    out += '\n';
}

ordered_json baseline_block(const BaselineStats& b) {
    ordered_json j;
    j["mean"] = b.mean;
    j["stddev"] = b.stddev;
    if (b.p_defined) {
        j["p_value"] = b.p_value;
    } else {
        j["p_value"] = nullptr;
    }
    j["samples"] = b.values;
    return j;
}

ordered_json segmentation_block(const RegimeSegmentation& seg) {
    ordered_json j;
    j["plateau_detected"] = seg.plateau_end_rank > 0;
    j["plateau_end_rank"] = seg.plateau_end_rank;
    j["powerlaw_end_rank"] = seg.powerlaw_end_rank;
    j["kappa"] = seg.kappa;
    j["beta"] = seg.beta;
    if (seg.r_squared_defined) {
        j["r_squared"] = seg.r_squared;
    } else {
        j["r_squared"] = nullptr;
    }
    j["slope_left"] = seg.slope_left;
    j["slope_right"] = seg.slope_right;
    j["plateau_neurons"] = seg.plateau_set;
    j["ranked_count"] = seg.ranked_neurons.size();
    return j;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell_double(const std::string& cell, const std::string& path) {
    try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size()) fail(ErrorCode::MalformedHeader, path + ": bad number '" + cell + "'");
        return v;
    } catch (const std::logic_error&) {
        fail(ErrorCode::MalformedHeader, path + ": bad number '" + cell + "'");
    }
}

long parse_cell_long(const std::string& cell, const std::string& path) {
    try {
        std::size_t used = 0;
        long v = std::stol(cell, &used);
        if (used != cell.size()) fail(ErrorCode::MalformedHeader, path + ": bad integer '" + cell + "'");
        return v;
    } catch (const std::logic_error&) {
        fail(ErrorCode::MalformedHeader, path + ": bad integer '" + cell + "'");
    }
}

}  // namespace

std::string sweep_csv(const AblationSweepResult& sweep) {
    std::string out = "rank,neuron,delta_loss_rare,delta_loss_common,delta_loss_all\n";
    for (std::size_t r = 0; r < sweep.ranking.size(); ++r) {
        int neuron = sweep.ranking[r];
        append_row(out, {std::to_string(r + 1), std::to_string(neuron),
                         fmt(sweep.delta_loss_rare(neuron)), fmt(sweep.delta_loss_common(neuron)),
                         fmt(sweep.delta_loss_all(neuron))});
    }
    return out;
}

AblationSweepResult load_sweep_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::MalformedHeader, path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "rank,neuron,delta_loss_rare,delta_loss_common,delta_loss_all")
        fail(ErrorCode::MalformedHeader, path + ": unexpected sweep header '" + line + "'");

    std::vector<int> neurons;
    std::vector<double> rare, common, all;
    int max_neuron = -1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != 5) fail(ErrorCode::MalformedHeader, path + ": expected 5 columns, got row '" + line + "'");
        int neuron = static_cast<int>(parse_cell_long(cells[1], path));
        if (neuron < 0) fail(ErrorCode::MalformedHeader, path + ": negative neuron index");
        neurons.push_back(neuron);
        rare.push_back(parse_cell_double(cells[2], path));
        common.push_back(parse_cell_double(cells[3], path));
        all.push_back(parse_cell_double(cells[4], path));
        max_neuron = std::max(max_neuron, neuron);
    }
    if (neurons.empty()) fail(ErrorCode::MalformedHeader, path + ": no data rows");
    if (static_cast<int>(neurons.size()) != max_neuron + 1)
        fail(ErrorCode::MalformedHeader, path + ": table must list every neuron exactly once");

    AblationSweepResult sweep;
    sweep.delta_loss_rare = Vector::Zero(max_neuron + 1);
    sweep.delta_loss_common = Vector::Zero(max_neuron + 1);
    sweep.delta_loss_all = Vector::Zero(max_neuron + 1);
    std::vector<bool> seen(neurons.size(), false);
    for (std::size_t i = 0; i < neurons.size(); ++i) {
        int n = neurons[i];
        if (seen[n]) fail(ErrorCode::MalformedHeader, path + ": duplicate neuron " + std::to_string(n));
        seen[n] = true;
        sweep.delta_loss_rare(n) = rare[i];
        sweep.delta_loss_common(n) = common[i];
        sweep.delta_loss_all(n) = all[i];
    }
    sweep.ranking = neurons;
    return sweep;
}

namespace {

const char* kRegimesHeader =
    "class,plateau_end_rank,powerlaw_end_rank,kappa,beta,r_squared,slope_left,slope_right\n";

void regimes_row(std::string& out, const char* name, const RegimeSegmentation& seg) {
    append_row(out, {name, std::to_string(seg.plateau_end_rank),
                     std::to_string(seg.powerlaw_end_rank), fmt(seg.kappa), fmt(seg.beta),
                     seg.r_squared_defined ? fmt(seg.r_squared) : std::string(),
                     fmt(seg.slope_left), fmt(seg.slope_right)});
}

}  // namespace

std::string regimes_csv(const RegimeSegmentation& rare, const RegimeSegmentation& common) {
    std::string out = kRegimesHeader;
    regimes_row(out, "rare", rare);
    regimes_row(out, "common", common);
    return out;
}

std::string regimes_csv(const RegimeSegmentation& seg, TokenClass token_class) {
    std::string out = kRegimesHeader;
    regimes_row(out, token_class_name(token_class), seg);
    return out;
}

std::string split_csv(const TokenClassSplit& split) {
    std::string out = "token,frequency,class\n";
    for (std::size_t id = 0; id < split.classes.size(); ++id) {
        append_row(out, {std::to_string(id), std::to_string(split.freq[id]),
                         token_class_name(split.classes[id])});
    }
    return out;
}

std::string geometry_csv(const GeometryReport& report) {
    std::string out =
        "group_size,d_eff,d_eff_ratio,baseline_mean,baseline_stddev,p_value,sample_positions\n";
    append_row(out, {std::to_string(report.group_size), std::to_string(report.d_eff),
                     fmt(report.d_eff_ratio), fmt(report.baseline.mean), fmt(report.baseline.stddev),
                     report.baseline.p_defined ? fmt(report.baseline.p_value) : std::string(),
                     std::to_string(report.sample_positions)});
    return out;
}

std::string graph_csv(const GraphReport& report) {
    std::string out =
        "q,communities,mean_community_size,group_size,baseline_mean,baseline_stddev,p_value,"
        "sample_positions\n";
    append_row(out, {fmt(report.q), std::to_string(report.communities),
                     fmt(report.mean_community_size), std::to_string(report.group_size),
                     fmt(report.baseline.mean), fmt(report.baseline.stddev),
                     report.baseline.p_defined ? fmt(report.baseline.p_value) : std::string(),
                     std::to_string(report.sample_positions)});
    return out;
}

std::string attention_heads_csv(const AttentionReport& report) {
    std::string out =
        "layer,head,gini_rare_mean,gini_rare_std,gini_common_mean,gini_common_std,welch_t,welch_p,"
        "spearman_r,impact\n";
    for (const auto& h : report.heads) {
        append_row(out, {std::to_string(h.layer), std::to_string(h.head), fmt(h.gini_rare_mean),
                         fmt(h.gini_rare_std), fmt(h.gini_common_mean), fmt(h.gini_common_std),
                         fmt(h.welch_t), fmt(h.welch_p),
                         h.spearman_defined ? fmt(h.spearman_r) : std::string(), fmt(h.impact)});
    }
    return out;
}

std::string attention_impact_csv(const AttentionReport& report) {
    std::string out = "kind,layer,head,impact\n";
    for (const auto& imp : report.impacts) {
        append_row(out, {imp.kind, std::to_string(imp.layer), std::to_string(imp.head),
                         fmt(imp.impact)});
    }
    return out;
}

std::string spectrum_csv(const SpectralReport& report) {
    std::string out =
        "alpha,k,lambda_k,degenerate,group_size,weight_source,baseline_mean,baseline_stddev,"
        "p_value\n";
    append_row(out, {fmt(report.alpha), std::to_string(report.k), fmt(report.lambda_k),
                     report.degenerate ? "true" : "false", std::to_string(report.group_size),
                     report.weight_source, fmt(report.baseline.mean), fmt(report.baseline.stddev),
                     report.baseline.p_defined ? fmt(report.baseline.p_value) : std::string()});
    return out;
}

std::string plateau_json(const RegimeSegmentation& seg, TokenClass token_class) {
    ordered_json j;
    j["class"] = token_class_name(token_class);
    j["plateau_end_rank"] = seg.plateau_end_rank;
    j["neurons"] = seg.plateau_set;
    return j.dump(2) + "\n";
}

std::vector<int> load_plateau_group(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedHeader, path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("neurons") || !j["neurons"].is_array())
        fail(ErrorCode::MalformedHeader, path + ": expected an object with a 'neurons' array");
    std::vector<int> group;
    for (const auto& v : j["neurons"]) {
        if (!v.is_number_integer() || v.get<long>() < 0)
            fail(ErrorCode::MalformedHeader, path + ": neuron indices must be non-negative integers");
        group.push_back(v.get<int>());
    }
    return group;
}

std::string rank_delta_loss_plot(const RegimeSegmentation& rare) {
    ordered_json j;
    j["kind"] = "line";
    j["title"] = "Ablation influence by rank, rare targets";
    j["x"] = {{"label", "rank"}, {"scale", "log"}};
    j["y"] = {{"label", "delta loss"}, {"scale", "log"}};
    ordered_json series;
    series["name"] = "delta_loss_rare";
    std::vector<std::int64_t> xs(rare.ranked_values.size());
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<std::int64_t>(i) + 1;
    series["x"] = xs;
    series["y"] = rare.ranked_values;
    j["series"] = ordered_json::array({series});
    ordered_json vlines = ordered_json::array();
    if (rare.plateau_end_rank > 0)
        vlines.push_back({{"x", rare.plateau_end_rank}, {"label", "plateau end"}});
    if (rare.powerlaw_end_rank > 0)
        vlines.push_back({{"x", rare.powerlaw_end_rank}, {"label", "power law end"}});
    j["vlines"] = vlines;
    return j.dump(2) + "\n";
}

std::string alpha_hill_plot(const SpectralReport& report) {
    ordered_json j;
    j["kind"] = "bar";
    j["title"] = "Hill tail exponent of the correlation spectrum";
    j["y"] = {{"label", "alpha_hill"}};
    ordered_json plateau;
    plateau["name"] = "plateau group";
    plateau["value"] = report.alpha;
    plateau["stddev"] = nullptr;
    ordered_json random;
    random["name"] = "random groups";
    random["value"] = report.baseline.mean;
    random["stddev"] = report.baseline.stddev;
    j["bars"] = ordered_json::array({plateau, random});
    return j.dump(2) + "\n";
}

std::string report_json(const FullRunResult& run, const std::string& resolved_config,
                        const ReportInputs& inputs) {
    ordered_json j;
    j["schema_version"] = 1;
    j["generator"] = "raretok";
    j["config"] = ordered_json::parse(resolved_config);

    ordered_json in;
    in["model"] = {{"path", inputs.model.path}, {"fnv1a64", inputs.model.fnv1a64}};
    in["corpus"] = {{"path", inputs.corpus.path}, {"fnv1a64", inputs.corpus.fnv1a64}};
    if (inputs.count_corpus) {
        in["count_corpus"] = {{"path", inputs.count_corpus->path},
                              {"fnv1a64", inputs.count_corpus->fnv1a64}};
    } else {
        in["count_corpus"] = nullptr;
    }
    j["inputs"] = in;

    j["evaluated_tokens"] = run.evaluated_tokens;
    j["partial"] = run.partial;
    j["skipped"] = run.skipped;

    ordered_json classes;
    classes["vocab_size"] = run.split.classes.size();
    classes["elbow_rank"] = run.split.elbow_rank;
    classes["elbow_found"] = run.split.elbow_found;
    classes["percentile_cut"] = run.split.percentile_cut;
    classes["rare"] = run.split.class_size(TokenClass::Rare);
    classes["common"] = run.split.class_size(TokenClass::Common);
    classes["excluded"] = run.split.class_size(TokenClass::Excluded);
    j["token_classes"] = classes;

    ordered_json sweep;
    sweep["neurons"] = run.sweep.ranking.size();
    sweep["rare_positions"] = run.sweep.rare_positions;
    sweep["common_positions"] = run.sweep.common_positions;
    sweep["excluded_positions"] = run.sweep.excluded_positions;
    ordered_json top = ordered_json::array();
    std::size_t shown = std::min<std::size_t>(32, run.sweep.ranking.size());
    for (std::size_t r = 0; r < shown; ++r) {
        int neuron = run.sweep.ranking[r];
        top.push_back({{"neuron", neuron},
                       {"delta_loss_rare", run.sweep.delta_loss_rare(neuron)},
                       {"delta_loss_common", run.sweep.delta_loss_common(neuron)},
                       {"delta_loss_all", run.sweep.delta_loss_all(neuron)}});
    }
    sweep["top"] = top;
    j["sweep"] = sweep;

    ordered_json regimes;
    regimes["rare_only_plateau"] =
        run.regimes_rare.plateau_end_rank > 0 && run.regimes_common.plateau_end_rank == 0;
    regimes["rare"] = segmentation_block(run.regimes_rare);
    regimes["common"] = segmentation_block(run.regimes_common);
    j["regimes"] = regimes;

    if (run.geometry) {
        const auto& g = *run.geometry;
        ordered_json block;
        block["group_size"] = g.group_size;
        block["d_eff"] = g.d_eff;
        block["d_eff_ratio"] = g.d_eff_ratio;
        block["baseline"] = baseline_block(g.baseline);
        block["sample_positions"] = g.sample_positions;
        j["geometry"] = block;
    } else {
        j["geometry"] = nullptr;
    }

    if (run.graph) {
        const auto& g = *run.graph;
        ordered_json block;
        block["q"] = g.q;
        block["communities"] = g.communities;
        block["mean_community_size"] = g.mean_community_size;
        block["group_size"] = g.group_size;
        block["baseline"] = baseline_block(g.baseline);
        block["sample_positions"] = g.sample_positions;
        j["graph"] = block;
    } else {
        j["graph"] = nullptr;
    }

    if (run.attention) {
        const auto& a = *run.attention;
        ordered_json block;
        block["spearman_mean"] = a.spearman_mean;
        block["spearman_std"] = a.spearman_std;
        block["rare_positions"] = a.rare_positions;
        block["common_positions"] = a.common_positions;
        ordered_json heads = ordered_json::array();
        for (const auto& h : a.heads) {
            ordered_json hj;
            hj["layer"] = h.layer;
            hj["head"] = h.head;
            hj["gini_rare_mean"] = h.gini_rare_mean;
            hj["gini_rare_std"] = h.gini_rare_std;
            hj["gini_common_mean"] = h.gini_common_mean;
            hj["gini_common_std"] = h.gini_common_std;
            hj["welch_t"] = h.welch_t;
            hj["welch_p"] = h.welch_p;
            if (h.spearman_defined) {
                hj["spearman_r"] = h.spearman_r;
            } else {
                hj["spearman_r"] = nullptr;
            }
            hj["impact"] = h.impact;
            heads.push_back(hj);
        }
        block["heads"] = heads;
        ordered_json impacts = ordered_json::array();
        for (const auto& imp : a.impacts) {
            impacts.push_back(
                {{"kind", imp.kind}, {"layer", imp.layer}, {"head", imp.head}, {"impact", imp.impact}});
        }
        block["impacts"] = impacts;
        j["attention"] = block;
    } else {
        j["attention"] = nullptr;
    }

    if (run.spectral) {
        const auto& s = *run.spectral;
        ordered_json block;
        block["alpha"] = s.alpha;
        block["k"] = s.k;
        block["lambda_k"] = s.lambda_k;
        block["degenerate"] = s.degenerate;
        block["group_size"] = s.group_size;
        block["weight_source"] = s.weight_source;
        block["baseline"] = baseline_block(s.baseline);
        j["spectrum"] = block;
    } else {
        j["spectrum"] = nullptr;
    }

    return j.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoFailure, "cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::IoFailure, "write failed for " + path);
}

void emit_report(const FullRunResult& run, const std::string& resolved_config,
                 const ReportInputs& inputs, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "tables", ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir + "/tables: " + ec.message());
    fs::create_directories(fs::path(out_dir) / "plots", ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir + "/plots: " + ec.message());

    auto at = [&](const char* rel) { return (fs::path(out_dir) / rel).string(); };

    write_file(at("report.json"), report_json(run, resolved_config, inputs));
    write_file(at("plateau.json"), plateau_json(run.regimes_rare, TokenClass::Rare));
    write_file(at("tables/token_classes.csv"), split_csv(run.split));
    write_file(at("tables/sweep.csv"), sweep_csv(run.sweep));
    write_file(at("tables/regimes.csv"), regimes_csv(run.regimes_rare, run.regimes_common));
    if (run.geometry) write_file(at("tables/geometry.csv"), geometry_csv(*run.geometry));
    if (run.graph) write_file(at("tables/graph.csv"), graph_csv(*run.graph));
    if (run.attention) {
        write_file(at("tables/attention_heads.csv"), attention_heads_csv(*run.attention));
        write_file(at("tables/attention_impact.csv"), attention_impact_csv(*run.attention));
    }
    if (run.spectral) write_file(at("tables/spectrum.csv"), spectrum_csv(*run.spectral));
    write_file(at("plots/rank_delta_loss.json"), rank_delta_loss_plot(run.regimes_rare));
    if (run.spectral) write_file(at("plots/alpha_hill.json"), alpha_hill_plot(*run.spectral));
}

}  // namespace raretok
