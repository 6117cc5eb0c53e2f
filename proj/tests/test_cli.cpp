#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raretok/cli.hpp"
#include "raretok/config.hpp"
#include "raretok/report.hpp"
#include "raretok/synth.hpp"
#include "raretok/token_stats.hpp"

using namespace raretok;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("raretok_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() { static int c = 0; return c; }
};

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("raretok");
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    CliResult res;
    res.code = cli_main(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    res.out = out.str();
    res.err = err.str();
    return res;
}

bool contains(const std::string& text, const std::string& needle) {
    return text.find(needle) != std::string::npos;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// One synthesized model shared by the subcommand cases. The file set is
// produced through the synth subcommand itself.
struct Workspace {
    TempDir dir;
    CliResult synth;
    std::string model;
    std::string stream;
    std::vector<int> planted;
    std::string sweep_dir;
    CliResult ablate;
    std::string regime_dir;
    CliResult regimes;
};

const Workspace& workspace() {
    static Workspace w = [] {
        Workspace ws;
        const std::string spec = ws.dir.file("spec.json");
        write_text(spec, R"({
            "arch": {"n_layers": 2, "d_model": 32, "d_mlp": 128, "n_heads": 4,
                     "vocab_size": 96, "max_context": 64},
            "planted_count": 12,
            "stream_length": 24000,
            "min_rare_targets": 250,
            "seed": 3
        })");
        const std::string synth_dir = ws.dir.file("synth");
        ws.synth = run_cli({"synth", "--spec", spec, "--out", synth_dir});
        ws.model = (fs::path(synth_dir) / "model.bin").string();
        ws.stream = (fs::path(synth_dir) / "stream.bin").string();

        std::ifstream manifest(fs::path(synth_dir) / "manifest.json");
        if (manifest) {
            nlohmann::json doc = nlohmann::json::parse(manifest, nullptr, false);
            if (!doc.is_discarded() && doc.contains("planted_neurons"))
                ws.planted = doc["planted_neurons"].get<std::vector<int>>();
        }

        ws.sweep_dir = ws.dir.file("sweep");
        ws.ablate = run_cli({"ablate", "--model", ws.model, "--corpus", ws.stream, "--out",
                             ws.sweep_dir, "--elbow-window", "11", "--threads", "0"});
        ws.regime_dir = ws.dir.file("regimes");
        ws.regimes = run_cli({"regimes", "--sweep", (fs::path(ws.sweep_dir) / "sweep.csv").string(),
                              "--class", "rare", "--out", ws.regime_dir});
        return ws;
    }();
    return w;
}

}  // namespace

TEST_CASE("bad invocations exit with the usage code") {
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"frobnicate"}).code == 2);
    CHECK(run_cli({"ablate"}).code == 2);  // --model and --corpus are required
    const CliResult res = run_cli({"--help"});
    CHECK(res.code == 0);
    CHECK(contains(res.out, "raretok"));
    CHECK(contains(res.out, "run-all"));
}

TEST_CASE("synth writes the model, stream and manifest") {
    const Workspace& ws = workspace();
    INFO(ws.synth.err);
    REQUIRE(ws.synth.code == 0);
    CHECK(contains(ws.synth.out, "planted_neurons: 12"));
    CHECK(contains(ws.synth.out, "stream_tokens: 24000"));
    CHECK(contains(ws.synth.out, "rare_target_positions:"));
    CHECK(fs::exists(ws.model));
    CHECK(fs::exists(ws.stream));
    CHECK(fs::exists(fs::path(ws.model).parent_path() / "spec_resolved.json"));
    REQUIRE(ws.planted.size() == 12);

    const ModelBundle bundle = load_model(ws.model);
    CHECK(bundle.arch.d_mlp == 128);
    CHECK(load_token_stream(ws.stream).size() == 24000);
}

TEST_CASE("synth rejects a malformed seed override") {
    const Workspace& ws = workspace();
    const std::string spec = (fs::path(ws.model).parent_path() / "spec_resolved.json").string();
    const CliResult res = run_cli({"synth", "--spec", spec, "--seed", "12x", "--out",
                                   ws.dir.file("unused")});
    CHECK(res.code == 2);
    CHECK(contains(res.err, "seed must be an unsigned integer"));
}

TEST_CASE("freq splits the vocabulary and saves it") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult res = run_cli({"freq", "--corpus", ws.stream, "--out", out.file("f"),
                                   "--elbow-window", "11"});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(contains(res.out, "vocab: 96"));
    CHECK(contains(res.out, "rare: "));
    CHECK(contains(res.out, "excluded: "));
    const TokenClassSplit split = load_split((fs::path(out.file("f")) / "split.json").string());
    CHECK(split.classes.size() == 96);
    CHECK(split.class_size(TokenClass::Rare) > 0);
    CHECK(fs::exists(fs::path(out.file("f")) / "token_classes.csv"));
}

TEST_CASE("numeric failures exit with code four and a flags line") {
    const Workspace& ws = workspace();
    TempDir out;
    // the 96-token vocabulary cannot fill the default elbow window
    const CliResult res = run_cli({"freq", "--corpus", ws.stream, "--out", out.file("f")});
    CHECK(res.code == 4);
    CHECK(contains(res.err, "flags: CurveTooShort"));

    write_text(out.file("tiny.csv"),
               "rank,neuron,delta_loss_rare,delta_loss_common,delta_loss_all\n"
               "1,0,0.5,0.4,0.45\n"
               "2,1,0.25,0.2,0.22\n"
               "3,2,0.125,0.1,0.11\n");
    const CliResult seg = run_cli({"regimes", "--sweep", out.file("tiny.csv"), "--class", "rare",
                                   "--out", out.file("r")});
    CHECK(seg.code == 4);
    CHECK(contains(seg.err, "flags: InsufficientPositiveMass"));
}

TEST_CASE("ablate ranks neurons and writes a reloadable table") {
    const Workspace& ws = workspace();
    INFO(ws.ablate.err);
    REQUIRE(ws.ablate.code == 0);
    CHECK(contains(ws.ablate.out, "positions: rare "));
    CHECK(contains(ws.ablate.out, "top neurons by rare delta loss:"));

    const AblationSweepResult sweep =
        load_sweep_csv((fs::path(ws.sweep_dir) / "sweep.csv").string());
    CHECK(sweep.ranking.size() == 128);
    CHECK(sweep.delta_loss_rare.size() == 128);
    for (std::size_t r = 0; r + 1 < sweep.ranking.size(); ++r)
        CHECK(sweep.delta_loss_rare(sweep.ranking[r]) >=
              sweep.delta_loss_rare(sweep.ranking[r + 1]));
    CHECK(fs::exists(fs::path(ws.sweep_dir) / "split.json"));
}

TEST_CASE("regimes finds the planted plateau from the saved sweep") {
    const Workspace& ws = workspace();
    INFO(ws.regimes.err);
    REQUIRE(ws.regimes.code == 0);
    CHECK(contains(ws.regimes.out, "plateau: present (end rank 12)"));
    CHECK(contains(ws.regimes.out, "kappa: "));

    std::vector<int> group =
        load_plateau_group((fs::path(ws.regime_dir) / "plateau.json").string());
    std::sort(group.begin(), group.end());
    CHECK(group == ws.planted);
    CHECK(fs::exists(fs::path(ws.regime_dir) / "regimes.csv"));
}

TEST_CASE("regimes reports an absent plateau for the common class") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult res = run_cli({"regimes", "--sweep",
                                   (fs::path(ws.sweep_dir) / "sweep.csv").string(), "--class",
                                   "common", "--out", out.file("r")});
    REQUIRE(res.code == 0);
    CHECK(res.out.rfind("plateau: absent\n", 0) == 0);

    const CliResult bad = run_cli({"regimes", "--sweep",
                                   (fs::path(ws.sweep_dir) / "sweep.csv").string(), "--class",
                                   "weird", "--out", out.file("r2")});
    CHECK(bad.code == 2);
}

TEST_CASE("geometry runs on the plateau group") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult res = run_cli({"geometry", "--model", ws.model, "--corpus", ws.stream,
                                   "--plateau", (fs::path(ws.regime_dir) / "plateau.json").string(),
                                   "--out", out.file("g"), "--elbow-window", "11", "--seed", "1",
                                   "--threads", "0"});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(contains(res.out, "group_size: 12"));
    CHECK(contains(res.out, "d_eff: "));
    CHECK(contains(res.out, "p_value: "));
    CHECK(fs::exists(fs::path(out.file("g")) / "geometry.csv"));

    const CliResult both = run_cli({"geometry", "--model", ws.model, "--corpus", ws.stream,
                                    "--plateau", "x.json", "--group", "1,2", "--out", out.file("g2"),
                                    "--seed", "1"});
    CHECK(both.code == 2);
    CHECK(contains(both.err, "either --group or --plateau"));
    const CliResult neither = run_cli({"geometry", "--model", ws.model, "--corpus", ws.stream,
                                       "--out", out.file("g3"), "--seed", "1"});
    CHECK(neither.code == 2);
}

TEST_CASE("graph runs on the plateau group") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult res = run_cli({"graph", "--model", ws.model, "--corpus", ws.stream,
                                   "--plateau", (fs::path(ws.regime_dir) / "plateau.json").string(),
                                   "--out", out.file("g"), "--elbow-window", "11",
                                   "--eval-tokens", "12000", "--seed", "1", "--threads", "0"});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(contains(res.out, "q: "));
    CHECK(contains(res.out, "communities: "));
    CHECK(fs::exists(fs::path(out.file("g")) / "graph.csv"));
}

TEST_CASE("attention reports head statistics and impacts") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult res = run_cli({"attention", "--model", ws.model, "--corpus", ws.stream,
                                   "--group", "0,1,2", "--out", out.file("a"), "--elbow-window",
                                   "11", "--eval-tokens", "3000", "--seed", "1", "--threads", "0"});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(contains(res.out, "heads: 8"));
    CHECK(contains(res.out, "max_head: layer "));
    CHECK(contains(res.out, "all_heads: layer "));
    CHECK(fs::exists(fs::path(out.file("a")) / "attention_heads.csv"));
    CHECK(fs::exists(fs::path(out.file("a")) / "attention_impact.csv"));
}

TEST_CASE("spectrum needs twenty neurons and then reports alpha") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult small = run_cli({"spectrum", "--model", ws.model, "--group",
                                     "0,1,2,3,4,5,6,7,8,9,10,11", "--out", out.file("s"),
                                     "--seed", "1"});
    CHECK(small.code == 3);
    CHECK(contains(small.err, "GroupTooSmall"));

    std::string group = "0";
    for (int i = 1; i < 20; ++i) group += "," + std::to_string(i);
    const CliResult res = run_cli({"spectrum", "--model", ws.model, "--group", group, "--out",
                                   out.file("s2"), "--seed", "1"});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(contains(res.out, "alpha: "));
    CHECK(contains(res.out, "weight_source: w_in"));
    CHECK(fs::exists(fs::path(out.file("s2")) / "spectrum.csv"));

    const CliResult wout = run_cli({"spectrum", "--model", ws.model, "--group", group,
                                    "--use-w-out", "--out", out.file("s3"), "--seed", "1"});
    REQUIRE(wout.code == 0);
    CHECK(contains(wout.out, "weight_source: w_out"));
}

TEST_CASE("run-all needs a seed from the flags or the config file") {
    const Workspace& ws = workspace();
    TempDir out;
    const CliResult res = run_cli({"run-all", "--model", ws.model, "--corpus", ws.stream,
                                   "--out", out.file("r")});
    CHECK(res.code == 2);
    CHECK(contains(res.err, "a seed is required"));
}

TEST_CASE("command-line flags override the config file") {
    const Workspace& ws = workspace();
    TempDir out;
    const std::string cfg_path = out.file("run.cfg");
    write_text(cfg_path,
               "# analysis configuration\n"
               "model = \"" + ws.model + "\"\n"
               "corpus = " + ws.stream + "\n"
               "out = " + out.file("from_config") + "\n"
               "seed = 9\n"
               "elbow_window = 11\n"
               "eval_tokens = 4000\n"
               "baselines = 10\n"
               "restarts = 5\n"
               "threads = 0\n"
               "geometry = false\n"
               "graph = false\n"
               "attention = false\n"
               "spectral = false\n");
    const std::string run_dir = out.file("run");
    const CliResult res = run_cli({"run-all", "--config", cfg_path, "--eval-tokens", "2000",
                                   "--out", run_dir});
    INFO(res.err);
    REQUIRE(res.code == 0);
    CHECK(contains(res.out, "evaluated_tokens: 2000"));
    CHECK(contains(res.out, "skipped geometry: disabled"));
    CHECK_FALSE(fs::exists(out.file("from_config")));

    std::ifstream in(fs::path(run_dir) / "report.json");
    REQUIRE(in.good());
    const nlohmann::json doc = nlohmann::json::parse(in);
    CHECK(doc.at("schema_version") == 1);
    CHECK(doc.at("config").at("seed") == 9);
    CHECK(doc.at("config").at("eval_tokens") == 2000);
    CHECK(doc.at("evaluated_tokens") == 2000);
    CHECK(doc.at("partial") == true);
    CHECK(doc.at("skipped").size() == 4);
    CHECK(doc.at("geometry").is_null());
    CHECK(doc.at("spectrum").is_null());
    CHECK(doc.at("inputs").at("model").at("fnv1a64").get<std::string>().size() == 16);
    CHECK(fs::exists(fs::path(run_dir) / "tables" / "sweep.csv"));
    CHECK(fs::exists(fs::path(run_dir) / "plots" / "rank_delta_loss.json"));

    const CliResult rep = run_cli({"report", run_dir});
    REQUIRE(rep.code == 0);
    CHECK(contains(rep.out, "schema_version: 1"));
    CHECK(contains(rep.out, "seed: 9"));
    CHECK(contains(rep.out, "geometry: absent"));
    CHECK(contains(rep.out, "partial: true"));
}

TEST_CASE("report rejects missing or malformed summaries") {
    TempDir out;
    CHECK(run_cli({"report", out.file("missing.json")}).code == 3);
    write_text(out.file("broken.json"), "{not json");
    CHECK(run_cli({"report", out.file("broken.json")}).code == 3);
    write_text(out.file("empty.json"), "{}");
    const CliResult res = run_cli({"report", out.file("empty.json")});
    CHECK(res.code == 3);
    CHECK(contains(res.err, "missing fields"));
}

TEST_CASE("sweep tables reload exactly and reject damage") {
    TempDir out;
    AblationSweepResult sweep;
    sweep.delta_loss_rare = Vector(3);
    sweep.delta_loss_rare << 0.5, 1.0 / 3.0, 0.125;
    sweep.delta_loss_common = Vector(3);
    sweep.delta_loss_common << 0.1, 0.2, 0.3;
    sweep.delta_loss_all = Vector(3);
    sweep.delta_loss_all << 0.3, 0.26666666666666666, 0.18333333333333333;
    sweep.ranking = {0, 1, 2};
    write_text(out.file("sweep.csv"), sweep_csv(sweep));

    const AblationSweepResult back = load_sweep_csv(out.file("sweep.csv"));
    CHECK(back.delta_loss_rare == sweep.delta_loss_rare);
    CHECK(back.delta_loss_common == sweep.delta_loss_common);
    CHECK(back.delta_loss_all == sweep.delta_loss_all);
    CHECK(back.ranking == sweep.ranking);

    CHECK_THROWS_AS(load_sweep_csv(out.file("absent.csv")), Error);
    write_text(out.file("empty.csv"), "");
    CHECK_THROWS_AS(load_sweep_csv(out.file("empty.csv")), Error);
    write_text(out.file("header.csv"), "neuron,rare\n0,0.5\n");
    CHECK_THROWS_AS(load_sweep_csv(out.file("header.csv")), Error);
    const std::string head = "rank,neuron,delta_loss_rare,delta_loss_common,delta_loss_all\n";
    write_text(out.file("short_row.csv"), head + "1,0,0.5,0.4\n");
    CHECK_THROWS_AS(load_sweep_csv(out.file("short_row.csv")), Error);
    write_text(out.file("dup.csv"), head + "1,0,0.5,0.4,0.45\n2,0,0.25,0.2,0.22\n");
    CHECK_THROWS_AS(load_sweep_csv(out.file("dup.csv")), Error);
    write_text(out.file("gap.csv"), head + "1,0,0.5,0.4,0.45\n2,2,0.25,0.2,0.22\n");
    CHECK_THROWS_AS(load_sweep_csv(out.file("gap.csv")), Error);
    write_text(out.file("negative.csv"), head + "1,-1,0.5,0.4,0.45\n");
    CHECK_THROWS_AS(load_sweep_csv(out.file("negative.csv")), Error);
    write_text(out.file("nan.csv"), head + "1,0,zero,0.4,0.45\n");
    CHECK_THROWS_AS(load_sweep_csv(out.file("nan.csv")), Error);
    write_text(out.file("none.csv"), head);
    CHECK_THROWS_AS(load_sweep_csv(out.file("none.csv")), Error);
}

TEST_CASE("plateau files round trip and reject damage") {
    TempDir out;
    RegimeSegmentation seg;
    seg.plateau_end_rank = 3;
    seg.plateau_set = {7, 2, 19};
    write_text(out.file("p.json"), plateau_json(seg, TokenClass::Rare));
    CHECK(load_plateau_group(out.file("p.json")) == std::vector<int>{7, 2, 19});

    CHECK_THROWS_AS(load_plateau_group(out.file("absent.json")), Error);
    write_text(out.file("arr.json"), "[1, 2]");
    CHECK_THROWS_AS(load_plateau_group(out.file("arr.json")), Error);
    write_text(out.file("nokey.json"), R"({"class": "rare"})");
    CHECK_THROWS_AS(load_plateau_group(out.file("nokey.json")), Error);
    write_text(out.file("neg.json"), R"({"neurons": [3, -1]})");
    CHECK_THROWS_AS(load_plateau_group(out.file("neg.json")), Error);
    write_text(out.file("frac.json"), R"({"neurons": [3, 1.5]})");
    CHECK_THROWS_AS(load_plateau_group(out.file("frac.json")), Error);
    write_text(out.file("junk.json"), "{");
    CHECK_THROWS_AS(load_plateau_group(out.file("junk.json")), Error);
}

TEST_CASE("config files parse key = value lines") {
    TempDir out;
    write_text(out.file("good.cfg"),
               "# comment\n"
               "\n"
               "seed = 42   # trailing comment\n"
               "percentile = 0.2\n"
               "model = \"with spaces.bin\"\n"
               "corpus = plain.bin\n"
               "spectral_use_w_out = true\n"
               "eval_tokens = 5000\n");
    const RunConfig cfg = load_run_config(out.file("good.cfg"));
    CHECK(cfg.seed_set);
    CHECK(cfg.pipeline.seed == 42);
    CHECK(cfg.pipeline.percentile == 0.2);
    CHECK(cfg.model == "with spaces.bin");
    CHECK(cfg.corpus == "plain.bin");
    CHECK(cfg.pipeline.spectral_use_w_out);
    CHECK(cfg.pipeline.eval_tokens == 5000);

    CHECK_THROWS_AS(load_run_config(out.file("absent.cfg")), Error);
    write_text(out.file("noeq.cfg"), "seed = 1\njust words\n");
    CHECK_THROWS_WITH_AS(load_run_config(out.file("noeq.cfg")),
                         doctest::Contains(":2: expected key = value"), Error);
    write_text(out.file("unknown.cfg"), "banana = 3\n");
    CHECK_THROWS_WITH_AS(load_run_config(out.file("unknown.cfg")),
                         doctest::Contains("unknown config key 'banana'"), Error);
    write_text(out.file("badnum.cfg"), "seed = soon\n");
    CHECK_THROWS_AS(load_run_config(out.file("badnum.cfg")), Error);
    write_text(out.file("fraction.cfg"), "bins = 2.5\n");
    CHECK_THROWS_AS(load_run_config(out.file("fraction.cfg")), Error);
    write_text(out.file("badbool.cfg"), "geometry = yes\n");
    CHECK_THROWS_AS(load_run_config(out.file("badbool.cfg")), Error);
    write_text(out.file("badstr.cfg"), "model = \"unterminated\n");
    CHECK_THROWS_AS(load_run_config(out.file("badstr.cfg")), Error);
}

TEST_CASE("the resolved configuration omits paths and thread count") {
    RunConfig cfg;
    cfg.model = "somewhere.bin";
    cfg.pipeline.threads = 7;
    cfg.pipeline.seed = 13;
    const nlohmann::json doc = nlohmann::json::parse(cfg.resolved_json());
    CHECK(doc.at("seed") == 13);
    CHECK(doc.contains("percentile"));
    CHECK(doc.contains("tail_ratio"));
    CHECK(doc.contains("spectral_use_w_out"));
    CHECK_FALSE(doc.contains("threads"));
    CHECK_FALSE(doc.contains("model"));
    CHECK_FALSE(doc.contains("corpus"));
    CHECK_FALSE(doc.contains("out"));
}

TEST_CASE("group lists parse comma-separated indices") {
    CHECK(parse_group_list("3,17,42") == std::vector<int>{3, 17, 42});
    CHECK(parse_group_list(" 4 , 5 ") == std::vector<int>{4, 5});
    CHECK(parse_group_list("8") == std::vector<int>{8});
    CHECK_THROWS_AS(parse_group_list(""), Error);
    CHECK_THROWS_AS(parse_group_list(","), Error);
    CHECK_THROWS_AS(parse_group_list("1,-2"), Error);
    CHECK_THROWS_AS(parse_group_list("1,two"), Error);
    CHECK_THROWS_AS(parse_group_list("1.5"), Error);
}
