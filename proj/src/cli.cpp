// Copyright 2026 The actscan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "actscan/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "actscan/activation_store.hpp"
#include "actscan/error.hpp"
#include "actscan/layer_divergence.hpp"
#include "actscan/localization.hpp"
#include "actscan/overlap.hpp"
#include "actscan/reports.hpp"
#include "actscan/rng.hpp"
#include "actscan/subset_scan.hpp"
#include "actscan/synth_bench.hpp"

namespace actscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::size_t resolve_jobs(int flag) {
  if (flag > 0) return static_cast<std::size_t>(flag);
  if (const char* env = std::getenv("ACTSCAN_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 0;
}

// Bookkeeping for one invocation; emits a run manifest next to each output.
struct Invocation {
  std::string command;
  std::vector<std::string> args;
  json config = json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::uint64_t seed = 0;

  std::string config_hash() const {
    json inputs_json = json::array();
    for (const auto& p : inputs) inputs_json.push_back(hex(fnv1a(read_text(p))));
    const json canonical = {{"command", command}, {"config", config}, {"inputs", inputs_json}};
    return hex(fnv1a(canonical.dump()));
  }

  void write_manifests() const {
    json inputs_json = json::array();
    for (const auto& p : inputs)
      inputs_json.push_back({{"path", p.string()}, {"fnv1a64", hex(fnv1a(read_text(p)))}});
    json outputs_json = json::array();
    for (const auto& p : outputs) outputs_json.push_back(p.string());
    const json manifest = {{"command", command},
                           {"argv", args},
                           {"cwd", fs::current_path().string()},
                           {"config", config},
                           {"config_hash", config_hash()},
                           {"inputs", std::move(inputs_json)},
                           {"outputs", std::move(outputs_json)},
                           {"seed", seed},
                           {"timestamp", utc_timestamp()},
                           {"tool_version", kToolVersion}};
    for (const auto& p : outputs) {
      fs::path m = p;
      m += ".run.json";
      write_text(m, dump(manifest));
    }
  }
};

struct ScanFlags {
  std::string score = "berk-jones";
  double alpha_max = 0.5;
  std::size_t restarts = 10;
  std::size_t max_iters = 20;
  double init_fraction = 0.5;
  bool two_sided = false;
  bool strict = false;

  void attach(CLI::App* app, bool with_pvalue_flags = true) {
    app->add_option("--score", score, "berk-jones | higher-criticism")->capture_default_str();
    app->add_option("--alpha-max", alpha_max)->capture_default_str();
    app->add_option("--restarts", restarts)->capture_default_str();
    app->add_option("--max-iters", max_iters)->capture_default_str();
    app->add_option("--init-fraction", init_fraction)->capture_default_str();
    if (with_pvalue_flags) {
      app->add_flag("--two-sided", two_sided, "two-sided empirical p-values");
      app->add_flag("--strict", strict, "count strictly greater background values only");
    }
  }

  ScanConfig config(std::uint64_t seed) const {
    ScanConfig c;
    c.score_kind = parse_score_kind(score);
    c.alpha_max = alpha_max;
    c.restarts = restarts;
    c.max_iters = max_iters;
    c.init_fraction = init_fraction;
    c.seed = seed;
    c.validate();
    return c;
  }

  PValueOptions pvalues() const {
    return {two_sided ? TailMode::kTwoSided : TailMode::kUpper, strict};
  }

  json to_config_json(bool with_pvalue_flags = true) const {
    json j = {{"score", score},
              {"alpha_max", alpha_max},
              {"restarts", restarts},
              {"max_iters", max_iters},
              {"init_fraction", init_fraction}};
    if (with_pvalue_flags) {
      j["two_sided"] = two_sided;
      j["strict"] = strict;
    }
    return j;
  }
};

// ---------------------------------------------------------------------------

struct LayersCmd {
  std::string manifest, persona, out, csv, points_out;
  std::size_t pcs = 3, n = 100, seeds = 5;
  std::uint64_t seed = 0;
  std::vector<int> layers;
  bool standardize = false, raw_space = false;
  int jobs = 0;

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest JSON")->required();
    app->add_option("--persona", persona)->required();
    app->add_option("--pcs", pcs, "principal components")->capture_default_str();
    app->add_option("--n", n, "rows sampled per direction")->capture_default_str();
    app->add_option("--seeds", seeds, "number of seeded runs")->capture_default_str();
    app->add_option("--seed", seed, "first seed")->capture_default_str();
    app->add_option("--layers", layers, "layers to cover (default: all)");
    app->add_flag("--standardize", standardize, "z-score columns before PCA");
    app->add_flag("--raw-space-metrics", raw_space, "cluster metrics on raw activations");
    app->add_option("--out", out, "report JSON")->required();
    app->add_option("--csv", csv, "optional CSV, one row per layer and metric");
    app->add_option("--points-out", points_out, "optional PC scores of the first seed");
    app->add_option("--jobs", jobs);
  }

  void run(Invocation& inv) const {
    const DatasetManifest m = load_manifest(manifest);
    LayerSweepOptions opt;
    opt.k = pcs;
    opt.n = n;
    opt.seeds.clear();
    for (std::size_t i = 0; i < seeds; ++i) opt.seeds.push_back(seed + i);
    opt.layers = layers;
    opt.pca.standardize = standardize;
    opt.raw_space_metrics = raw_space;
    opt.jobs = resolve_jobs(jobs);
    inv.config = {{"manifest", manifest}, {"persona", persona}, {"pcs", pcs},
                  {"n", n},               {"seeds", opt.seeds}, {"layers", layers},
                  {"standardize", standardize}, {"raw_space_metrics", raw_space}};
    inv.inputs.push_back(manifest);
    for (const auto& e : m.matrices)
      if (e.key.persona == persona) inv.inputs.push_back(m.resolve(e));
    inv.seed = seed;

    std::vector<PcaScatter> scatter;
    const LayerDivergenceReport report = layer_sweep(m, persona, opt, &scatter);
    const json doc = to_json(report);
    write_text(out, dump(doc));
    inv.outputs.push_back(out);
    if (!csv.empty()) {
      write_text(csv, emit_plot_data(doc, PlotKind::kLayerCurves));
      inv.outputs.push_back(csv);
    }
    if (!points_out.empty()) {
      write_text(points_out, dump(to_json(scatter, persona)));
      inv.outputs.push_back(points_out);
    }
  }
};

struct ScanCmd {
  std::string background, test, out;
  std::uint64_t seed = 0;
  ScanFlags flags;
  int jobs = 0;

  void attach(CLI::App* app) {
    app->add_option("--background", background, "H0 activations (ACTV)")->required();
    app->add_option("--test", test, "test activations (ACTV)")->required();
    app->add_option("--seed", seed)->capture_default_str();
    flags.attach(app);
    app->add_option("--out", out, "scan result JSON")->required();
    app->add_option("--jobs", jobs);
  }

  void run(Invocation& inv) const {
    ScanConfig cfg = flags.config(seed);
    cfg.jobs = resolve_jobs(jobs);
    inv.config = flags.to_config_json();
    inv.config["background"] = background;
    inv.config["test"] = test;
    inv.config["seed"] = seed;
    inv.inputs = {background, test};
    inv.seed = seed;
    const PValueMatrix p = empirical_pvalues(load_matrix(background), load_matrix(test), flags.pvalues());
    const ScanResult result = scan(p, cfg);
    write_text(out, dump(to_json(result, cfg)));
    inv.outputs.push_back(out);
  }
};

struct LocalizeCmd {
  std::string manifest, target, out, consensus = "frequency";
  int level = 2, layer = 0;
  std::size_t runs = 100, test_size = 200;
  double h1_fraction = 0.5, tau = 0.5, background_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;
  bool kmeans = false;
  ScanFlags flags;
  int jobs = 0;

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifest)->required();
    app->add_option("--level", level, "0, 1 or 2")->capture_default_str();
    app->add_option("--target", target, "persona (levels 1, 2) or topic (level 0)")->required();
    app->add_option("--layer", layer)->required();
    app->add_option("--runs", runs)->capture_default_str();
    app->add_option("--test-size", test_size)->capture_default_str();
    app->add_option("--h1-fraction", h1_fraction)->capture_default_str();
    app->add_option("--tau", tau)->capture_default_str();
    app->add_option("--consensus", consensus, "frequency | union | intersection")
        ->capture_default_str();
    app->add_option("--background-fraction", background_fraction)->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    flags.attach(app);
    app->add_flag("--kmeans-baseline", kmeans, "also report the 2-means baseline");
    app->add_option("--out", out, "localization report JSON")->required();
    app->add_option("--jobs", jobs);
  }

  void run(Invocation& inv) const {
    const DatasetManifest m = load_manifest(manifest);
    const ScanConfig cfg = flags.config(seed);
    LocalizationOptions opt;
    opt.n_runs = runs;
    opt.test_size = test_size;
    opt.h1_fraction = h1_fraction;
    opt.tau = tau;
    opt.consensus = parse_consensus_mode(consensus);
    opt.seed = seed;
    opt.jobs = resolve_jobs(jobs);
    opt.pvalues = flags.pvalues();
    inv.config = flags.to_config_json();
    inv.config.update({{"manifest", manifest}, {"level", level}, {"target", target},
                       {"layer", layer}, {"runs", runs}, {"test_size", test_size},
                       {"h1_fraction", h1_fraction}, {"tau", tau}, {"consensus", consensus},
                       {"background_fraction", background_fraction}, {"seed", seed},
                       {"kmeans_baseline", kmeans}});
    inv.inputs.push_back(manifest);
    for (const auto& e : m.matrices)
      if (e.key.layer == layer) inv.inputs.push_back(m.resolve(e));
    inv.seed = seed;

    TaskOptions task_opt;
    task_opt.background_fraction = background_fraction;
    const ScanTask task = build_level_task(m, level, target, layer,
                                           Rng::derive({seed, 0x5b11}).next(), task_opt);
    const LocalizationReport report = run_localization(task, cfg, opt);

    fs::path freq = fs::path(out).replace_extension(".freq.actv");
    std::vector<float> values(report.selection_frequency.begin(), report.selection_frequency.end());
    const std::size_t width = values.size();
    write_matrix(ActivationMatrix(1, width, std::move(values)), freq);
    json doc = to_json(report, freq.filename().string());
    doc["model_id"] = m.model_id;
    if (kmeans) doc["baseline"] = to_json(run_kmeans_baseline(task, opt));
    write_text(out, dump(doc));
    inv.outputs = {out, freq};
  }
};

// A set file is a localization report (its consensus set), an object with
// "name" and "positions", or a bare index array named after the file.
std::pair<std::string, std::vector<std::size_t>> read_set_file(const fs::path& path) {
  const json doc = read_json(path);
  try {
    if (doc.is_array()) return {path.stem().string(), doc.get<std::vector<std::size_t>>()};
    if (doc.contains("consensus")) {
      std::string name = doc.at("target").get<std::string>();
      if (doc.contains("level")) name += "@L" + std::to_string(doc.at("level").get<int>());
      return {name, doc.at("consensus").get<std::vector<std::size_t>>()};
    }
    return {doc.value("name", path.stem().string()),
            doc.at("positions").get<std::vector<std::size_t>>()};
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": not a set file: " + e.what());
  }
}

struct OverlapCmd {
  std::vector<std::string> sets, names, level2;
  std::string level0, out;
  std::size_t universe = 4096;

  void attach(CLI::App* app) {
    app->add_option("--sets", sets, "set files (up to 16)");
    app->add_option("--names", names, "override set names, in --sets order");
    app->add_option("--level0", level0, "level-0 set file for cross-level overlap");
    app->add_option("--level2", level2, "level-2 set files paired with --level0");
    app->add_option("--universe", universe, "activation width J")->capture_default_str();
    app->add_option("--out", out, ".csv for upset rows, .json for the full report")->required();
  }

  void run(Invocation& inv) const {
    inv.config = {{"sets", sets},     {"names", names},       {"level0", level0},
                  {"level2", level2}, {"universe", universe}, {"out_format", fs::path(out).extension().string()}};
    if (!level0.empty()) {
      if (level2.empty()) throw UsageError("--level0 needs at least one --level2 file");
      if (!sets.empty()) throw UsageError("--sets cannot be combined with --level0");
      const auto [name0, set0] = read_set_file(level0);
      inv.inputs.push_back(level0);
      std::vector<CrossLevelPairing> pairings;
      for (const auto& f : level2) {
        const auto [name2, set2] = read_set_file(f);
        inv.inputs.push_back(f);
        pairings.push_back({name0, name2, cross_level_overlap(set0, set2, universe)});
      }
      const json doc = to_json(pairings, universe);
      write_text(out, fs::path(out).extension() == ".csv" ? emit_plot_data(doc, PlotKind::kSankey)
                                                          : dump(doc));
      inv.outputs.push_back(out);
      return;
    }
    if (sets.empty()) throw UsageError("overlap needs --sets or --level0/--level2");
    if (!names.empty() && names.size() != sets.size())
      throw UsageError("--names must match --sets in length");
    NamedSetFamily family;
    family.universe = universe;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      auto [name, set] = read_set_file(sets[i]);
      family.names.push_back(names.empty() ? name : names[i]);
      family.sets.push_back(std::move(set));
      inv.inputs.push_back(sets[i]);
    }
    const json doc = to_json(intersection_counts(family), jaccard_matrix(family));
    write_text(out, fs::path(out).extension() == ".csv" ? emit_plot_data(doc, PlotKind::kUpset)
                                                        : dump(doc));
    inv.outputs.push_back(out);
  }
};

struct SynthPowerCmd {
  double mu = 2.0;
  std::size_t dim = 512, planted = 40, seeds = 20, n_background = 300, n_signal = 100,
              n_null = 100;
  std::uint64_t seed = 0;
  std::string out;
  ScanFlags flags;
  int jobs = 0;

  void attach(CLI::App* app) {
    app->add_option("--mu", mu, "planted shift")->capture_default_str();
    app->add_option("--dim", dim)->capture_default_str();
    app->add_option("--planted", planted, "planted position count")->capture_default_str();
    app->add_option("--seeds", seeds)->capture_default_str();
    app->add_option("--seed", seed, "first seed")->capture_default_str();
    app->add_option("--n-background", n_background)->capture_default_str();
    app->add_option("--n-signal", n_signal)->capture_default_str();
    app->add_option("--n-null", n_null)->capture_default_str();
    flags.attach(app, false);
    app->add_option("--out", out, "power report JSON")->required();
    app->add_option("--jobs", jobs);
  }

  void run(Invocation& inv) const {
    SynthConfig synth;
    synth.mu = mu;
    synth.dim = dim;
    synth.planted_count = planted;
    synth.n_background = n_background;
    synth.n_signal = n_signal;
    synth.n_null = n_null;
    synth.seed = seed;
    const ScanConfig cfg = flags.config(seed);
    inv.config = flags.to_config_json(false);
    inv.config.update({{"mu", mu}, {"dim", dim}, {"planted", planted}, {"seeds", seeds},
                       {"seed", seed}, {"n_background", n_background}, {"n_signal", n_signal},
                       {"n_null", n_null}});
    inv.seed = seed;
    const PowerReport report = detection_power(synth, cfg, seeds, resolve_jobs(jobs));
    write_text(out, dump(to_json(report)));
    inv.outputs.push_back(out);
  }
};

struct PlotDataCmd {
  std::string kind, report, out;

  void attach(CLI::App* app) {
    app->add_option("--kind", kind, "layer-curves | upset | venn | sankey | pca-scatter")
        ->required();
    app->add_option("--report", report, "report JSON")->required();
    app->add_option("--out", out, "CSV output")->required();
  }

  void run(Invocation& inv) const {
    inv.config = {{"kind", kind}, {"report", report}};
    inv.inputs.push_back(report);
    write_text(out, emit_plot_data(read_json(report), parse_plot_kind(kind)));
    inv.outputs.push_back(out);
  }
};

struct SynthDatasetCmd {
  std::string out_dir;
  std::size_t per_direction = 300, dim = 64, planted = 8;
  int layers = 4;
  double mu = 3.0;
  std::uint64_t seed = 0;
  std::vector<std::string> personas;

  void attach(CLI::App* app) {
    app->add_option("--out-dir", out_dir)->required();
    app->add_option("--per-direction", per_direction)->capture_default_str();
    app->add_option("--dim", dim)->capture_default_str();
    app->add_option("--layers", layers)->capture_default_str();
    app->add_option("--planted", planted)->capture_default_str();
    app->add_option("--mu", mu)->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--personas", personas, "subset of the persona catalog (default: all 14)");
  }

  void run(Invocation& inv) const {
    SynthDatasetConfig cfg;
    cfg.per_direction = per_direction;
    cfg.dim = dim;
    cfg.layers = layers;
    cfg.planted = planted;
    cfg.mu = mu;
    cfg.seed = seed;
    for (const auto& p : personas) {
      bool found = false;
      for (const auto& entry : persona_catalog())
        if (entry.first == p) cfg.personas.push_back(entry), found = true;
      if (!found) throw UsageError("unknown persona '" + p + "'");
    }
    inv.config = {{"per_direction", per_direction}, {"dim", dim}, {"layers", layers},
                  {"planted", planted}, {"mu", mu}, {"seed", seed}, {"personas", personas}};
    inv.seed = seed;
    inv.outputs.push_back(write_synthetic_dataset(out_dir, cfg));
  }
};

int replay(const std::string& path, std::ostream& out, std::ostream& err) {
  const json manifest = read_json(path);
  const auto args = manifest.at("argv").get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "replay") throw UsageError("refusing to replay a replay");
  const fs::path previous = fs::current_path();
  fs::current_path(manifest.at("cwd").get<std::string>());
  int code = 0;
  try {
    code = run_command(args, out, err);
  } catch (...) {
    fs::current_path(previous);
    throw;
  }
  fs::current_path(previous);
  return code;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"actscan: localize labelled concepts in per-layer activation matrices", "actscan"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  LayersCmd layers;
  ScanCmd scan_cmd;
  LocalizeCmd localize;
  OverlapCmd overlap;
  SynthPowerCmd power;
  PlotDataCmd plot;
  SynthDatasetCmd dataset;
  std::string replay_path;

  CLI::App* c_layers = app.add_subcommand("layers", "PCA separation metrics across layers");
  layers.attach(c_layers);
  CLI::App* c_scan = app.add_subcommand("scan", "subset scan of test activations against a background");
  scan_cmd.attach(c_scan);
  CLI::App* c_localize = app.add_subcommand("localize", "repeated level-0/1/2 localization runs");
  localize.attach(c_localize);
  CLI::App* c_overlap = app.add_subcommand("overlap", "upset counts, Jaccard and cross-level overlap");
  overlap.attach(c_overlap);
  CLI::App* c_power = app.add_subcommand("synth-power", "detection power on planted synthetic data");
  power.attach(c_power);
  CLI::App* c_plot = app.add_subcommand("plot-data", "CSV tables for plotting a report");
  plot.attach(c_plot);
  CLI::App* c_dataset = app.add_subcommand("synth-dataset", "write a synthetic persona dataset");
  dataset.attach(c_dataset);
  CLI::App* c_replay = app.add_subcommand("replay", "re-run a command from its run manifest");
  c_replay->add_option("run_manifest", replay_path, "*.run.json file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (c_replay->parsed()) return replay(replay_path, out, err);
    Invocation inv;
    inv.args = args;
    if (c_layers->parsed()) {
      inv.command = "layers";
      layers.run(inv);
    } else if (c_scan->parsed()) {
      inv.command = "scan";
      scan_cmd.run(inv);
    } else if (c_localize->parsed()) {
      inv.command = "localize";
      localize.run(inv);
    } else if (c_overlap->parsed()) {
      inv.command = "overlap";
      overlap.run(inv);
    } else if (c_power->parsed()) {
      inv.command = "synth-power";
      power.run(inv);
    } else if (c_plot->parsed()) {
      inv.command = "plot-data";
      plot.run(inv);
    } else if (c_dataset->parsed()) {
      inv.command = "synth-dataset";
      dataset.run(inv);
    }
    inv.write_manifests();
    for (const auto& p : inv.outputs) out << p.string() << "\n";
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace actscan
