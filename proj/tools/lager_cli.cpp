#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "lager/annotation_io.hpp"
#include "lager/checkpoint.hpp"
#include "lager/config.hpp"
#include "lager/experiment.hpp"
#include "lager/graph.hpp"
#include "lager/manipulations.hpp"

using namespace lager;
namespace fs = std::filesystem;

namespace {

// --config plus a --<key> override for each listed config key. Overrides are
// applied after the file, in the order the keys are declared.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", file, "key = value config file");
    for (const auto& key : keys) app->add_option("--" + key, values[key], "config key " + key);
  }

  void apply(ExperimentConfig& cfg) const {
    for (const auto& [name, _] : detail::config_fields()) {
      const auto it = values.find(name);
      if (it != values.end() && !it->second.empty()) set_config_value(cfg, name, it->second);
    }
  }
};

std::vector<std::string> all_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, _] : detail::config_fields()) keys.push_back(name);
  return keys;
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!(out << bytes)) throw IoError("cannot write '" + path.string() + "'");
}

// ---- train -------------------------------------------------------------------

void cmd_train(const ConfigOptions& opts, const std::string& results_path) {
  ExperimentConfig cfg = opts.file.empty() ? ExperimentConfig{} : load_config_file(opts.file);
  opts.apply(cfg);
  const RunResult r = run_experiment(cfg);
  const std::string json = to_json(r).dump(2) + "\n";
  fs::path out = results_path;
  if (out.empty() && !cfg.output_dir.empty()) out = fs::path(cfg.output_dir) / "results.json";
  if (!out.empty()) write_file(out, json);
  std::cout << make_report({r}).markdown;
}

// ---- eval / perturb ----------------------------------------------------------

struct LoadedModel {
  ExperimentConfig cfg;
  TagSet tags{{}};
  ModelConfig mc;
  ModelParams params;
};

LoadedModel load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream text(checkpoint_config_text(bytes));
  std::string line, config, labels;
  int d_in = -1;
  while (std::getline(text, line)) {
    if (line.rfind("@labels = ", 0) == 0)
      labels = line.substr(10);
    else if (line.rfind("@feature_dim = ", 0) == 0)
      d_in = std::stoi(line.substr(15));
    else
      config += line + "\n";
  }
  if (d_in < 1) throw FormatError("checkpoint '" + path.string() + "' lacks @feature_dim");
  LoadedModel m;
  apply_config_text(m.cfg, config);
  std::vector<std::string> label_list;
  std::istringstream ls(labels);
  for (std::string l; std::getline(ls, l, ',');)
    if (!l.empty()) label_list.push_back(l);
  m.tags = TagSet(label_list);
  m.mc = model_config(m.cfg, d_in, static_cast<int>(m.tags.size()));
  m.params = deserialize_checkpoint(bytes, init_params(m.mc, 0)).params;
  return m;
}

std::vector<Document> load_test(const ExperimentConfig& cfg) {
  if (cfg.test_dir.empty()) throw ParameterError("--test_dir is required");
  LoadOptions lo;
  lo.format = parse_annotation_format(cfg.format);
  lo.max_tokens = static_cast<std::size_t>(cfg.max_tokens);
  return load_split(cfg.test_dir, lo);
}

PRF score(const LoadedModel& m, const std::vector<Document>& docs) {
  return evaluate(m.mc, m.params, prepare_all(docs, m.cfg, m.tags), m.tags).report.overall;
}

void cmd_eval(const std::string& checkpoint, const ConfigOptions& opts, const std::string& out) {
  LoadedModel m = load_checkpoint(checkpoint);
  opts.apply(m.cfg);
  const auto docs = load_test(m.cfg);
  const auto inputs = prepare_all(docs, m.cfg, m.tags);
  const auto ev = evaluate(m.mc, m.params, inputs, m.tags);
  const std::string csv = metrics_csv(ev.report);
  if (!out.empty()) write_file(out, csv);
  std::cout << csv;
}

void cmd_perturb(const std::string& checkpoint, const ConfigOptions& opts, const std::string& out) {
  LoadedModel m = load_checkpoint(checkpoint);
  m.cfg.manips.clear();
  opts.apply(m.cfg);
  if (m.cfg.manips.empty())
    for (const char* s : {"shift:a=20", "scale:sw=2,sh=2", "rotate:delta=8"}) m.cfg.manips.push_back(parse_manip(s));
  const auto docs = load_test(m.cfg);
  const PRF clean = score(m, docs);
  std::string csv = "manip,precision,recall,f1,diff\n";
  auto row = [&](const std::string& name, const PRF& p, const std::string& diff) {
    const std::string quoted = name.find(',') == std::string::npos ? name : "\"" + name + "\"";
    csv += quoted + "," + pct(p.precision) + "," + pct(p.recall) + "," + pct(p.f1) + "," + diff + "\n";
  };
  row("", clean, "");
  for (const auto& spec : m.cfg.manips) {
    std::vector<Document> moved;
    for (const auto& d : docs) moved.push_back(apply(spec, d));
    const PRF p = score(m, moved);
    row(to_string(spec), p, pct(clean.f1 - p.f1));
  }
  if (!out.empty()) write_file(out, csv);
  std::cout << csv;
}

// ---- graph -------------------------------------------------------------------

struct GraphArgs {
  std::string file, input_format = "auto", mode = "nearest", emit = "dot", angle_start = "zero",
                    ray_mode = "exact", manip;
  int k = 4;
  double theta = 60.0;
};

void cmd_graph(const GraphArgs& a) {
  Document doc = load_document(a.file, parse_annotation_format(a.input_format));
  if (!a.manip.empty()) doc = apply(parse_manip(a.manip), doc);
  GraphBundle b;
  if (a.mode == "nearest") {
    b = nearest_bundle(doc, a.k);
  } else if (a.mode == "angles") {
    if (a.angle_start != "zero" && a.angle_start != "theta") throw ParameterError("angle_start must be zero|theta");
    if (a.ray_mode != "exact" && a.ray_mode != "aabb") throw ParameterError("ray_mode must be exact|aabb");
    b = angle_bundle(doc, a.k, a.theta, a.angle_start == "zero" ? AngleStart::Zero : AngleStart::Theta,
                     a.ray_mode == "exact" ? RayMode::Exact : RayMode::Aabb);
  } else {
    throw ParameterError("unknown graph mode '" + a.mode + "' (nearest|angles)");
  }
  for (std::size_t i = 0; i < b.count(); ++i) {
    if (a.emit == "json") {
      std::cout << to_edge_json(b.matrices[i], b.mode, a.k,
                                b.mode == GraphMode::Angles ? std::optional<double>(b.angles[i]) : std::nullopt)
                << "\n";
    } else if (a.emit == "dot") {
      char name[64];
      if (b.mode == GraphMode::Angles)
        std::snprintf(name, sizeof name, "angle_%g", b.angles[i]);
      for (char* c = name; *c; ++c)
        if (*c == '.' || *c == '-') *c = '_';
      else
        std::snprintf(name, sizeof name, "nearest");
      std::cout << to_dot(b.matrices[i], name);
    } else {
      throw ParameterError("unknown output '" + a.emit + "' (dot|json)");
    }
  }
}

// ---- synth / report ----------------------------------------------------------

void cmd_synth(const ConfigOptions& opts, const std::string& out) {
  ExperimentConfig cfg;
  cfg.synthetic = true;
  opts.apply(cfg);
  const Corpus c = load_experiment_corpus(cfg);
  write_split(fs::path(out) / "train", c.train);
  write_split(fs::path(out) / "test", c.test);
  std::cout << "wrote " << c.train.size() << " train and " << c.test.size() << " test documents to " << out << "\n";
}

void cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<RunResult> results;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    if (j.is_array())
      for (const auto& r : j) results.push_back(run_result_from_json(r));
    else
      results.push_back(run_result_from_json(j));
  }
  const auto rep = make_report(results);
  write_file(fs::path(out) / "report.csv", rep.csv);
  write_file(fs::path(out) / "report.md", rep.markdown);
  std::cout << rep.markdown;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layout graph toolkit: graphs, few-shot training, evaluation and robustness reports"};
  app.require_subcommand(1);

  ConfigOptions train_opts, eval_opts, perturb_opts, synth_opts;
  std::string results_path, checkpoint, eval_out, synth_out = "synthetic", report_out = ".";
  std::vector<std::string> report_inputs;
  GraphArgs graph;

  auto* train = app.add_subcommand("train", "train and evaluate over seeds (optionally under manipulations)");
  train_opts.attach(train, all_keys());
  train->add_option("--results", results_path, "results JSON path (default <output_dir>/results.json)");

  const std::vector<std::string> eval_keys = {"test_dir", "format", "max_tokens", "manip"};
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test directory");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval_opts.attach(eval, eval_keys);
  eval->add_option("--out", eval_out, "write the metrics CSV here too");

  auto* perturb = app.add_subcommand("perturb", "evaluate a checkpoint under geometric manipulations");
  perturb->add_option("--checkpoint", checkpoint)->required();
  perturb_opts.attach(perturb, eval_keys);
  perturb->add_option("--out", eval_out, "write the CSV here too");

  auto* gr = app.add_subcommand("graph", "print the graphs built for one document");
  gr->add_option("--file", graph.file)->required();
  gr->add_option("--input_format", graph.input_format, "auto|funsd|cord|internal");
  gr->add_option("--mode", graph.mode, "nearest|angles");
  gr->add_option("--k", graph.k);
  gr->add_option("--theta", graph.theta);
  gr->add_option("--angle_start", graph.angle_start, "zero|theta");
  gr->add_option("--ray_mode", graph.ray_mode, "exact|aabb");
  gr->add_option("--manip", graph.manip, "apply one manipulation first");
  gr->add_option("--emit", graph.emit, "dot|json");

  auto* synth = app.add_subcommand("synth", "write the synthetic corpus in the internal format");
  synth_opts.attach(synth, {"synth_seed", "synth_train", "synth_test", "synth_tokens", "synth_left_bias"});
  synth->add_option("--out", synth_out, "output directory (train/ and test/ are created)");

  auto* report = app.add_subcommand("report", "merge results JSON files into report.csv and report.md");
  report->add_option("inputs", report_inputs)->required();
  report->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) cmd_train(train_opts, results_path);
    if (*eval) cmd_eval(checkpoint, eval_opts, eval_out);
    if (*perturb) cmd_perturb(checkpoint, perturb_opts, eval_out);
    if (*gr) cmd_graph(graph);
    if (*synth) cmd_synth(synth_opts, synth_out);
    if (*report) cmd_report(report_inputs, report_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 3;
  }
  return 0;
}
