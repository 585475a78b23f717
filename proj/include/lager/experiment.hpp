#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lager/annotation_io.hpp"
#include "lager/checkpoint.hpp"
#include "lager/config.hpp"
#include "lager/manipulations.hpp"
#include "lager/model.hpp"
#include "lager/optim.hpp"
#include "lager/random.hpp"
#include "lager/synthetic.hpp"
#include "lager/tagging.hpp"

namespace lager {

// Uniform sample of f documents without replacement. Documents are ordered by
// id first, so the result depends only on the set of documents and the seed.
inline std::vector<Document> sample_fewshot(std::vector<Document> train, int f, std::uint64_t seed) {
  if (f < 1) throw ParameterError("f must be >= 1");
  if (static_cast<std::size_t>(f) > train.size())
    throw ParameterError("f=" + std::to_string(f) + " exceeds the " + std::to_string(train.size()) +
                         " available training documents");
  std::sort(train.begin(), train.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
  Rng rng(seed);
  // Partial Fisher-Yates: the first f slots are the sample.
  for (std::size_t i = 0; i < static_cast<std::size_t>(f); ++i)
    std::swap(train[i], train[i + rng.below(train.size() - i)]);
  train.resize(static_cast<std::size_t>(f));
  return train;
}

inline Corpus load_experiment_corpus(const ExperimentConfig& cfg) {
  if (cfg.synthetic) {
    SynthConfig s;
    s.seed = cfg.synth_seed;
    s.n_train = cfg.synth_train;
    s.n_test = cfg.synth_test;
    s.tokens_per_doc = cfg.synth_tokens;
    s.left_bias = cfg.synth_left_bias;
    return make_synthetic_corpus(s);
  }
  LoadOptions opts;
  opts.format = parse_annotation_format(cfg.format);
  opts.max_tokens = static_cast<std::size_t>(cfg.max_tokens);
  return load_corpus(cfg.train_dir, cfg.test_dir, opts);
}

inline ModelConfig model_config(const ExperimentConfig& cfg, int d_in, int num_tags) {
  ModelConfig m;
  m.variant = cfg.variant;
  m.d_in = d_in;
  m.num_tags = num_tags;
  m.heads = cfg.heads;
  m.layers = cfg.layers;
  m.graphs = cfg.graph_count();
  m.leaky_slope = cfg.leaky_slope;
  m.input_dropout = cfg.input_dropout;
  m.classifier_input = cfg.classifier_input;
  return m;
}

inline std::vector<DocInput> prepare_all(const std::vector<Document>& docs, const ExperimentConfig& cfg,
                                         const TagSet& tags) {
  std::vector<DocInput> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(prepare(d, cfg.variant, cfg.graph_settings(), cfg.encoder, &tags));
  return out;
}

struct TrainedModel {
  ModelConfig model;
  ModelParams params;
  AdamWState optimizer;
  std::vector<double> epoch_loss;
};

// Documents are processed one at a time; each optimizer step averages the
// gradients of batch_size documents.
inline TrainedModel train_model(const ExperimentConfig& cfg, const ModelConfig& mc,
                                const std::vector<DocInput>& train, std::uint64_t seed) {
  TrainedModel tm{mc, init_params(mc, seed), {}, {}};
  tm.optimizer = AdamWState::for_params(tm.params);
  Rng order_rng(seed ^ 0x5EEDF00DULL);
  Rng dropout_rng(seed ^ 0xD409ULL);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  ModelParams grads = tm.params.zeros_like();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      grads.for_each([](const std::string&, Eigen::MatrixXd& g) { g.setZero(); });
      const double w = 1.0 / static_cast<double>(e - b);
      for (std::size_t i = b; i < e; ++i)
        total += loss_and_grad(mc, tm.params, train[order[i]], grads, w,
                               mc.input_dropout > 0 ? &dropout_rng : nullptr);
      adamw_step(tm.params, grads, tm.optimizer, cfg.optimizer);
    }
    tm.epoch_loss.push_back(train.empty() ? 0.0 : total / static_cast<double>(train.size()));
  }
  return tm;
}

struct Evaluation {
  EntityReport report;
  std::vector<std::pair<std::string, PRF>> per_document;
  std::vector<TagSequence> predictions;
};

inline Evaluation evaluate(const ModelConfig& mc, const ModelParams& p, const std::vector<DocInput>& docs,
                           const TagSet& tags) {
  Evaluation ev;
  std::map<std::string, SpanCounts> total;
  for (const auto& d : docs) {
    TagSequence pred, gold;
    for (int t : predict(mc, p, d)) pred.push_back(tags.tag(static_cast<std::size_t>(t)));
    for (int t : d.gold) gold.push_back(tags.tag(static_cast<std::size_t>(t)));
    std::map<std::string, SpanCounts> one;
    accumulate_counts(pred, gold, one);
    SpanCounts c;
    for (const auto& [label, sc] : one) {
      c.tp += sc.tp;
      c.pred += sc.pred;
      c.gold += sc.gold;
      auto& t = total[label];
      t.tp += sc.tp;
      t.pred += sc.pred;
      t.gold += sc.gold;
    }
    ev.per_document.emplace_back(d.id, PRF::from_counts(c.tp, c.pred, c.gold));
    ev.predictions.push_back(std::move(pred));
  }
  ev.report = report_from_counts(total);
  return ev;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across seeds
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size()));
  return r;
}

struct Aggregate {
  MeanStd precision, recall, f1;
};

inline Aggregate aggregate(const std::vector<PRF>& runs) {
  std::vector<double> p, r, f;
  for (const auto& x : runs) {
    p.push_back(x.precision);
    r.push_back(x.recall);
    f.push_back(x.f1);
  }
  return {mean_std(p), mean_std(r), mean_std(f)};
}

struct ManipResult {
  std::string manip;
  std::vector<PRF> per_seed;
  Aggregate aggregate;
  double diff = 0.0;  // clean mean F1 - manipulated mean F1
};

struct RunResult {
  std::string variant;
  int f = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<PRF> per_seed;
  Aggregate aggregate;
  std::vector<ManipResult> manipulated;
};

struct SeedOutcome {
  PRF clean;
  std::vector<PRF> manipulated;
  std::vector<std::pair<std::string, PRF>> filewise;
  std::string checkpoint;
};

inline std::string checkpoint_text(const ExperimentConfig& cfg, const TagSet& tags, int d_in) {
  std::string s = config_to_text(cfg);
  std::string labels;
  for (std::size_t i = 0; i < tags.labels().size(); ++i) labels += (i ? "," : "") + tags.labels()[i];
  s += "@labels = " + labels + "\n@feature_dim = " + std::to_string(d_in) + "\n";
  return s;
}

// Trains on clean few-shot samples and evaluates each seed's model on the
// full test set, then on every manipulated copy of it.
inline RunResult run_experiment(const ExperimentConfig& cfg, const Corpus& corpus) {
  cfg.validate();
  const TagSet tags(corpus.label_set);
  const auto test = prepare_all(corpus.test, cfg, tags);
  std::vector<std::vector<DocInput>> manip_tests;
  for (const auto& m : cfg.manips) {
    std::vector<Document> docs;
    for (const auto& d : corpus.test) docs.push_back(apply(m, d));
    manip_tests.push_back(prepare_all(docs, cfg, tags));
  }
  const int d_in = test.empty() ? cfg.encoder.d : static_cast<int>(test.front().features.cols());
  const ModelConfig mc = model_config(cfg, d_in, static_cast<int>(tags.size()));

  auto run_seed = [&](std::uint64_t seed) {
    const auto sample = prepare_all(sample_fewshot(corpus.train, cfg.f, seed), cfg, tags);
    TrainedModel tm = train_model(cfg, mc, sample, seed);
    SeedOutcome out;
    Evaluation ev = evaluate(mc, tm.params, test, tags);
    out.clean = ev.report.overall;
    out.filewise = std::move(ev.per_document);
    for (const auto& mt : manip_tests) out.manipulated.push_back(evaluate(mc, tm.params, mt, tags).report.overall);
    if (cfg.save_checkpoints)
      out.checkpoint = serialize_checkpoint({checkpoint_text(cfg, tags, d_in), tm.params, tm.optimizer});
    return out;
  };

  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  if (cfg.threads <= 1) {
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) outcomes[s] = run_seed(cfg.seeds[s]);
  } else {
    for (std::size_t b = 0; b < cfg.seeds.size(); b += static_cast<std::size_t>(cfg.threads)) {
      std::vector<std::future<SeedOutcome>> jobs;
      const std::size_t e = std::min(cfg.seeds.size(), b + static_cast<std::size_t>(cfg.threads));
      for (std::size_t s = b; s < e; ++s) jobs.push_back(std::async(std::launch::async, run_seed, cfg.seeds[s]));
      for (std::size_t s = b; s < e; ++s) outcomes[s] = jobs[s - b].get();
    }
  }

  RunResult r;
  r.variant = to_string(cfg.variant);
  r.f = cfg.f;
  r.seeds = cfg.seeds;
  for (const auto& o : outcomes) r.per_seed.push_back(o.clean);
  r.aggregate = aggregate(r.per_seed);
  for (std::size_t m = 0; m < cfg.manips.size(); ++m) {
    ManipResult mr;
    mr.manip = to_string(cfg.manips[m]);
    for (const auto& o : outcomes) mr.per_seed.push_back(o.manipulated[m]);
    mr.aggregate = aggregate(mr.per_seed);
    mr.diff = r.aggregate.f1.mean - mr.aggregate.f1.mean;
    r.manipulated.push_back(std::move(mr));
  }

  if (!cfg.output_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    const std::string stem = r.variant + "_f" + std::to_string(cfg.f);
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      const std::string tag = stem + "_seed" + std::to_string(cfg.seeds[s]);
      if (cfg.save_checkpoints) {
        fs::create_directories(dir / "checkpoints");
        std::ofstream(dir / "checkpoints" / (tag + ".lgck"), std::ios::binary) << outcomes[s].checkpoint;
      }
      if (cfg.filewise) {
        std::ofstream out(dir / (tag + "_filewise.csv"), std::ios::binary);
        out << "document,precision,recall,f1,tp,pred,gold\n";
        for (const auto& [id, p] : outcomes[s].filewise) {
          char buf[256];
          std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%ld,%ld,%ld\n", p.precision, p.recall, p.f1,
                        p.true_positives, p.pred_count, p.gold_count);
          out << id << buf;
        }
      }
    }
  }
  return r;
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_experiment_corpus(cfg));
}

// ---- results serialization and reports ---------------------------------------

inline nlohmann::ordered_json to_json(const PRF& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
          {"tp", p.true_positives},   {"pred", p.pred_count}, {"gold", p.gold_count}};
}

inline PRF prf_from_json(const nlohmann::json& j) {
  PRF p;
  p.precision = j.at("precision");
  p.recall = j.at("recall");
  p.f1 = j.at("f1");
  p.true_positives = j.at("tp");
  p.pred_count = j.at("pred");
  p.gold_count = j.at("gold");
  return p;
}

inline nlohmann::ordered_json to_json(const RunResult& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["f"] = r.f;
  j["seeds"] = r.seeds;
  auto seeds = nlohmann::ordered_json::array();
  for (const auto& p : r.per_seed) seeds.push_back(to_json(p));
  j["per_seed"] = seeds;
  auto manip = nlohmann::ordered_json::array();
  for (const auto& m : r.manipulated) {
    nlohmann::ordered_json mj;
    mj["manip"] = m.manip;
    auto ms = nlohmann::ordered_json::array();
    for (const auto& p : m.per_seed) ms.push_back(to_json(p));
    mj["per_seed"] = ms;
    manip.push_back(mj);
  }
  j["manipulated"] = manip;
  return j;
}

// Aggregates are recomputed from the per-seed scores.
inline RunResult run_result_from_json(const nlohmann::json& j) {
  RunResult r;
  r.variant = j.at("variant");
  r.f = j.at("f");
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& p : j.at("per_seed")) r.per_seed.push_back(prf_from_json(p));
  r.aggregate = aggregate(r.per_seed);
  for (const auto& mj : j.at("manipulated")) {
    ManipResult m;
    m.manip = mj.at("manip");
    for (const auto& p : mj.at("per_seed")) m.per_seed.push_back(prf_from_json(p));
    m.aggregate = aggregate(m.per_seed);
    m.diff = r.aggregate.f1.mean - m.aggregate.f1.mean;
    r.manipulated.push_back(std::move(m));
  }
  return r;
}

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

// "58.36±3.63", in percent.
inline std::string cell(const MeanStd& m) { return pct(m.mean) + "±" + pct(m.std); }

struct ReportFiles {
  std::string csv;
  std::string markdown;
};

// CSV: one row per (variant, f, manipulation) with percent values at two
// decimals. Markdown: one F1 table per setting, variant rows and f columns.
inline ReportFiles make_report(const std::vector<RunResult>& results) {
  ReportFiles out;
  out.csv = "variant,f,manip,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,diff\n";
  auto csv_row = [&](const std::string& variant, int f, const std::string& manip, const Aggregate& a,
                     const std::string& diff) {
    const std::string quoted = manip.find(',') == std::string::npos ? manip : "\"" + manip + "\"";
    out.csv += variant + "," + std::to_string(f) + "," + quoted + "," + pct(a.precision.mean) + "," +
               pct(a.precision.std) + "," + pct(a.recall.mean) + "," + pct(a.recall.std) + "," +
               pct(a.f1.mean) + "," + pct(a.f1.std) + "," + diff + "\n";
  };
  std::vector<std::string> variants;
  std::vector<int> fs;
  std::vector<std::string> manips;
  for (const auto& r : results) {
    csv_row(r.variant, r.f, "", r.aggregate, "");
    for (const auto& m : r.manipulated) csv_row(r.variant, r.f, m.manip, m.aggregate, pct(m.diff));
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    if (std::find(fs.begin(), fs.end(), r.f) == fs.end()) fs.push_back(r.f);
    for (const auto& m : r.manipulated)
      if (std::find(manips.begin(), manips.end(), m.manip) == manips.end()) manips.push_back(m.manip);
  }
  std::sort(fs.begin(), fs.end());
  auto find = [&](const std::string& v, int f) -> const RunResult* {
    for (const auto& r : results)
      if (r.variant == v && r.f == f) return &r;
    return nullptr;
  };

  std::string& md = out.markdown;
  md += "### F1 (clean test set)\n\n| Model |";
  for (int f : fs) md += " f=" + std::to_string(f) + " |";
  md += "\n|---|";
  for (std::size_t i = 0; i < fs.size(); ++i) md += "---|";
  md += "\n";
  for (const auto& v : variants) {
    md += "| " + v + " |";
    for (int f : fs) {
      const RunResult* r = find(v, f);
      md += " " + (r ? cell(r->aggregate.f1) : std::string("-")) + " |";
    }
    md += "\n";
  }
  for (const auto& m : manips) {
    md += "\n### F1 under " + m + "\n\n| Model |";
    for (int f : fs) md += " f=" + std::to_string(f) + " | Diff. |";
    md += "\n|---|";
    for (std::size_t i = 0; i < fs.size(); ++i) md += "---|---|";
    md += "\n";
    for (const auto& v : variants) {
      md += "| " + v + " |";
      for (int f : fs) {
        const RunResult* r = find(v, f);
        const ManipResult* mr = nullptr;
        if (r)
          for (const auto& x : r->manipulated)
            if (x.manip == m) mr = &x;
        md += mr ? " " + cell(mr->aggregate.f1) + " | " + pct(mr->diff) + " |" : std::string(" - | - |");
      }
      md += "\n";
    }
  }
  return out;
}

struct ReportRow {
  std::string variant;
  int f = 0;
  std::string manip;
  std::vector<double> values;  // precision mean/std, recall mean/std, f1 mean/std[, diff]
};

inline std::vector<ReportRow> parse_report_csv(const std::string& csv) {
  std::vector<ReportRow> rows;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols(1);
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"')
        quoted = !quoted;
      else if (ch == ',' && !quoted)
        cols.emplace_back();
      else
        cols.back() += ch;
    }
    if (cols.size() != 10) throw ParseError("report row has " + std::to_string(cols.size()) + " columns");
    ReportRow r{cols[0], std::stoi(cols[1]), cols[2], {}};
    for (std::size_t i = 3; i < cols.size(); ++i)
      if (!cols[i].empty()) r.values.push_back(std::stod(cols[i]));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace lager
