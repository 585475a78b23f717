// Acceptance run: one PASS/FAIL/SKIP line per criterion, nonzero exit on any FAIL.
// Pass a substring as the first argument to run only the matching criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "lager/annotation_io.hpp"
#include "lager/experiment.hpp"
#include "lager/graph.hpp"
#include "lager/manipulations.hpp"
#include "support.hpp"

using namespace lager;

namespace {

// Tolerances and budgets.
constexpr double kGraphOracleBudget = 10.0;   // seconds
constexpr double kAffineBudget = 10.0;        // seconds
constexpr double kGradientBudget = 30.0;      // seconds
constexpr double kGradientTolerance = 1e-4;   // max relative error
constexpr double kAttentionTolerance = 1e-12;
constexpr double kSyntheticBudget = 600.0;    // seconds, three variants
constexpr double kNearestMargin = 0.10;       // F1 points as fractions
constexpr double kAnglesMargin = 0.05;
constexpr double kFunsdEntities = 42.86, kCordEntities = 13.82, kEntityTolerance = 0.5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  enum class Status { Pass, Fail, Skip } status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Status::Pass : Outcome::Status::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome graph_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int mismatches = 0, graphs = 0;
  for (int doc = 0; doc < 200; ++doc) {
    const int n = 1 + static_cast<int>(rng.below(50));
    const Document d = lager::testing::random_document(rng, n, doc % 2 == 1);
    const int k = 1 + static_cast<int>(rng.below(6));
    ++graphs;
    if (lager::testing::edge_set(knn_space_graph(d, k)) != lager::testing::brute_knn_edges(d, k)) ++mismatches;
    for (double alpha : bundle_angles(60.0)) {
      ++graphs;
      if (lager::testing::edge_set(knn_angle_graph(d, k, alpha)) != lager::testing::brute_angle_edges(d, k, alpha)) ++mismatches;
    }
  }
  const double s = seconds_since(t0);
  return verdict(mismatches == 0 && s < kGraphOracleBudget,
                 fmt("%d/%d graphs differ from the oracle, %.2f s (budget %.0f s)", mismatches, graphs, s,
                     kGraphOracleBudget));
}

Outcome affine_suite() {
  const auto t0 = Clock::now();
  Rng rng(77);
  constexpr int k = 4;
  const auto angles = bundle_angles(60.0);
  long checks = 0, failures = 0, rotation_checks = 0;
  auto expect = [&](bool ok) {
    ++checks;
    if (!ok) ++failures;
  };
  for (int doc = 0; doc < 40; ++doc) {
    const Document d = lager::testing::random_document(rng, 10 + static_cast<int>(rng.below(21)), doc % 2 == 1);
    const AdjacencyMatrix space = knn_space_graph(d, k);
    std::vector<AdjacencyMatrix> ang;
    for (double a : angles) ang.push_back(knn_angle_graph(d, k, a));

    std::vector<Document> moved;
    for (double a : {-37.5, 10.0, 20.0}) moved.push_back(shift(d, a));
    for (double s : {0.5, 2.0, 3.0}) moved.push_back(scale(d, s, s));
    for (const Document& m : moved) {
      expect(knn_space_graph(m, k) == space);
      for (std::size_t i = 0; i < angles.size(); ++i) expect(knn_angle_graph(m, k, angles[i]) == ang[i]);
    }

    const Point center{0, d.page_height};
    const bool spatial_ok = lager::testing::spatial_tie_free(d, k);
    std::vector<bool> angular_ok;
    for (double a : angles) angular_ok.push_back(lager::testing::angular_tie_free(d, k, a));
    for (double delta : {8.0, 45.0, 173.0}) {
      if (spatial_ok) expect(knn_space_graph(rotate_document(d, delta, center), k) == space);
      // A counterclockwise turn by delta in ray-angle terms.
      const Document ccw = rotate_document(d, -delta, center);
      for (std::size_t i = 0; i < angles.size(); ++i)
        if (angular_ok[i]) {
          ++rotation_checks;
          expect(knn_angle_graph(ccw, k, angles[i] + delta) == ang[i]);
        }
    }
  }
  const double s = seconds_since(t0);
  return verdict(failures == 0 && rotation_checks > 0 && s < kAffineBudget,
                 fmt("%ld/%ld graph comparisons differ (%ld angular rotation checks on tie-free cases), %.2f s",
                     failures, checks, rotation_checks, s));
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(99);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const int heads = i % 2 == 0 ? 1 : 4;
    const int graphs = (i / 2) % 2 == 0 ? 1 : 6;
    const int d = (i / 4) % 2 == 0 ? 4 : 8;
    const int n = 1 + static_cast<int>(rng.below(6));
    auto inst = lager::testing::random_grad_instance(rng, n, d, heads, graphs);
    worst = std::max(worst, lager::testing::max_gradient_error(inst.mc, inst.params, inst.input));
  }
  const double s = seconds_since(t0);
  return verdict(worst <= kGradientTolerance && s < kGradientBudget,
                 fmt("max relative error %.3e (tolerance %.0e) over 20 instances, %.2f s", worst,
                     kGradientTolerance, s));
}

Outcome attention_normalization() {
  Rng rng(5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    const int heads = 1 + static_cast<int>(rng.below(4));
    const auto nl = lager::testing::random_neighbors(rng, n, rng.uniform(0.05, 0.9));
    GatParams p;
    p.layers.push_back(GatLayerParams::zeros(8, 4 * heads, heads, 0.2));
    for (auto* m : {&p.layers[0].W, &p.layers[0].att})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-2, 2);
    Eigen::MatrixXd h(n, 8);
    for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = rng.uniform(-5, 5);
    GatCache cache;
    gat_forward(h, nl, p, &cache);
    for (const auto& alpha : cache.layers[0].alpha)
      for (int i = 0; i < n; ++i) {
        double sum = 0;
        for (int q = nl.off[static_cast<std::size_t>(i)]; q < nl.off[static_cast<std::size_t>(i) + 1]; ++q)
          sum += alpha[static_cast<std::size_t>(q)];
        worst = std::max(worst, std::abs(sum - 1.0));
      }
  }
  return verdict(worst <= kAttentionTolerance,
                 fmt("max |row sum - 1| = %.3e over 100 forwards (tolerance %.0e)", worst, kAttentionTolerance));
}

Outcome metric_parity() {
  Rng rng(11);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const std::vector<TagSequence> gold = {lager::testing::random_tags(rng, n, {"question", "answer", "header"}, 0.1)};
    const std::vector<TagSequence> pred = {lager::testing::random_tags(rng, n, {"question", "answer", "header"}, 0.5)};
    const auto r = entity_prf(pred, gold).overall;
    const auto o = lager::testing::conlleval_counts(pred, gold);
    const PRF expected = PRF::from_counts(o.correct, o.found_guessed, o.found_correct);
    if (r.true_positives != o.correct || r.pred_count != o.found_guessed || r.gold_count != o.found_correct ||
        r.precision != expected.precision || r.recall != expected.recall || r.f1 != expected.f1)
      ++mismatches;
  }
  return verdict(mismatches == 0, fmt("%d/100 sequences differ from the oracle", mismatches));
}

// ---- synthetic experiment ---------------------------------------------------

ExperimentConfig synthetic_config(Variant v) {
  ExperimentConfig cfg;
  cfg.synthetic = true;
  cfg.variant = v;
  cfg.manips = {parse_manip("shift:a=20"), parse_manip("scale:sw=2,sh=2")};
  return cfg;
}

struct SyntheticRun {
  std::vector<RunResult> results;  // vanilla, lager_nearest, lager_angles
  double seconds = 0;
  std::string csv, markdown;
};

SyntheticRun run_synthetic() {
  SyntheticRun out;
  const Corpus corpus = load_experiment_corpus(synthetic_config(Variant::Vanilla));
  const auto t0 = Clock::now();
  for (Variant v : {Variant::Vanilla, Variant::LagerNearest, Variant::LagerAngles}) {
    const auto tv = Clock::now();
    out.results.push_back(run_experiment(synthetic_config(v), corpus));
    std::printf("  [%s trained and evaluated in %.1f s]\n", to_string(v).c_str(), seconds_since(tv));
    std::fflush(stdout);
  }
  out.seconds = seconds_since(t0);
  const auto rep = make_report(out.results);
  out.csv = rep.csv;
  out.markdown = rep.markdown;
  return out;
}

SyntheticRun& first_run() {
  static SyntheticRun run = [] {
    SyntheticRun r = run_synthetic();
    std::ofstream("acceptance_report.md") << r.markdown;
    std::ofstream("acceptance_report.csv") << r.csv;
    std::printf("%s", r.markdown.c_str());
    return r;
  }();
  return run;
}

Outcome synthetic_delta() {
  const auto& run = first_run();
  const double vanilla = run.results[0].aggregate.f1.mean;
  const double nearest = run.results[1].aggregate.f1.mean;
  const double angles = run.results[2].aggregate.f1.mean;
  const bool ok = nearest >= vanilla + kNearestMargin && angles >= vanilla + kAnglesMargin &&
                  run.seconds < kSyntheticBudget;
  return verdict(ok, fmt("F1 vanilla %s, lager_nearest %s (%+.2f, need >= +10), lager_angles %s (%+.2f, need >= "
                         "+5), %.1f s (budget %.0f s)",
                         pct(vanilla).c_str(), pct(nearest).c_str(), 100 * (nearest - vanilla),
                         pct(angles).c_str(), 100 * (angles - vanilla), run.seconds, kSyntheticBudget));
}

Outcome robustness() {
  const auto& run = first_run();
  const auto& vanilla = run.results[0].manipulated;
  const auto& nearest = run.results[1].manipulated;
  bool ok = true;
  std::string detail;
  for (std::size_t m = 0; m < vanilla.size(); ++m) {
    ok = ok && nearest[m].diff < vanilla[m].diff;
    detail += fmt("%s Diff vanilla %s vs lager_nearest %s; ", vanilla[m].manip.c_str(), pct(vanilla[m].diff).c_str(),
                  pct(nearest[m].diff).c_str());
  }

  ExperimentConfig text_only = synthetic_config(Variant::LagerNearest);
  text_only.encoder.include_layout = false;
  text_only.manips = {parse_manip("shift:a=20")};
  const RunResult r = run_experiment(text_only);
  ok = ok && r.manipulated[0].diff == 0.0;
  detail += fmt("include_layout=false lager_nearest shift Diff %.17g", r.manipulated[0].diff);
  return verdict(ok, detail);
}

Outcome determinism() {
  const auto& first = first_run();
  const SyntheticRun second = run_synthetic();
  const bool ok = first.csv == second.csv && first.markdown == second.markdown;
  return verdict(ok, fmt("report bytes %s across two full runs (%zu CSV bytes)", ok ? "identical" : "DIFFER",
                         first.csv.size()));
}

// ---- dataset statistics -----------------------------------------------------

struct SplitStats {
  std::size_t train = 0, test = 0;
  double entities_per_page = 0;
};

SplitStats corpus_stats(const std::filesystem::path& train, const std::filesystem::path& test, AnnotationFormat f) {
  LoadOptions opts;
  opts.format = f;
  opts.max_tokens = std::numeric_limits<std::size_t>::max();
  const Corpus c = load_corpus(train, test, opts);
  std::size_t entities = 0;
  for (const auto* split : {&c.train, &c.test})
    for (const auto& d : *split) entities += d.entities.size();
  const std::size_t pages = c.train.size() + c.test.size();
  return {c.train.size(), c.test.size(), static_cast<double>(entities) / static_cast<double>(pages)};
}

Outcome dataset_statistics() {
  const char* funsd = std::getenv("LAGER_FUNSD_DIR");
  const char* cord = std::getenv("LAGER_CORD_DIR");
  if (!funsd && !cord)
    return {Outcome::Status::Skip, "set LAGER_FUNSD_DIR and/or LAGER_CORD_DIR to the official datasets"};
  bool ok = true;
  std::string detail;
  if (funsd) {
    const std::filesystem::path root = funsd;
    const auto s = corpus_stats(root / "training_data" / "annotations", root / "testing_data" / "annotations",
                                AnnotationFormat::Funsd);
    ok = ok && s.train == 149 && s.test == 50 && std::abs(s.entities_per_page - kFunsdEntities) <= kEntityTolerance;
    detail += fmt("FUNSD %zu/%zu pages, %.2f entities/page; ", s.train, s.test, s.entities_per_page);
  }
  if (cord) {
    const std::filesystem::path root = cord;
    const auto s = corpus_stats(root / "train" / "json", root / "test" / "json", AnnotationFormat::Cord);
    ok = ok && s.train == 800 && s.test == 100 && std::abs(s.entities_per_page - kCordEntities) <= kEntityTolerance;
    detail += fmt("CORD %zu/%zu pages, %.2f entities/page", s.train, s.test, s.entities_per_page);
  }
  return verdict(ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"graph_oracle_equivalence", graph_oracle},
      {"affine_invariance_suite", affine_suite},
      {"gat_gradient_check", gradient_check},
      {"attention_normalization", attention_normalization},
      {"metric_parity", metric_parity},
      {"synthetic_fewshot_delta", synthetic_delta},
      {"robustness_diff", robustness},
      {"determinism", determinism},
      {"dataset_statistics", dataset_statistics},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && name.find(only) == std::string::npos) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {Outcome::Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Outcome::Status::Pass ? "PASS" : (o.status == Outcome::Status::Fail ? "FAIL" : "SKIP");
    if (o.status == Outcome::Status::Fail) ++failed;
    std::printf("%s %s: %s\n", tag, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
