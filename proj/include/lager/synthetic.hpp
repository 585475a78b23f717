#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "lager/annotation_io.hpp"
#include "lager/document.hpp"
#include "lager/graph.hpp"
#include "lager/random.hpp"

namespace lager {

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_train = 50;
  int n_test = 200;
  int tokens_per_doc = 60;
  double page_width = 1000.0;
  double page_height = 1000.0;
  // Probability that the form column is the left half of the page (distractor
  // text takes the other half). 0.5 removes the positional prior.
  double left_bias = 0.7;
};

namespace synth {

inline const std::vector<std::string>& key_vocab() {
  static const std::vector<std::string> v = {"Name:",  "Date:",    "Phone:", "Address:", "Total:",
                                             "Email:", "Company:", "Title:", "Amount:",  "City:"};
  return v;
}

// Shared by values and distractors, so text alone cannot tell them apart. It
// is kept small so every word shows up on both sides within a few pages.
inline const std::vector<std::string>& filler_vocab() {
  static const std::vector<std::string> v = {"John", "Smith", "2019", "Main", "St",  "555",
                                             "0142", "Acme",  "Corp", "New",  "York", "12"};
  return v;
}

// Values per field: 1 with probability 0.6, 2 with 0.25, 3 with 0.15.
inline int value_count(Rng& rng) {
  const double u = rng.uniform();
  return u < 0.6 ? 1 : (u < 0.85 ? 2 : 3);
}

struct Block {
  std::vector<Token> tokens;  // indices assigned later
  std::vector<EntitySpan> spans;  // relative to block start
  AABB extent;
};

inline double token_width(const std::string& text) {
  return 10.0 * static_cast<double>(text.size()) + 10.0;
}

inline constexpr double kTokenHeight = 20.0;
inline constexpr double kGap = 8.0;
// Fields keep extra vertical room so each value's nearest neighbors reach its
// own key; the gutter separates the form column from the distractor column.
inline constexpr double kFieldClearY = 40.0;
inline constexpr double kBlockClearX = 30.0;
inline constexpr double kBlockClearY = 12.0;
inline constexpr double kGutter = 120.0;

inline Block make_row(const std::vector<std::string>& words, double x, double y) {
  Block b;
  double cx = x;
  for (const auto& w : words) {
    const double wd = token_width(w);
    Token t;
    t.text = w;
    t.box = Quad::from_aabb({cx, y, cx + wd, y + kTokenHeight});
    b.tokens.push_back(t);
    cx += wd + kGap;
  }
  b.extent = {x, y, cx - kGap, y + kTokenHeight};
  return b;
}

inline bool clear_of(const AABB& a, const std::vector<Block>& placed, double cx, double cy) {
  for (const auto& p : placed) {
    const AABB& e = p.extent;
    if (a.x0 < e.x1 + cx && e.x0 < a.x1 + cx && a.y0 < e.y1 + cy && e.y0 < a.y1 + cy) return false;
  }
  return true;
}

// True when every answer token's own 4 nearest neighbors include its key.
inline bool answers_see_keys(const Document& doc) {
  const auto pts = centroids(doc);
  for (std::size_t s = 0; s + 1 < doc.entities.size(); ++s) {
    const auto& q = doc.entities[s];
    const auto& a = doc.entities[s + 1];
    if (q.label != "question" || a.label != "answer" || a.start != q.end + 1) continue;
    for (int v = a.start; v <= a.end; ++v) {
      const double dk = squared_distance(pts[static_cast<std::size_t>(v)], pts[static_cast<std::size_t>(q.start)]);
      int closer = 0;
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (static_cast<int>(j) == v || static_cast<int>(j) == q.start) continue;
        const double dj = squared_distance(pts[static_cast<std::size_t>(v)], pts[j]);
        if (dj < dk || (dj == dk && static_cast<int>(j) < q.start)) ++closer;
      }
      if (closer >= 4) return false;
    }
  }
  return true;
}

// True when no distractor shares a 4-NN edge with a key.
inline bool keys_isolated(const Document& doc) {
  std::vector<int> kind(doc.tokens.size(), 0);  // 0 other, 1 key, 2 value
  for (const auto& e : doc.entities)
    for (int i = e.start; i <= e.end; ++i) kind[static_cast<std::size_t>(i)] = e.label == "question" ? 1 : 2;
  const auto g = knn_space_graph(doc, 4);
  for (const auto& [i, j] : g.edge_list()) {
    const int a = kind[static_cast<std::size_t>(i)], b = kind[static_cast<std::size_t>(j)];
    if ((a == 1 && b == 0) || (a == 0 && b == 1)) return false;
  }
  return true;
}

inline Document make_page(Rng& rng, const SynthConfig& cfg, const std::string& id) {
  const auto& keys = key_vocab();
  const auto& filler = filler_vocab();
  const double half = cfg.page_width / 2.0;
  for (;;) {
    // The form column sits on the left with probability left_bias; distractor
    // text fills the other column.
    const bool form_left = rng.bernoulli(cfg.left_bias);
    const double fx0 = form_left ? 20.0 : half + kGutter / 2.0;
    const double fx1 = form_left ? half - kGutter / 2.0 : cfg.page_width - 20.0;
    const double dx0 = form_left ? half + kGutter / 2.0 : 20.0;
    const double dx1 = form_left ? cfg.page_width - 20.0 : half - kGutter / 2.0;

    std::vector<Block> blocks;
    int tokens = 0;
    int fields = 0, misses = 0;
    while (tokens < cfg.tokens_per_doc && misses < 200) {
      const bool field = fields == 0 || rng.bernoulli(0.5);
      std::vector<std::string> words;
      if (field) {
        words.push_back(keys[rng.below(keys.size())]);
        const int nv = value_count(rng);
        for (int v = 0; v < nv; ++v) words.push_back(filler[rng.below(filler.size())]);
      } else {
        const int nd = rng.between(1, 4);
        for (int v = 0; v < nd; ++v) words.push_back(filler[rng.below(filler.size())]);
      }
      const double x0 = field ? fx0 : dx0, x1 = field ? fx1 : dx1;
      const double x = rng.uniform(x0, std::max(x0 + 1.0, x1 - 150.0));
      const double y = rng.uniform(20.0, cfg.page_height - 40.0);
      Block b = make_row(words, x, y);
      const bool ok = field ? clear_of(b.extent, blocks, kBlockClearX, kFieldClearY)
                            : clear_of(b.extent, blocks, kBlockClearX, kBlockClearY);
      if (b.extent.x1 > x1 || !ok) {
        ++misses;
        continue;
      }
      if (field) {
        b.spans.push_back({"question", 0, 0});
        b.spans.push_back({"answer", 1, static_cast<int>(words.size()) - 1});
        ++fields;
      }
      tokens += static_cast<int>(words.size());
      blocks.push_back(std::move(b));
    }
    // Reading order: top to bottom, then left to right.
    std::sort(blocks.begin(), blocks.end(), [](const Block& a, const Block& b) {
      if (a.extent.y0 != b.extent.y0) return a.extent.y0 < b.extent.y0;
      return a.extent.x0 < b.extent.x0;
    });
    Document doc;
    doc.id = id;
    doc.page_width = cfg.page_width;
    doc.page_height = cfg.page_height;
    for (auto& b : blocks) {
      const int base = static_cast<int>(doc.tokens.size());
      for (auto& t : b.tokens) {
        t.index = static_cast<int>(doc.tokens.size());
        doc.tokens.push_back(std::move(t));
      }
      for (auto s : b.spans) {
        s.start += base;
        s.end += base;
        doc.entities.push_back(std::move(s));
      }
    }
    if (answers_see_keys(doc) && keys_isolated(doc)) return doc;
  }
}

}  // namespace synth

// Form-like pages: keys ("Name:") followed on the same line by 1-3 value
// tokens, plus distractor clusters drawn from the same vocabulary as the
// values. Keys are questions, values form one answer span; deciding which
// filler tokens are answers requires knowing what sits next to them.
inline Corpus make_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.n_train < 1 || cfg.n_test < 1 || cfg.tokens_per_doc < 1)
    throw ParameterError("synthetic corpus sizes must be >= 1");
  Rng rng(cfg.seed);
  Corpus c;
  c.name = "synthetic";
  c.label_set = {"answer", "question"};
  char buf[32];
  for (int i = 0; i < cfg.n_train; ++i) {
    std::snprintf(buf, sizeof buf, "train_%05d", i);
    c.train.push_back(synth::make_page(rng, cfg, buf));
  }
  for (int i = 0; i < cfg.n_test; ++i) {
    std::snprintf(buf, sizeof buf, "test_%05d", i);
    c.test.push_back(synth::make_page(rng, cfg, buf));
  }
  return c;
}

inline Corpus make_synthetic_corpus(std::uint64_t seed, int n_docs, int tokens_per_doc) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_test = n_docs;
  cfg.tokens_per_doc = tokens_per_doc;
  return make_synthetic_corpus(cfg);
}

}  // namespace lager
