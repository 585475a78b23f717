#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "lager/document.hpp"
#include "lager/error.hpp"

namespace lager {

using TagSequence = std::vector<std::string>;

// Tag inventory: "O" first, then B-, I-, E-, S- for each label in order.
class TagSet {
 public:
  TagSet() : tags_{"O"} {}
  explicit TagSet(const std::vector<std::string>& labels) : labels_(labels), tags_{"O"} {
    for (const auto& l : labels)
      for (const char* p : {"B-", "I-", "E-", "S-"}) tags_.push_back(p + l);
  }

  std::size_t size() const { return tags_.size(); }
  const std::string& tag(std::size_t i) const { return tags_.at(i); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& labels() const { return labels_; }

  int index(std::string_view tag) const {
    for (std::size_t i = 0; i < tags_.size(); ++i)
      if (tags_[i] == tag) return static_cast<int>(i);
    throw ValidationError("tag '" + std::string(tag) + "' not in tag set");
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::string> tags_;
};

inline TagSequence spans_to_iobes(std::vector<EntitySpan> spans, std::size_t n) {
  TagSequence tags(n, "O");
  std::sort(spans.begin(), spans.end());
  int prev_end = -1;
  for (const auto& s : spans) {
    if (s.start < 0 || s.end < s.start || s.end >= static_cast<int>(n))
      throw ValidationError("span '" + s.label + "' [" + std::to_string(s.start) + "," +
                            std::to_string(s.end) + "] out of range for n=" + std::to_string(n));
    if (s.start <= prev_end)
      throw ValidationError("overlapping spans at token " + std::to_string(s.start));
    prev_end = s.end;
    const auto b = static_cast<std::size_t>(s.start), e = static_cast<std::size_t>(s.end);
    if (b == e) {
      tags[b] = "S-" + s.label;
      continue;
    }
    tags[b] = "B-" + s.label;
    for (std::size_t i = b + 1; i < e; ++i) tags[i] = "I-" + s.label;
    tags[e] = "E-" + s.label;
  }
  return tags;
}

namespace detail {

// Splits "B-question" into ('B', "question"). Anything without a recognized
// prefix counts as outside.
inline std::pair<char, std::string_view> split_tag(std::string_view tag) {
  if (tag.size() >= 2 && (tag[1] == '-' || tag[1] == '_') &&
      (tag[0] == 'B' || tag[0] == 'I' || tag[0] == 'E' || tag[0] == 'S'))
    return {tag[0], tag.substr(2)};
  return {'O', {}};
}

}  // namespace detail

// Chunk extraction with the conlleval / seqeval default-mode rules, so
// malformed sequences are repaired rather than rejected.
inline std::vector<EntitySpan> iobes_to_spans(const TagSequence& tags) {
  std::vector<EntitySpan> out;
  char prev = 'O';
  std::string_view prev_type;
  int begin = -1;
  const int n = static_cast<int>(tags.size());
  for (int i = 0; i <= n; ++i) {
    const auto [cur, type] = i < n ? detail::split_tag(tags[static_cast<std::size_t>(i)])
                                   : std::pair<char, std::string_view>{'O', {}};
    const bool ends = prev == 'E' || prev == 'S' ||
                      ((prev == 'B' || prev == 'I') && (cur == 'B' || cur == 'S' || cur == 'O')) ||
                      (prev != 'O' && prev_type != type);
    if (ends && begin >= 0) {
      out.push_back({std::string(prev_type), begin, i - 1});
      begin = -1;
    }
    const bool starts = cur == 'B' || cur == 'S' ||
                        ((prev == 'E' || prev == 'S' || prev == 'O') && (cur == 'E' || cur == 'I')) ||
                        (cur != 'O' && prev_type != type);
    if (starts) begin = i;
    prev = cur;
    prev_type = type;
  }
  return out;
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long true_positives = 0;
  long pred_count = 0;
  long gold_count = 0;

  // Both empty scores 1; otherwise an empty side scores 0.
  static PRF from_counts(long tp, long pred, long gold) {
    PRF r{0, 0, 0, tp, pred, gold};
    if (pred == 0 && gold == 0) {
      r.precision = r.recall = r.f1 = 1.0;
      return r;
    }
    r.precision = pred > 0 ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
    r.recall = gold > 0 ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
    const double s = r.precision + r.recall;
    r.f1 = s > 0 ? 2.0 * r.precision * r.recall / s : 0.0;
    return r;
  }
};

struct EntityReport {
  PRF overall;
  std::map<std::string, PRF> per_label;
  PRF macro;  // unweighted mean of per-label scores; counts are summed
};

struct SpanCounts {
  long tp = 0, pred = 0, gold = 0;
};

inline void accumulate_counts(const TagSequence& pred, const TagSequence& gold,
                              std::map<std::string, SpanCounts>& by_label) {
  if (pred.size() != gold.size())
    throw ValidationError("prediction length " + std::to_string(pred.size()) +
                          " != gold length " + std::to_string(gold.size()));
  const auto ps = iobes_to_spans(pred), gs = iobes_to_spans(gold);
  std::set<std::tuple<std::string, int, int>> gold_set;
  for (const auto& g : gs) {
    gold_set.emplace(g.label, g.start, g.end);
    by_label[g.label].gold++;
  }
  for (const auto& p : ps) {
    auto& c = by_label[p.label];
    c.pred++;
    if (gold_set.count({p.label, p.start, p.end})) c.tp++;
  }
}

inline EntityReport report_from_counts(const std::map<std::string, SpanCounts>& by_label) {
  EntityReport r;
  SpanCounts total;
  double sp = 0, sr = 0, sf = 0;
  for (const auto& [label, c] : by_label) {
    total.tp += c.tp;
    total.pred += c.pred;
    total.gold += c.gold;
    const PRF prf = PRF::from_counts(c.tp, c.pred, c.gold);
    r.per_label[label] = prf;
    sp += prf.precision;
    sr += prf.recall;
    sf += prf.f1;
  }
  r.overall = PRF::from_counts(total.tp, total.pred, total.gold);
  r.macro = r.overall;
  if (!by_label.empty()) {
    const double k = static_cast<double>(by_label.size());
    r.macro.precision = sp / k;
    r.macro.recall = sr / k;
    r.macro.f1 = sf / k;
  }
  return r;
}

// Micro-averaged exact-match span scores over aligned documents.
inline EntityReport entity_prf(const std::vector<TagSequence>& pred,
                               const std::vector<TagSequence>& gold) {
  if (pred.size() != gold.size())
    throw ValidationError("prediction has " + std::to_string(pred.size()) + " documents, gold has " +
                          std::to_string(gold.size()));
  std::map<std::string, SpanCounts> by_label;
  for (std::size_t d = 0; d < pred.size(); ++d) accumulate_counts(pred[d], gold[d], by_label);
  return report_from_counts(by_label);
}

// CSV: label,precision,recall,f1,tp,pred,gold with a trailing "overall" row.
inline std::string metrics_csv(const EntityReport& r) {
  std::string out = "label,precision,recall,f1,tp,pred,gold\n";
  auto row = [&](const std::string& label, const PRF& p) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%ld,%ld,%ld\n", label.c_str(), p.precision,
                  p.recall, p.f1, p.true_positives, p.pred_count, p.gold_count);
    out += buf;
  };
  for (const auto& [label, p] : r.per_label) row(label, p);
  row("overall", r.overall);
  return out;
}

}  // namespace lager
