#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lager/error.hpp"
#include "lager/geometry.hpp"

namespace lager {

// Inclusive token range [start, end] carrying an entity label.
struct EntitySpan {
  std::string label;
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan& a, const EntitySpan& b) {
    if (auto c = a.start <=> b.start; c != 0) return c;
    if (auto c = a.end <=> b.end; c != 0) return c;
    return a.label <=> b.label;
  }
};

struct Token {
  int index = 0;
  std::string text;
  Quad box;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Document {
  std::string id;
  std::vector<Token> tokens;
  double page_width = 0.0;
  double page_height = 0.0;
  std::vector<EntitySpan> entities;

  std::size_t size() const { return tokens.size(); }

  friend bool operator==(const Document&, const Document&) = default;
};

// Checks the structural invariants: contiguous token indices, finite corners,
// in-range and non-overlapping spans. Throws ValidationError naming the culprit.
inline void validate(const Document& doc) {
  const int n = static_cast<int>(doc.tokens.size());
  for (int i = 0; i < n; ++i) {
    const Token& t = doc.tokens[static_cast<std::size_t>(i)];
    if (t.index != i)
      throw ValidationError("document '" + doc.id + "': token " + std::to_string(i) +
                            " has index " + std::to_string(t.index));
    for (const auto& c : t.box.corners)
      if (!is_finite(c))
        throw ValidationError("document '" + doc.id + "': word " + std::to_string(i) +
                              " has a non-finite corner");
  }
  std::vector<EntitySpan> spans = doc.entities;
  std::sort(spans.begin(), spans.end());
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto& e = spans[s];
    if (e.start < 0 || e.end < e.start || e.end >= n)
      throw ValidationError("document '" + doc.id + "': entity '" + e.label + "' [" +
                            std::to_string(e.start) + "," + std::to_string(e.end) +
                            "] outside 0.." + std::to_string(n - 1));
    if (s > 0 && spans[s - 1].end >= e.start)
      throw ValidationError("document '" + doc.id + "': overlapping entities at token " +
                            std::to_string(e.start));
  }
}

// Keeps the first max_tokens tokens; spans crossing the cut are dropped.
// Returns true when anything was removed.
inline bool truncate(Document& doc, std::size_t max_tokens) {
  if (doc.tokens.size() <= max_tokens) return false;
  doc.tokens.resize(max_tokens);
  const int limit = static_cast<int>(max_tokens);
  std::erase_if(doc.entities, [limit](const EntitySpan& e) { return e.end >= limit; });
  return true;
}

}  // namespace lager
