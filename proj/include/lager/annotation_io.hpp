#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lager/document.hpp"
#include "lager/error.hpp"

namespace lager {

struct Corpus {
  std::string name;
  std::vector<std::string> label_set;
  std::vector<Document> train;
  std::vector<Document> test;
};

enum class AnnotationFormat { Auto, Funsd, Cord, Internal };

inline AnnotationFormat parse_annotation_format(std::string_view s) {
  if (s == "auto") return AnnotationFormat::Auto;
  if (s == "funsd") return AnnotationFormat::Funsd;
  if (s == "cord") return AnnotationFormat::Cord;
  if (s == "internal") return AnnotationFormat::Internal;
  throw ParameterError("unknown annotation format '" + std::string(s) + "'");
}

// The 30 CORD-v2 entity categories.
inline const std::vector<std::string>& cord_labels() {
  static const std::vector<std::string> labels = {
      "menu.cnt",           "menu.discountprice",       "menu.etc",
      "menu.itemsubtotal",  "menu.nm",                  "menu.num",
      "menu.price",         "menu.sub_cnt",             "menu.sub_etc",
      "menu.sub_nm",        "menu.sub_price",           "menu.sub_unitprice",
      "menu.unitprice",     "menu.vatyn",               "sub_total.discount_price",
      "sub_total.etc",      "sub_total.othersvc_price", "sub_total.service_price",
      "sub_total.subtotal_price", "sub_total.tax_price", "total.cashprice",
      "total.changeprice",  "total.creditcardprice",    "total.emoneyprice",
      "total.menuqty_cnt",  "total.menutype_cnt",       "total.total_etc",
      "total.total_price",  "void_menu.nm",             "void_menu.price"};
  return labels;
}

inline const std::vector<std::string>& funsd_labels() {
  static const std::vector<std::string> labels = {"header", "question", "answer"};
  return labels;
}

namespace detail {

inline nlohmann::json parse_json(std::string_view raw, const std::string& origin) {
  try {
    return nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin + ": malformed JSON at byte " + std::to_string(e.byte) + ": " +
                     e.what());
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const std::string& path) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(path + ": missing field '" + key + "'");
  return j.at(key);
}

inline double number_at(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(path + ": non-finite coordinate");
  return v;
}

// Accepts [x0,y0,x1,y1] (axis-aligned) or an 8-number corner list.
inline Quad quad_from_array(const nlohmann::json& box, const std::string& path, int word) {
  if (!box.is_array() || (box.size() != 4 && box.size() != 8))
    throw ParseError(path + ": box must have 4 or 8 numbers");
  std::vector<double> v;
  for (std::size_t i = 0; i < box.size(); ++i)
    v.push_back(number_at(box[i], path + "[" + std::to_string(i) + "]"));
  if (v.size() == 4) {
    if (v[0] < 0 || v[1] < 0 || v[2] < v[0] || v[3] < v[1])
      throw ValidationError("word " + std::to_string(word) + ": negative or inverted box at " +
                            path);
    return Quad::from_aabb({v[0], v[1], v[2], v[3]});
  }
  Quad q;
  for (std::size_t i = 0; i < 4; ++i) q.corners[i] = {v[2 * i], v[2 * i + 1]};
  return q;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read file '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

// FUNSD form JSON. FUNSD carries no page size, so when none is given the page is
// taken as the extent of all word boxes.
inline Document parse_funsd(std::string_view raw, std::string id, double page_width = 0.0,
                            double page_height = 0.0) {
  const auto j = detail::parse_json(raw, id);
  const auto& form = detail::require(j, "form", "$");
  if (!form.is_array()) throw ParseError("$.form: expected an array");
  Document doc;
  doc.id = std::move(id);
  double max_x = 0.0, max_y = 0.0;
  for (std::size_t b = 0; b < form.size(); ++b) {
    const std::string bpath = "$.form[" + std::to_string(b) + "]";
    const auto& block = form[b];
    const auto& words = detail::require(block, "words", bpath);
    const std::string label = block.value("label", std::string("other"));
    const int first = static_cast<int>(doc.tokens.size());
    for (std::size_t w = 0; w < words.size(); ++w) {
      const std::string wpath = bpath + ".words[" + std::to_string(w) + "]";
      const int index = static_cast<int>(doc.tokens.size());
      Token t;
      t.index = index;
      t.text = detail::require(words[w], "text", wpath).get<std::string>();
      t.box = detail::quad_from_array(detail::require(words[w], "box", wpath), wpath + ".box",
                                      index);
      const AABB bb = aabb(t.box);
      max_x = std::max(max_x, bb.x1);
      max_y = std::max(max_y, bb.y1);
      doc.tokens.push_back(std::move(t));
    }
    const int last = static_cast<int>(doc.tokens.size()) - 1;
    if (label != "other" && last >= first) doc.entities.push_back({label, first, last});
  }
  doc.page_width = page_width > 0 ? page_width : max_x;
  doc.page_height = page_height > 0 ? page_height : max_y;
  validate(doc);
  return doc;
}

// CORD receipt JSON: each valid_line is one entity of its category.
inline Document parse_cord(std::string_view raw, std::string id) {
  const auto j = detail::parse_json(raw, id);
  const auto& lines = detail::require(j, "valid_line", "$");
  if (!lines.is_array()) throw ParseError("$.valid_line: expected an array");
  const auto& known = cord_labels();
  Document doc;
  doc.id = std::move(id);
  if (j.contains("meta") && j["meta"].contains("image_size")) {
    doc.page_width = j["meta"]["image_size"].value("width", 0.0);
    doc.page_height = j["meta"]["image_size"].value("height", 0.0);
  }
  double max_x = 0.0, max_y = 0.0;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::string lpath = "$.valid_line[" + std::to_string(l) + "]";
    const auto& line = lines[l];
    const std::string category = detail::require(line, "category", lpath).get<std::string>();
    if (std::find(known.begin(), known.end(), category) == known.end())
      throw ValidationError(lpath + ": unknown CORD category '" + category + "'");
    const auto& words = detail::require(line, "words", lpath);
    const int first = static_cast<int>(doc.tokens.size());
    for (std::size_t w = 0; w < words.size(); ++w) {
      const std::string wpath = lpath + ".words[" + std::to_string(w) + "]";
      if (!words[w].contains("quad")) throw ValidationError(wpath + ": missing quad");
      const auto& q = words[w]["quad"];
      Token t;
      t.index = static_cast<int>(doc.tokens.size());
      t.text = words[w].value("text", std::string());
      static constexpr std::array<const char*, 8> keys = {"x1", "y1", "x2", "y2",
                                                          "x3", "y3", "x4", "y4"};
      std::array<double, 8> v{};
      for (std::size_t k = 0; k < 8; ++k)
        v[k] = detail::number_at(detail::require(q, keys[k], wpath + ".quad"),
                                 wpath + ".quad." + keys[k]);
      for (std::size_t c = 0; c < 4; ++c) t.box.corners[c] = {v[2 * c], v[2 * c + 1]};
      const AABB bb = aabb(t.box);
      max_x = std::max(max_x, bb.x1);
      max_y = std::max(max_y, bb.y1);
      doc.tokens.push_back(std::move(t));
    }
    const int last = static_cast<int>(doc.tokens.size()) - 1;
    if (last >= first) doc.entities.push_back({category, first, last});
  }
  if (doc.page_width <= 0) doc.page_width = max_x;
  if (doc.page_height <= 0) doc.page_height = max_y;
  validate(doc);
  return doc;
}

inline constexpr int kInternalFormatVersion = 1;

// Internal AnnotationRecord v1: sorted keys, 8-number corner boxes, fixed
// 6-decimal floats. Output is byte-stable for a given document.
inline std::string write_internal(const Document& doc) {
  using detail::fixed6;
  std::string out = "{\"entities\":[";
  for (std::size_t i = 0; i < doc.entities.size(); ++i) {
    const auto& e = doc.entities[i];
    if (i) out += ',';
    out += "{\"end\":" + std::to_string(e.end) + ",\"label\":" + nlohmann::json(e.label).dump() +
           ",\"start\":" + std::to_string(e.start) + "}";
  }
  out += "],\"height\":" + fixed6(doc.page_height);
  out += ",\"id\":" + nlohmann::json(doc.id).dump();
  out += ",\"version\":" + std::to_string(kInternalFormatVersion);
  out += ",\"width\":" + fixed6(doc.page_width);
  out += ",\"words\":[";
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    const auto& t = doc.tokens[i];
    if (i) out += ',';
    out += "{\"box\":[";
    for (std::size_t c = 0; c < 4; ++c) {
      if (c) out += ',';
      out += fixed6(t.box.corners[c].x) + "," + fixed6(t.box.corners[c].y);
    }
    out += "],\"text\":" + nlohmann::json(t.text).dump() + "}";
  }
  out += "]}\n";
  return out;
}

inline Document read_internal(std::string_view raw, const std::string& origin = "<internal>") {
  const auto j = detail::parse_json(raw, origin);
  const auto& version = detail::require(j, "version", "$");
  const bool ok = (version.is_number_integer() && version.get<int>() == kInternalFormatVersion) ||
                  (version.is_string() && version.get<std::string>() == "1");
  if (!ok) throw FormatError(origin + ": unsupported schema version " + version.dump());
  Document doc;
  doc.id = detail::require(j, "id", "$").get<std::string>();
  doc.page_width = detail::number_at(detail::require(j, "width", "$"), "$.width");
  doc.page_height = detail::number_at(detail::require(j, "height", "$"), "$.height");
  const auto& words = detail::require(j, "words", "$");
  for (std::size_t w = 0; w < words.size(); ++w) {
    const std::string wpath = "$.words[" + std::to_string(w) + "]";
    Token t;
    t.index = static_cast<int>(w);
    t.text = detail::require(words[w], "text", wpath).get<std::string>();
    t.box = detail::quad_from_array(detail::require(words[w], "box", wpath), wpath + ".box",
                                    t.index);
    doc.tokens.push_back(std::move(t));
  }
  if (j.contains("entities")) {
    for (const auto& e : j["entities"])
      doc.entities.push_back({e.at("label").get<std::string>(), e.at("start").get<int>(),
                              e.at("end").get<int>()});
  }
  validate(doc);
  return doc;
}

inline AnnotationFormat detect_format(const nlohmann::json& j) {
  if (j.contains("form")) return AnnotationFormat::Funsd;
  if (j.contains("valid_line")) return AnnotationFormat::Cord;
  if (j.contains("version") && j.contains("words")) return AnnotationFormat::Internal;
  return AnnotationFormat::Auto;
}

inline Document load_document(const std::filesystem::path& path,
                              AnnotationFormat format = AnnotationFormat::Auto) {
  const std::string raw = detail::read_file(path);
  const std::string id = path.stem().string();
  if (format == AnnotationFormat::Auto) {
    format = detect_format(detail::parse_json(raw, path.string()));
    if (format == AnnotationFormat::Auto)
      throw FormatError(path.string() + ": cannot detect annotation format");
  }
  try {
    switch (format) {
      case AnnotationFormat::Funsd: return parse_funsd(raw, id);
      case AnnotationFormat::Cord: return parse_cord(raw, id);
      default: return read_internal(raw, path.string());
    }
  } catch (const Error& e) {
    if (std::string_view(e.what()).find(path.string()) != std::string_view::npos) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

struct LoadOptions {
  AnnotationFormat format = AnnotationFormat::Auto;
  std::size_t max_tokens = 512;
};

inline std::vector<Document> load_split(const std::filesystem::path& dir,
                                        const LoadOptions& opts) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("not a directory: '" + dir.string() + "'");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  docs.reserve(files.size());
  for (const auto& f : files) {
    Document d = load_document(f, opts.format);
    if (truncate(d, opts.max_tokens))
      std::cerr << "warning: " << f.string() << " truncated to " << opts.max_tokens
                << " tokens\n";
    docs.push_back(std::move(d));
  }
  return docs;
}

// Sorted union of every label used in the corpus.
inline std::vector<std::string> collect_labels(const std::vector<Document>& a,
                                               const std::vector<Document>& b) {
  std::set<std::string> labels;
  for (const auto* split : {&a, &b})
    for (const auto& d : *split)
      for (const auto& e : d.entities) labels.insert(e.label);
  return {labels.begin(), labels.end()};
}

inline Corpus load_corpus(const std::filesystem::path& train_dir,
                          const std::filesystem::path& test_dir, const LoadOptions& opts = {}) {
  Corpus c;
  c.name = train_dir.parent_path().filename().string();
  c.train = load_split(train_dir, opts);
  c.test = load_split(test_dir, opts);
  if (c.test.empty()) throw IoError("test set required: no documents in '" + test_dir.string() + "'");
  std::set<std::string> ids;
  for (const auto* split : {&c.train, &c.test})
    for (const auto& d : *split)
      if (!ids.insert(d.id).second) throw ValidationError("duplicate document id '" + d.id + "'");
  c.label_set = collect_labels(c.train, c.test);
  return c;
}

inline void write_split(const std::filesystem::path& dir, const std::vector<Document>& docs) {
  std::filesystem::create_directories(dir);
  for (const auto& d : docs) {
    std::ofstream out(dir / (d.id + ".json"), std::ios::binary);
    if (!out) throw IoError("cannot write '" + (dir / (d.id + ".json")).string() + "'");
    out << write_internal(d);
  }
}

}  // namespace lager
