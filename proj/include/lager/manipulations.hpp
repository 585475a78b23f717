#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "lager/document.hpp"
#include "lager/error.hpp"
#include "lager/geometry.hpp"

namespace lager {

namespace detail {

template <class F>
Document map_corners(Document doc, F&& f) {
  for (auto& t : doc.tokens) t.box = t.box.map(f);
  return doc;
}

// (x, y) rotated by delta about c with the printed formula
//   x' = (x - cx) cos d - (y - cy) sin d + cx,  y' = (x - cx) sin d + (y - cy) cos d + cy.
// In the y-down page frame a positive delta turns clockwise on screen.
inline Point rotate_about(Point p, Point c, double cos_d, double sin_d) {
  const double dx = p.x - c.x, dy = p.y - c.y;
  return {dx * cos_d - dy * sin_d + c.x, dx * sin_d + dy * cos_d + c.y};
}

}  // namespace detail

inline Document shift(Document doc, double a) {
  return detail::map_corners(std::move(doc), [a](Point p) { return Point{p.x + a, p.y + a}; });
}

// Divides every coordinate by (s_w, s_h). The page canvas keeps its size, so
// page-normalized layout features see the content shrink toward the origin.
inline Document scale(Document doc, double s_w, double s_h) {
  if (!(s_w > 0.0) || !(s_h > 0.0))
    throw ParameterError("scale factors must be positive, got s_w=" + std::to_string(s_w) +
                         " s_h=" + std::to_string(s_h));
  return detail::map_corners(std::move(doc),
                             [s_w, s_h](Point p) { return Point{p.x / s_w, p.y / s_h}; });
}

// Rotates each box about its own bottom-left corner (x0, y1).
inline Document rotate_per_box(Document doc, double delta_deg) {
  const double r = deg_to_rad(delta_deg);
  const double c = std::cos(r), s = std::sin(r);
  for (auto& t : doc.tokens) {
    const Point pivot = t.box.corners[3];
    t.box = t.box.map([&](Point p) { return detail::rotate_about(p, pivot, c, s); });
  }
  return doc;
}

// Rotates the whole page about one shared center.
inline Document rotate_document(Document doc, double delta_deg, Point center) {
  const double r = deg_to_rad(delta_deg);
  const double c = std::cos(r), s = std::sin(r);
  return detail::map_corners(std::move(doc), [&](Point p) {
    return detail::rotate_about(p, center, c, s);
  });
}

struct ManipSpec {
  enum class Kind { Shift, Scale, RotatePerBox, RotateDocument };
  Kind kind = Kind::Shift;
  double a = 0.0;
  double s_w = 1.0, s_h = 1.0;
  double delta = 0.0;
  // Center for RotateDocument; cy defaults to the page height of each document.
  double cx = 0.0;
  std::optional<double> cy;

  static ManipSpec shift_by(double a) { return {Kind::Shift, a}; }
  static ManipSpec scale_by(double sw, double sh) {
    ManipSpec m;
    m.kind = Kind::Scale;
    m.s_w = sw;
    m.s_h = sh;
    return m;
  }
  static ManipSpec rotate_boxes(double d) {
    ManipSpec m;
    m.kind = Kind::RotatePerBox;
    m.delta = d;
    return m;
  }
};

inline Document apply(const ManipSpec& m, Document doc) {
  switch (m.kind) {
    case ManipSpec::Kind::Shift: return shift(std::move(doc), m.a);
    case ManipSpec::Kind::Scale: return scale(std::move(doc), m.s_w, m.s_h);
    case ManipSpec::Kind::RotatePerBox: return rotate_per_box(std::move(doc), m.delta);
    case ManipSpec::Kind::RotateDocument: {
      const Point c{m.cx, m.cy.value_or(doc.page_height)};
      return rotate_document(std::move(doc), m.delta, c);
    }
  }
  return doc;
}

// Grammar: shift:a=20 | scale:sw=2,sh=2 | rotate:delta=8 | rotate-doc:delta=8,cx=0,cy=H
// where cy=H means "page height of each document".
inline ManipSpec parse_manip(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw ParameterError("manip '" + std::string(text) + "': expected kind:key=value,...");
  const std::string kind(text.substr(0, colon));
  std::map<std::string, std::string> kv;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      throw ParameterError("manip '" + std::string(text) + "': bad item '" + std::string(item) + "'");
    kv[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  auto number = [&](const std::string& key) -> double {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ParameterError("manip '" + std::string(text) + "': missing key '" + key + "'");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != it->second.size() || !std::isfinite(v))
      throw ParameterError("manip '" + std::string(text) + "': bad number for '" + key + "'");
    kv.erase(it);
    return v;
  };
  ManipSpec m;
  if (kind == "shift") {
    m = ManipSpec::shift_by(number("a"));
  } else if (kind == "scale") {
    const double sw = number("sw"), sh = number("sh");
    if (!(sw > 0) || !(sh > 0)) throw ParameterError("manip scale factors must be positive");
    m = ManipSpec::scale_by(sw, sh);
  } else if (kind == "rotate") {
    m = ManipSpec::rotate_boxes(number("delta"));
  } else if (kind == "rotate-doc") {
    m.kind = ManipSpec::Kind::RotateDocument;
    m.delta = number("delta");
    m.cx = kv.count("cx") ? number("cx") : 0.0;
    if (kv.count("cy")) {
      if (kv["cy"] == "H")
        kv.erase("cy");
      else
        m.cy = number("cy");
    }
  } else {
    throw ParameterError("unknown manipulation kind '" + kind + "'");
  }
  if (!kv.empty())
    throw ParameterError("manip '" + std::string(text) + "': unexpected key '" + kv.begin()->first + "'");
  return m;
}

inline std::string to_string(const ManipSpec& m) {
  auto num = [](double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  };
  switch (m.kind) {
    case ManipSpec::Kind::Shift: return "shift:a=" + num(m.a);
    case ManipSpec::Kind::Scale: return "scale:sw=" + num(m.s_w) + ",sh=" + num(m.s_h);
    case ManipSpec::Kind::RotatePerBox: return "rotate:delta=" + num(m.delta);
    case ManipSpec::Kind::RotateDocument:
      return "rotate-doc:delta=" + num(m.delta) + ",cx=" + num(m.cx) +
             ",cy=" + (m.cy ? num(*m.cy) : std::string("H"));
  }
  return {};
}

}  // namespace lager
