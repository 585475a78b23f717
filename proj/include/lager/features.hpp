#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <openssl/sha.h>

#include "lager/document.hpp"
#include "lager/error.hpp"
#include "lager/geometry.hpp"

namespace lager {

using FeatureMatrix = Eigen::MatrixXd;

inline constexpr int kLayoutDims = 8;

enum class EncoderMode { Hashed, External };

struct EncoderConfig {
  EncoderMode mode = EncoderMode::Hashed;
  int d = 64;
  int ngram_min = 1;
  int ngram_max = 3;
  std::uint64_t hash_seed = 0;
  bool include_layout = true;
  int normalize_coords_to = 1000;
  // External mode reads <embedding_dir>/<doc_id>.lgem.
  std::filesystem::path embedding_dir;

  int text_dims() const { return include_layout ? d - kLayoutDims : d; }

  void validate() const {
    if (mode == EncoderMode::External) return;
    if (d < 1) throw ParameterError("encoder d must be >= 1");
    if (include_layout && d < kLayoutDims)
      throw ParameterError("encoder d must be >= 8 when include_layout is set");
    if (ngram_min < 1 || ngram_max < ngram_min)
      throw ParameterError("encoder ngram range must satisfy 1 <= min <= max");
    if (normalize_coords_to < 1) throw ParameterError("normalize_coords_to must be >= 1");
  }
};

namespace detail {

// 64-bit FNV-1a, seeded through the offset basis.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Final avalanche so low bits (the bucket) depend on every input byte.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

}  // namespace detail

// Signed feature hashing of byte n-grams, L2-normalized. Case-sensitive.
inline Eigen::VectorXd hashed_text_features(std::string_view text, int d_text,
                                            std::uint64_t seed, int ngram_min = 1,
                                            int ngram_max = 3) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d_text);
  if (d_text < 1) return v;
  for (int n = ngram_min; n <= ngram_max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    if (text.size() < len) break;
    for (std::size_t i = 0; i + len <= text.size(); ++i) {
      const std::uint64_t h = detail::mix64(detail::fnv1a(text.substr(i, len), seed + len));
      const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(d_text));
      v[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  const double norm = v.norm();
  if (norm > 0) v /= norm;
  return v;
}

// [x0, y0, x1, y1, width, height, cx, cy] of the box hull, each quantized to
// the 0..normalize_to grid of the page and then mapped to 0..1. Values are not
// clamped, so content moved off the page stays outside [0, 1].
inline std::array<double, kLayoutDims> layout_features(const Quad& box, double page_w,
                                                       double page_h, int normalize_to = 1000) {
  if (!(page_w > 0) || !(page_h > 0)) throw ParameterError("page dimensions must be positive");
  const AABB b = aabb(box);
  const Point c = centroid(box);
  const double nt = normalize_to;
  auto qx = [&](double x) { return std::trunc(nt * x / page_w) / nt; };
  auto qy = [&](double y) { return std::trunc(nt * y / page_h) / nt; };
  return {qx(b.x0), qy(b.y0), qx(b.x1), qy(b.y1), qx(b.width()), qy(b.height()), qx(c.x), qy(c.y)};
}

// ---- LGEM embedding files -------------------------------------------------
// little-endian: "LGEM", u32 version=1, u32 n, u32 d, n*d f32 row-major,
// optional 32-byte SHA-256 of the document id.

inline constexpr std::array<char, 4> kLgemMagic = {'L', 'G', 'E', 'M'};
inline constexpr std::uint32_t kLgemVersion = 1;

struct ExternalEmbedding {
  FeatureMatrix values;
  std::optional<std::array<unsigned char, 32>> id_hash;
};

inline std::array<unsigned char, 32> document_id_hash(std::string_view id) {
  std::array<unsigned char, 32> out{};
  SHA256(reinterpret_cast<const unsigned char*>(id.data()), id.size(), out.data());
  return out;
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "LGEM I/O assumes a little-endian host");

inline std::uint32_t read_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  std::memcpy(&v, buf.data() + off, 4);
  return v;
}

}  // namespace detail

inline ExternalEmbedding parse_lgem(const std::string& buf, const std::string& origin) {
  if (buf.size() < 16) throw FormatError(origin + ": truncated header");
  if (std::memcmp(buf.data(), kLgemMagic.data(), 4) != 0) throw FormatError(origin + ": bad magic");
  const std::uint32_t version = detail::read_u32(buf, 4);
  if (version != kLgemVersion)
    throw FormatError(origin + ": unsupported version " + std::to_string(version));
  const std::uint64_t n = detail::read_u32(buf, 8), d = detail::read_u32(buf, 12);
  const std::uint64_t payload = n * d * 4;
  if (buf.size() != 16 + payload && buf.size() != 16 + payload + 32)
    throw FormatError(origin + ": expected " + std::to_string(16 + payload) + " or " +
                      std::to_string(16 + payload + 32) + " bytes, found " +
                      std::to_string(buf.size()));
  ExternalEmbedding e;
  e.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < d; ++j) {
      float f = 0.0f;
      std::memcpy(&f, buf.data() + 16 + 4 * (i * d + j), 4);
      if (!std::isfinite(f))
        throw DataError(origin + ": non-finite value at row " + std::to_string(i) + ", column " +
                        std::to_string(j));
      e.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f;
    }
  if (buf.size() == 16 + payload + 32) {
    std::array<unsigned char, 32> h{};
    std::memcpy(h.data(), buf.data() + 16 + payload, 32);
    e.id_hash = h;
  }
  return e;
}

// Loads an embedding file and checks it has expected_n rows. When doc_id is
// given and the file carries an id hash, the hash must match.
inline FeatureMatrix load_external(const std::filesystem::path& path, std::size_t expected_n,
                                   std::optional<std::string_view> doc_id = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read embedding file '" + path.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ExternalEmbedding e = parse_lgem(buf, path.string());
  if (static_cast<std::size_t>(e.values.rows()) != expected_n)
    throw AlignmentError(path.string() + ": file has n=" + std::to_string(e.values.rows()) +
                         " rows but the document has " + std::to_string(expected_n) + " tokens");
  if (doc_id && e.id_hash && *e.id_hash != document_id_hash(*doc_id))
    throw AlignmentError(path.string() + ": document id hash does not match '" +
                         std::string(*doc_id) + "'");
  return std::move(e.values);
}

inline std::string serialize_lgem(const FeatureMatrix& m,
                                  std::optional<std::string_view> doc_id = std::nullopt) {
  std::string out(kLgemMagic.begin(), kLgemMagic.end());
  auto put_u32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kLgemVersion);
  put_u32(static_cast<std::uint32_t>(m.rows()));
  put_u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const float f = static_cast<float>(m(i, j));
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  if (doc_id) {
    const auto h = document_id_hash(*doc_id);
    out.append(reinterpret_cast<const char*>(h.data()), h.size());
  }
  return out;
}

inline FeatureMatrix encode_document(const Document& doc, const EncoderConfig& cfg) {
  cfg.validate();
  if (cfg.mode == EncoderMode::External) {
    FeatureMatrix m =
        load_external(cfg.embedding_dir / (doc.id + ".lgem"), doc.size(), std::string_view(doc.id));
    if (cfg.d > 0 && m.cols() != cfg.d)
      throw AlignmentError("document '" + doc.id + "': expected embedding dimension " +
                           std::to_string(cfg.d) + ", found " + std::to_string(m.cols()));
    return m;
  }
  const int dt = cfg.text_dims();
  FeatureMatrix h = FeatureMatrix::Zero(static_cast<Eigen::Index>(doc.size()), cfg.d);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& t = doc.tokens[i];
    h.row(r).head(dt) =
        hashed_text_features(t.text, dt, cfg.hash_seed, cfg.ngram_min, cfg.ngram_max).transpose();
    if (cfg.include_layout) {
      const auto lf = layout_features(t.box, doc.page_width, doc.page_height, cfg.normalize_coords_to);
      for (int c = 0; c < kLayoutDims; ++c) h(r, dt + c) = lf[static_cast<std::size_t>(c)];
    }
  }
  return h;
}

}  // namespace lager
