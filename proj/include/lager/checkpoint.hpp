#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lager/error.hpp"
#include "lager/model.hpp"
#include "lager/optim.hpp"

namespace lager {

// Binary layout (little-endian), see docs/checkpoint.md:
//   "LGCK" u32 version=1
//   u32 len, config text (key = value lines)
//   u32 tensor count; per tensor: u32 name len, name, u32 rows, u32 cols, f64 row-major
//   u64 optimizer step; first-moment tensors then second-moment tensors, same framing
struct Checkpoint {
  std::string config_text;
  ModelParams params;
  AdamWState optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensors(const ModelParams& p) {
    u32(static_cast<std::uint32_t>(count(p)));
    p.for_each([&](const std::string& name, const Eigen::MatrixXd& m) {
      str(name);
      u32(static_cast<std::uint32_t>(m.rows()));
      u32(static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          const double v = m(r, c);
          bytes(&v, 8);
        }
    });
  }
  static std::size_t count(const ModelParams& p) {
    std::size_t n = 0;
    p.for_each([&](const std::string&, const Eigen::MatrixXd&) { ++n; });
    return n;
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const auto n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  // Fills tensors of a structurally known parameter set, checking names and shapes.
  void tensors(ModelParams& p) {
    const auto n = u32();
    if (n != Writer::count(p))
      throw FormatError("checkpoint has " + std::to_string(n) + " tensors, model expects " +
                        std::to_string(Writer::count(p)));
    p.for_each([&](const std::string& name, Eigen::MatrixXd& m) {
      const std::string got = str();
      if (got != name) throw FormatError("checkpoint tensor '" + got + "' where '" + name + "' expected");
      const auto rows = u32(), cols = u32();
      if (rows != m.rows() || cols != m.cols())
        throw FormatError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          double v;
          bytes(&v, 8);
          m(r, c) = v;
        }
    });
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::Writer w;
  w.bytes("LGCK", 4);
  w.u32(kCheckpointVersion);
  w.str(ck.config_text);
  w.tensors(ck.params);
  w.u64(ck.optimizer.step);
  w.tensors(ck.optimizer.m);
  w.tensors(ck.optimizer.v);
  return w.take();
}

// `shape` supplies the tensor layout (e.g. init_params of the echoed config).
inline Checkpoint deserialize_checkpoint(const std::string& buf, const ModelParams& shape) {
  detail::Reader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "LGCK", 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  Checkpoint ck;
  ck.config_text = r.str();
  ck.params = shape;
  r.tensors(ck.params);
  ck.optimizer = AdamWState::for_params(shape);
  ck.optimizer.step = r.u64();
  r.tensors(ck.optimizer.m);
  r.tensors(ck.optimizer.v);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

// Reads only the config echo, so callers can rebuild the parameter shapes.
inline std::string checkpoint_config_text(const std::string& buf) {
  detail::Reader r(buf);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "LGCK", 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  return r.str();
}

}  // namespace lager
