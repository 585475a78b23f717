#pragma once

#include <stdexcept>
#include <string>

namespace lager {

// Every failure surfaced by the library derives from Error. kind() is a stable,
// machine-parsable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse", w) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error("validation", w) {}
};
struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error("parameter", w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct AlignmentError : Error {
  explicit AlignmentError(const std::string& w) : Error("alignment", w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error("data", w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error("contract", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};

}  // namespace lager
