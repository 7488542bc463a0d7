#pragma once

#include <stdexcept>
#include <string>

namespace sadlr {

/// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration or hyper-parameter combination that cannot be realized.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A violated precondition on a call (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_;
};

} // namespace sadlr
