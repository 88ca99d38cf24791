#pragma once

#include <stdexcept>
#include <string>

namespace wmx2 {

// Shape/precondition violations on tensor operations.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid scalar arguments (rates, sizes, tolerances).
class ParamError : public std::invalid_argument {
public:
    explicit ParamError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed weight files and other structured inputs. Carries the byte
// offset at which parsing failed (-1 if unknown).
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& msg, long long offset = -1)
        : std::runtime_error(offset >= 0 ? msg + " (at byte offset " + std::to_string(offset) + ")"
                                         : msg),
          offset_(offset) {}
    long long offset() const { return offset_; }

private:
    long long offset_;
};

// Filesystem / decoding failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Asking for a gradient where none is defined (e.g. through resize).
class UnsupportedOpError : public std::logic_error {
public:
    explicit UnsupportedOpError(const std::string& msg) : std::logic_error(msg) {}
};

// Numeric failures: divergence, failed checks.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wmx2
