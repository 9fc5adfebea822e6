#ifndef DSCMP_NUMKIT_ERRORS_HPP_
#define DSCMP_NUMKIT_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dscmp {

/// Operand shapes or widths do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value that must be finite (loss, gradient, input) is NaN or infinite.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace dscmp

#endif  // DSCMP_NUMKIT_ERRORS_HPP_
