#ifndef TURBULINK_ERRORS_HPP
#define TURBULINK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace turbulink {

// Bad input: out-of-range parameters, guards, missing modes.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Integration or quadrature that failed its own accuracy check.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Config text that cannot be parsed or fails validation.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& msg, int line = 0, int column = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ", column " +
                                            std::to_string(column) + ": " + msg
                                      : msg),
          line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

}  // namespace turbulink

#endif
