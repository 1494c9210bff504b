#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sefkit {

// Library-wide error carrying a stable machine-readable code.  Codes are
// kebab-case strings ("file-unreadable", "election-rejected", ...) and are
// part of the CLI's error-report contract.
class SefError : public std::runtime_error {
public:
    SefError(std::string code, const std::string& message, long long line = -1)
        : std::runtime_error(line >= 0 ? message + " (line " + std::to_string(line) + ")"
                                       : message),
          code_(std::move(code)),
          line_(line) {}

    const std::string& code() const { return code_; }

    // 1-based input line number when the error is tied to one, else -1.
    long long line() const { return line_; }

private:
    std::string code_;
    long long line_;
};

}  // namespace sefkit
