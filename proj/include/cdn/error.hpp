#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdn {

/// Broad failure classes. The CLI maps each one to its own exit code.
enum class ErrorCategory {
    Config,     // invalid parameters or configuration values
    Dimension,  // shapes that do not agree
    Format,     // malformed or truncated files
    Io,         // files that cannot be opened, read or written
    Numerical,  // singular systems, non-finite values
};

inline std::string_view category_name(ErrorCategory c) noexcept
{
    switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Dimension: return "dimension";
    case ErrorCategory::Format: return "format";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Numerical: return "numerical";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category)
    {
    }

    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& what)
{
    throw Error(category, what);
}

inline void require(bool condition, ErrorCategory category, const std::string& what)
{
    if (!condition) fail(category, what);
}

} // namespace cdn
