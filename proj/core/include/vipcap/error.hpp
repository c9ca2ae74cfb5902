#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vipcap {

enum class ErrorKind {
    Config,   // shape or configuration mismatch
    Input,    // caller supplied an invalid value
    Decode,   // malformed file or byte stream
    Build,    // index / model assembly failure
    Numeric,  // non-finite values
    Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace vipcap
