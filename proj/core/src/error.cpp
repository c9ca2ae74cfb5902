#include "vipcap/error.hpp"

namespace vipcap {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return "config error";
        case ErrorKind::Input: return "input error";
        case ErrorKind::Decode: return "decode error";
        case ErrorKind::Build: return "build error";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::Io: return "io error";
    }
    return "error";
}

}  // namespace vipcap
