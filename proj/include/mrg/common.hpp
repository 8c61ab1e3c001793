#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mrg {

/// Base error for all invariant and contract violations in the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between operands; the message names the op and both shapes.
struct ShapeError : Error {
    using Error::Error;
};

/// An op produced a NaN/Inf, or a numeric precondition was violated.
struct NumericError : Error {
    using Error::Error;
};

/// Malformed input file; carries the offending line where applicable.
struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

/// printf-style formatting into std::string (no <format> on this toolchain).
inline std::string strf(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    va_list args2;
    va_copy(args2, args);
    int n = std::vsnprintf(nullptr, 0, fmt, args);
    va_end(args);
    std::string out(n > 0 ? static_cast<size_t>(n) : 0, '\0');
    if (n > 0) std::vsnprintf(out.data(), out.size() + 1, fmt, args2);
    va_end(args2);
    return out;
}

/// Streaming FNV-1a 64-bit hash; used for manifests and determinism checks.
struct Fnv1a64 {
    uint64_t state = 14695981039346656037ULL;

    void update(const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            state ^= p[i];
            state *= 1099511628211ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    uint64_t digest() const { return state; }
};

inline uint64_t fnv1a64(std::string_view s) {
    Fnv1a64 h;
    h.update(s);
    return h.digest();
}

/// Shortest decimal form that round-trips a double exactly; used in every
/// CSV/text output so identical runs produce identical bytes.
inline std::string fmt_double(double v) {
    return strf("%.17g", v);
}

} // namespace mrg
