#pragma once

#include <stdexcept>
#include <string>

namespace cf {

// One code per contract-level failure mode. Codes are stable: the C API
// exposes them verbatim and the CLI maps them onto exit codes.
enum class errc {
    ok = 0,
    io_error,
    corrupt_header,
    unsupported_dtype,
    parse_error,
    non_triangle_face,
    not_closed,
    zero_area,
    degenerate_transform,
    no_overlap,
    shape_mismatch,
    representation_mismatch,
    version_mismatch,
    corrupt_checkpoint,
    no_surface,
    empty_mesh,
    dims_mismatch,
    degenerate_after_fallbacks,
    self_intersecting_inner,
    invalid_argument,
    numeric_error,
};

const char* errc_name(errc c);

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
    if (!cond) raise(code, what);
}

} // namespace cf
