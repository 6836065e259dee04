#pragma once

#include <stdexcept>
#include <string>

namespace oat {

enum class errc {
    invalid_argument = 1,
    dimension_mismatch = 2,
    io_failure = 3,
    numeric_failure = 4,
    unsupported = 5,
};

class error : public std::runtime_error {
public:
    error(errc c, const std::string& msg) : std::runtime_error(msg), code_(c) {}
    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc c, const std::string& msg) { throw error(c, msg); }

inline void require(bool ok, errc c, const std::string& msg) {
    if (!ok) fail(c, msg);
}

} // namespace oat
