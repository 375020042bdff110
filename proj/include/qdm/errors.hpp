#pragma once

#include <stdexcept>
#include <string>

namespace qdm {

// Error taxonomy mirrors the CLI exit codes: usage -> 2, format -> 3, numeric -> 4.

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    // byte_offset < 0 means "not applicable" (e.g. missing file).
    FormatError(const std::string& msg, long long byte_offset = -1)
        : std::runtime_error(byte_offset >= 0 ? msg + " (byte offset " + std::to_string(byte_offset) + ")"
                                              : msg),
          offset(byte_offset) {}
    long long offset;
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace qdm
