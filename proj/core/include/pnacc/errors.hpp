#pragma once

#include <stdexcept>
#include <string>

namespace pnacc {

// Malformed input data: bad container magic, truncated packet, unparsable CSV.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Weight/network mismatch: unbound weight id, wrong tensor dims, dtype conflict.
struct BindError : std::runtime_error {
    explicit BindError(const std::string& what) : std::runtime_error(what) {}
};

// Capacity violation: point count above the 4096-row design limit, store overflow.
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pnacc
