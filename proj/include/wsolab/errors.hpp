#pragma once

#include <stdexcept>

namespace wsolab {

// File/stream failures, kept distinct so the CLI can map them to their own
// exit code.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wsolab
