#pragma once

#include <stdexcept>
#include <string>

namespace dcls {

// Base error for everything raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments, bad config files, malformed inputs. CLI exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Failures at run time: training divergence, missing checkpoints,
// I/O problems on outputs. CLI exit code 2.
class RuntimeError : public Error {
public:
    using Error::Error;
};

} // namespace dcls
