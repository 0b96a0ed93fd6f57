#pragma once

#include <stdexcept>
#include <string>

namespace mantis {

// Base for every error raised by the library. Callers that only care about
// "something in mantis failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input to a concealment operator violated its byte preconditions.
class ConcealmentError : public Error {
public:
    using Error::Error;
};

// Payload could not be assembled (unresolved placeholder, over-long text, ...).
class AssemblyError : public Error {
public:
    using Error::Error;
};

// Bad operator configuration: empty trigger pool, bad tarpit config, port clash.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Socket level failure.
class NetError : public Error {
public:
    using Error::Error;
};

}  // namespace mantis
