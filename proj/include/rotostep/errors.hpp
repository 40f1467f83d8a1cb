#pragma once

#include <stdexcept>
#include <string>

namespace rotostep {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a geometric map (radius, time, slice index).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent mesh: inverted elements, unpaired periodic nodes, bad sizes.
class MeshError : public Error {
public:
    using Error::Error;
};

/// Malformed configuration text or invalid parameter value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (MSH, CSV).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Linear or nonlinear solver failure.
class SolverError : public Error {
public:
    using Error::Error;
};

}  // namespace rotostep
