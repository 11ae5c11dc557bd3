#pragma once

#include <stdexcept>
#include <string>

namespace fkdv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid grid, parameter set or scenario.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation requested outside its mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method failed to meet its stopping criterion.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// The grid cannot represent the requested profile.
class ResolutionError : public Error {
public:
    using Error::Error;
};

/// The discrete spectrum contradicts the expected structure of L.
class SpectralAnomaly : public Error {
public:
    using Error::Error;
};

}  // namespace fkdv
