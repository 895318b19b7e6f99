#pragma once

#include <stdexcept>
#include <string>

namespace effham {

/// Base of every error thrown by the library. `category()` is a stable
/// machine-readable tag used by the CLI to report engine failures.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& what) : Error("invalid-input", what) {}
};

class RangeError : public Error {
public:
    explicit RangeError(const std::string& what) : Error("range", what) {}
};

class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& what, double pivot)
        : Error("singular-matrix", what), pivot_(pivot) {}
    double pivot() const noexcept { return pivot_; }

private:
    double pivot_;
};

/// Step-size underflow in the ODE integrator.
class SingularityError : public Error {
public:
    SingularityError(const std::string& what, double time)
        : Error("singularity", what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, double condition)
        : Error("conditioning", what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

class NoContinuumError : public Error {
public:
    explicit NoContinuumError(const std::string& what) : Error("no-continuum", what) {}
};

class GridError : public Error {
public:
    explicit GridError(const std::string& what) : Error("grid", what) {}
};

class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& what)
        : Error("config", path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace effham
