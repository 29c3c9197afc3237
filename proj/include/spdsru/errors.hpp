#pragma once

#include <stdexcept>
#include <string>

namespace spdsru {

/// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A Cholesky pivot was non-positive: the argument is not on SPD(n).
class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what = "matrix is not positive definite")
        : Error(what) {}
};

class NoConvergence : public Error {
public:
    explicit NoConvergence(const std::string& what = "iteration did not converge")
        : Error(what) {}
};

class LogUndefined : public Error {
public:
    explicit LogUndefined(const std::string& what = "principal logarithm undefined (eigenvalue at -1)")
        : Error(what) {}
};

class SingularTriangular : public Error {
public:
    explicit SingularTriangular(const std::string& what = "zero on triangular diagonal")
        : Error(what) {}
};

/// Raised when an inner product leaves (0, 1] on the Hilbert sphere.
class DomainError : public Error {
public:
    using Error::Error;
};

class ArchitectureMismatch : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class Diverged : public Error {
public:
    using Error::Error;
};

/// Malformed dataset, checkpoint or config file.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace spdsru
