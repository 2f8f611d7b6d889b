#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace toda {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands with non-conforming shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Block or entry index outside the addressed layout.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Input data violating a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Rational function evaluated exactly at one of its poles.
class PoleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// LU factorization met a pivot below the singularity threshold.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(std::size_t pivot, double magnitude, double threshold)
      : Error("singular matrix: pivot " + std::to_string(pivot) + " has magnitude " +
              std::to_string(magnitude) + " below threshold " + std::to_string(threshold)),
        pivot_(pivot),
        magnitude_(magnitude) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double magnitude() const noexcept { return magnitude_; }

 private:
  std::size_t pivot_;
  double magnitude_;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A field evaluator could not produce a value at a point (blow-up locus).
class SingularFieldError : public Error {
 public:
  SingularFieldError(int alpha, std::complex<double> z_plus, std::complex<double> z_minus,
                     const std::string& what)
      : Error("singular field at alpha=" + std::to_string(alpha) + " z+=(" +
              std::to_string(z_plus.real()) + "," + std::to_string(z_plus.imag()) + ") z-=(" +
              std::to_string(z_minus.real()) + "," + std::to_string(z_minus.imag()) + "): " + what),
        alpha_(alpha),
        z_plus_(z_plus),
        z_minus_(z_minus) {}

  int alpha() const noexcept { return alpha_; }
  std::complex<double> z_plus() const noexcept { return z_plus_; }
  std::complex<double> z_minus() const noexcept { return z_minus_; }

 private:
  int alpha_;
  std::complex<double> z_plus_;
  std::complex<double> z_minus_;
};

}  // namespace toda
