#pragma once

// The periodic non-Abelian loop Toda system
//
//   d+(G_a^-1 d-G_a) + G_a^-1 G_{a+1} - G_{a-1}^-1 G_a = 0,   G_{a+p} = G_a,
//
// for p blocks G_a of size n* x n*, together with the grading matrix h and
// the constant matrices c+ / c- whose nonzero blocks are unit matrices.

#include <array>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "toda/matrix.hpp"

namespace toda {

/// Reduces any integer block index into the external range 1..p.
constexpr int reduce_index(long alpha, int p) noexcept {
  const long r = ((alpha - 1) % p + p) % p;
  return static_cast<int>(r) + 1;
}

/// Nonnegative residue |x|_p in {0, ..., p-1}.
constexpr int residue(long x, int p) noexcept { return static_cast<int>((x % p + p) % p); }

struct TodaSystem {
  int p = 2;
  int n_star = 1;
  Complex eps;  // exp(2 pi i / p)
  ComplexMatrix h;
  ComplexMatrix c_plus;
  ComplexMatrix c_minus;

  int n() const noexcept { return p * n_star; }
  BlockLayout layout() const noexcept {
    return {static_cast<std::size_t>(p), static_cast<std::size_t>(p), static_cast<std::size_t>(n_star)};
  }
  /// Scalar on the diagonal of block alpha (1..p) of h.
  Complex h_block(int alpha) const { return unit_root_pow(p, p - reduce_index(alpha, p) + 1); }
};

/// Builds h = diag(eps^{p-a+1} I) and the cyclic unit-block matrices c+, c-.
inline TodaSystem build_system(int p, int n_star) {
  if (p < 2) throw ValidationError("p must be >= 2, got " + std::to_string(p));
  if (n_star < 1) throw ValidationError("n_star must be >= 1, got " + std::to_string(n_star));
  TodaSystem s;
  s.p = p;
  s.n_star = n_star;
  s.eps = unit_root_pow(p, 1);
  const auto layout = s.layout();
  const auto n = static_cast<std::size_t>(s.n());
  const auto unit = ComplexMatrix::identity(static_cast<std::size_t>(n_star));
  s.h = ComplexMatrix(n, n);
  s.c_plus = ComplexMatrix(n, n);
  for (int a = 1; a <= p; ++a) {
    block_set(s.h, layout, a - 1, a - 1, ComplexMatrix::scalar(static_cast<std::size_t>(n_star), s.h_block(a)));
    // c+ : unit blocks at (a, a+1), corner (p, 1).
    block_set(s.c_plus, layout, a - 1, static_cast<std::size_t>(a % p), unit);
  }
  s.c_minus = s.c_plus.transpose();
  return s;
}

enum class CoordinateMode { independent, euclidean, lorentzian };

inline std::string to_string(CoordinateMode m) {
  switch (m) {
    case CoordinateMode::independent: return "independent";
    case CoordinateMode::euclidean: return "euclidean";
    case CoordinateMode::lorentzian: return "lorentzian";
  }
  return "?";
}

inline CoordinateMode parse_coordinate_mode(const std::string& s) {
  if (s == "independent") return CoordinateMode::independent;
  if (s == "euclidean") return CoordinateMode::euclidean;
  if (s == "lorentzian") return CoordinateMode::lorentzian;
  throw ValidationError("unknown coordinate mode '" + s + "'");
}

/// A point given by its light-cone coordinates (z+, z-).
struct LightCone {
  Complex plus;
  Complex minus;
};

/// Maps grid coordinates (x, t) to (z+, z-).
///   independent: z+ = x,      z- = t
///   euclidean:   z+ = x + it, z- = x - it
///   lorentzian:  z+ = x + t,  z- = x - t
inline LightCone light_cone(CoordinateMode mode, double x, double t) {
  switch (mode) {
    case CoordinateMode::independent: return {x, t};
    case CoordinateMode::euclidean: return {Complex(x, t), Complex(x, -t)};
    case CoordinateMode::lorentzian: return {x + t, x - t};
  }
  return {};
}

/// Point displaced by (dx, dt) in grid coordinates.
inline LightCone shifted(CoordinateMode mode, LightCone z, double dx, double dt) {
  const LightCone d = light_cone(mode, dx, dt);
  return {z.plus + d.plus, z.minus + d.minus};
}

/// Coefficients (w_x, w_t) with d- = w_x d/dx + w_t d/dt, and likewise for d+.
struct DerivativeWeights {
  Complex dx;
  Complex dt;
};

inline DerivativeWeights minus_derivative(CoordinateMode mode) {
  switch (mode) {
    case CoordinateMode::independent: return {0.0, 1.0};
    case CoordinateMode::euclidean: return {0.5, Complex(0.0, 0.5)};
    case CoordinateMode::lorentzian: return {0.5, -0.5};
  }
  return {};
}

inline DerivativeWeights plus_derivative(CoordinateMode mode) {
  switch (mode) {
    case CoordinateMode::independent: return {1.0, 0.0};
    case CoordinateMode::euclidean: return {0.5, Complex(0.0, -0.5)};
    case CoordinateMode::lorentzian: return {0.5, 0.5};
  }
  return {};
}

/// Evaluator for the blocks G_a of a candidate solution.
///
/// The wrapped function receives alpha already reduced into 1..p. Any
/// singular linear solve inside it surfaces as SingularFieldError carrying
/// the offending point.
class GammaField {
 public:
  using Evaluator = std::function<ComplexMatrix(int alpha, LightCone z)>;

  GammaField() = default;
  GammaField(int p, int n_star, Evaluator eval) : p_(p), n_star_(n_star), eval_(std::move(eval)) {}

  int p() const noexcept { return p_; }
  int n_star() const noexcept { return n_star_; }

  ComplexMatrix operator()(long alpha, LightCone z) const {
    const int a = reduce_index(alpha, p_);
    try {
      return eval_(a, z);
    } catch (const SingularMatrixError& e) {
      throw SingularFieldError(a, z.plus, z.minus, e.what());
    }
  }

  std::optional<ComplexMatrix> try_evaluate(long alpha, LightCone z) const {
    try {
      return (*this)(alpha, z);
    } catch (const SingularFieldError&) {
      return std::nullopt;
    }
  }

  bool valid_at(long alpha, LightCone z) const { return try_evaluate(alpha, z).has_value(); }

 private:
  int p_ = 2;
  int n_star_ = 1;
  Evaluator eval_;
};

/// The trivial solution G_a = I.
inline GammaField vacuum_field(const TodaSystem& system) {
  const auto ns = static_cast<std::size_t>(system.n_star);
  return {system.p, system.n_star, [ns](int, LightCone) { return ComplexMatrix::identity(ns); }};
}

/// Residual of the periodic Toda system for block alpha at point z.
///
/// Both derivatives are second-order central differences with spacing
/// `step` along the grid directions of `mode`; d- and d+ are the
/// corresponding (Wirtinger-type in the euclidean case) combinations.
inline ComplexMatrix toda_residual(const GammaField& field, const TodaSystem& system, long alpha, LightCone z,
                                   double step, CoordinateMode mode = CoordinateMode::independent) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
  const int a = reduce_index(alpha, system.p);

  // Stencil cache keyed by integer offsets (in units of step).
  std::map<std::pair<int, int>, ComplexMatrix> values;
  auto gamma_at = [&](int i, int j) -> const ComplexMatrix& {
    auto it = values.find({i, j});
    if (it == values.end()) it = values.emplace(std::pair{i, j}, field(a, shifted(mode, z, i * step, j * step))).first;
    return it->second;
  };
  auto inverse_at = [&](long block, LightCone pt) {
    try {
      return inverse(field(block, pt));
    } catch (const SingularMatrixError& e) {
      throw SingularFieldError(reduce_index(block, system.p), pt.plus, pt.minus, e.what());
    }
  };

  const auto wm = minus_derivative(mode);
  const auto wp = plus_derivative(mode);
  const double inv2h = 1.0 / (2.0 * step);

  // A = G^-1 d-G at offset (i, j).
  auto connection_at = [&](int i, int j) {
    const auto ns = static_cast<std::size_t>(system.n_star);
    ComplexMatrix d(ns, ns);
    if (wm.dx != Complex{}) d += (gamma_at(i + 1, j) - gamma_at(i - 1, j)) * (wm.dx * inv2h);
    if (wm.dt != Complex{}) d += (gamma_at(i, j + 1) - gamma_at(i, j - 1)) * (wm.dt * inv2h);
    return inverse_at(a, shifted(mode, z, i * step, j * step)) * d;
  };

  const auto ns = static_cast<std::size_t>(system.n_star);
  ComplexMatrix out(ns, ns);
  if (wp.dx != Complex{}) out += (connection_at(1, 0) - connection_at(-1, 0)) * (wp.dx * inv2h);
  if (wp.dt != Complex{}) out += (connection_at(0, 1) - connection_at(0, -1)) * (wp.dt * inv2h);

  const ComplexMatrix g = gamma_at(0, 0);
  out += inverse_at(a, z) * field(alpha + 1, z);
  out -= inverse_at(alpha - 1, z) * g;
  return out;
}

/// The symmetry G_a -> xi x^-1 G_a x (constant xi != 0, constant invertible x).
inline GammaField apply_symmetry(const GammaField& field, Complex xi, const ComplexMatrix& x) {
  if (xi == Complex{}) throw ValidationError("symmetry scale xi must be nonzero");
  if (!x.square() || x.rows() != static_cast<std::size_t>(field.n_star())) {
    throw ValidationError("symmetry matrix must be n* x n*");
  }
  LuDecomposition lu(x);
  if (lu.singular()) throw ValidationError("symmetry matrix x is singular");
  auto x_inv = std::make_shared<const ComplexMatrix>(lu.inverse());
  auto x_keep = std::make_shared<const ComplexMatrix>(x);
  return {field.p(), field.n_star(), [field, xi, x_inv, x_keep](int alpha, LightCone z) {
            return (*x_inv * field(alpha, z) * *x_keep) * xi;
          }};
}

}  // namespace toda
