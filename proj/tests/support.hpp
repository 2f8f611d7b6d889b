#pragma once

// Random inputs shared by the test suites.

#include <random>

#include "toda/toda.hpp"

namespace toda::testing {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : g_(seed) {}

  double real(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(g_); }
  Complex complex(double scale = 1.0) { return Complex(n_(g_), n_(g_)) * scale; }
  Complex annulus(double lo, double hi) { return std::polar(real(lo, hi), real(0.0, 6.283185307179586)); }
  ComplexMatrix matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
    ComplexMatrix m(rows, cols);
    for (auto& v : m.entries()) v = complex(scale);
    return m;
  }
  ComplexMatrix square(std::size_t n, double scale = 1.0) { return matrix(n, n, scale); }
  /// I + small noise, comfortably invertible.
  ComplexMatrix near_identity(std::size_t n, double scale = 0.3) {
    return ComplexMatrix::identity(n) + square(n, scale);
  }

 private:
  std::mt19937_64 g_;
  std::normal_distribution<double> n_;
};

/// General dressing data with every c_{i,a}, d_{i,a} random.
inline DressingData random_dressing(const TodaSystem& sys, int r, Draw& d, double scale = 0.5) {
  DressingData data;
  data.r = r;
  const auto ns = static_cast<std::size_t>(sys.n_star);
  for (;;) {
    data.mu.clear();
    data.nu.clear();
    for (int i = 0; i < r; ++i) {
      data.mu.push_back(d.annulus(0.6, 1.6));
      data.nu.push_back(d.annulus(0.6, 1.6));
    }
    try {
      validate_poles(sys.p, data.mu, data.nu);
      break;
    } catch (const ValidationError&) {
    }
  }
  data.c_init.assign(static_cast<std::size_t>(r), {});
  data.d_init.assign(static_cast<std::size_t>(r), {});
  for (int i = 0; i < r; ++i) {
    for (int a = 0; a < sys.p; ++a) {
      data.c_init[static_cast<std::size_t>(i)].push_back(d.square(ns, scale));
      data.d_init[static_cast<std::size_t>(i)].push_back(d.square(ns, scale));
    }
  }
  return data;
}

/// Soliton data with J != K, drawn until validate() accepts it.
inline SolitonData random_soliton(const TodaSystem& sys, int r, Draw& d) {
  const auto ns = static_cast<std::size_t>(sys.n_star);
  for (;;) {
    SolitonData s;
    s.r = r;
    for (int i = 0; i < r; ++i) {
      s.mu.push_back(d.annulus(0.6, 1.6));
      s.nu.push_back(d.annulus(0.6, 1.6));
      const int J = 1 + static_cast<int>(d.real(0.0, 0.999) * sys.p);
      int K = 1 + static_cast<int>(d.real(0.0, 0.999) * (sys.p - 1));
      if (K >= J) ++K;
      s.I.push_back(1 + static_cast<int>(d.real(0.0, 0.999) * sys.p));
      s.J.push_back(J);
      s.K.push_back(K);
      s.c_I.push_back(d.near_identity(ns));
      s.d_J.push_back(d.square(ns));
      s.d_K.push_back(d.square(ns));
    }
    try {
      validate(sys, s);
      return s;
    } catch (const ValidationError&) {
    }
  }
}

/// The scalar example: p=2, n*=1, mu=1, nu=2, I=2, J=1, K=2, c=d_J=1 and
/// d_K chosen so that H = 1/2 (then Z = 0 gives e^Z H = 1/2).
inline SolitonData spot_soliton() {
  SolitonData s;
  s.r = 1;
  s.mu = {1.0};
  s.nu = {2.0};
  s.I = {2};
  s.J = {1};
  s.K = {2};
  s.c_I = {ComplexMatrix::identity(1)};
  s.d_J = {ComplexMatrix::identity(1)};
  s.d_K = {ComplexMatrix::scalar(1, 1.0 / 6.0)};
  return s;
}

/// Points where the field still varies but sits in a tail: complex z+, z-
/// with parts in [-3, 3] and max |G^-1 d G| in [1e-2, 5e-2].
inline std::vector<LightCone> tail_points(const GammaField& f, const TodaSystem& sys, Draw& d, std::size_t count,
                                          int max_attempts = 3000) {
  std::vector<LightCone> out;
  for (int attempt = 0; out.size() < count && attempt < max_attempts; ++attempt) {
    const LightCone z{Complex(d.real(-3, 3), d.real(-3, 3)), Complex(d.real(-3, 3), d.real(-3, 3))};
    const auto c = connection_norm(f, sys, z, 1e-3);
    if (c && *c >= 1e-2 && *c <= 5e-2) out.push_back(z);
  }
  return out;
}

}  // namespace toda::testing
