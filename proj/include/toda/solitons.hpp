#pragma once

// Soliton-like solutions: the dressing with a single nonzero c_{i,I_i} and two
// nonzero d_{i,J_i}, d_{i,K_i} per pole pair. All z dependence collapses into
// the scalar functions E_{a,i}; the remaining matrices D~(J), D~(K) are
// constant.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "toda/dressing.hpp"
#include "toda/matrix.hpp"
#include "toda/system.hpp"

namespace toda {

struct SolitonData {
  int r = 0;
  std::vector<Complex> mu;
  std::vector<Complex> nu;
  std::vector<int> I;
  std::vector<int> J;
  std::vector<int> K;
  std::vector<ComplexMatrix> c_I;
  std::vector<ComplexMatrix> d_J;
  std::vector<ComplexMatrix> d_K;

  bool operator==(const SolitonData&) const = default;
};

enum class Selector { J, K };

/// Smallest admissible |1 - nu_i^-1 mu_j eps^{A_i + I_j}| in D~(A).
inline constexpr double kDenominatorTolerance = 1e-12;

inline Complex d_tilde_denominator(const TodaSystem& system, const SolitonData& data, Selector a, std::size_t i,
                                   std::size_t j) {
  const int ai = (a == Selector::J ? data.J : data.K)[i];
  return 1.0 - data.mu[j] / data.nu[i] * unit_root_pow(system.p, residue(ai + data.I[j], system.p));
}

inline void validate(const TodaSystem& system, const SolitonData& data) {
  if (data.r < 1) throw ValidationError("soliton data needs r >= 1");
  const auto r = static_cast<std::size_t>(data.r);
  auto sized = [r](std::size_t n, const char* name) {
    if (n != r) throw ValidationError(std::string(name) + " must have r = " + std::to_string(r) + " entries");
  };
  sized(data.mu.size(), "mu");
  sized(data.nu.size(), "nu");
  sized(data.I.size(), "I");
  sized(data.J.size(), "J");
  sized(data.K.size(), "K");
  sized(data.c_I.size(), "c_I");
  sized(data.d_J.size(), "d_J");
  sized(data.d_K.size(), "d_K");
  validate_poles(system.p, data.mu, data.nu);
  const auto ns = static_cast<std::size_t>(system.n_star);
  for (std::size_t i = 0; i < r; ++i) {
    const std::string tag = "[" + std::to_string(i + 1) + "]";
    for (auto [v, name] : {std::pair{data.I[i], "I"}, std::pair{data.J[i], "J"}, std::pair{data.K[i], "K"}}) {
      if (v < 1 || v > system.p) throw ValidationError(std::string(name) + tag + " must lie in 1..p");
    }
    if (data.J[i] == data.K[i]) throw ValidationError("J" + tag + " == K" + tag + " gives rho = 0 (static, degenerate)");
    for (auto* m : {&data.c_I[i], &data.d_J[i], &data.d_K[i]}) {
      if (m->rows() != ns || m->cols() != ns) throw ValidationError("soliton matrices" + tag + " must be n* x n*");
      if (!m->all_finite()) throw ValidationError("soliton matrices" + tag + " have non-finite entries");
    }
    if (LuDecomposition(data.c_I[i]).singular()) throw ValidationError("c_I" + tag + " is singular");
  }
  for (auto a : {Selector::J, Selector::K}) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < r; ++j) {
        if (std::abs(d_tilde_denominator(system, data, a, i, j)) <= kDenominatorTolerance) {
          throw ValidationError(std::string("D~(") + (a == Selector::J ? "J" : "K") + ") denominator vanishes (i=" +
                                std::to_string(i + 1) + ", j=" + std::to_string(j + 1) + ")");
        }
      }
    }
  }
}

/// Embeds soliton data into general dressing data.
inline DressingData to_dressing_data(const TodaSystem& system, const SolitonData& data) {
  validate(system, data);
  const auto ns = static_cast<std::size_t>(system.n_star);
  const auto p = static_cast<std::size_t>(system.p);
  DressingData d;
  d.r = data.r;
  d.mu = data.mu;
  d.nu = data.nu;
  d.c_init.assign(static_cast<std::size_t>(data.r), std::vector<ComplexMatrix>(p, ComplexMatrix(ns, ns)));
  d.d_init = d.c_init;
  for (std::size_t i = 0; i < static_cast<std::size_t>(data.r); ++i) {
    d.c_init[i][static_cast<std::size_t>(data.I[i] - 1)] = data.c_I[i];
    d.d_init[i][static_cast<std::size_t>(data.J[i] - 1)] = data.d_J[i];
    d.d_init[i][static_cast<std::size_t>(data.K[i] - 1)] = data.d_K[i];
  }
  return d;
}

struct SolitonParams {
  int rho = 0;
  Complex zeta;
  double kappa = 0.0;
};

inline std::vector<SolitonParams> derive_params(const TodaSystem& system, const SolitonData& data) {
  std::vector<SolitonParams> out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(data.r); ++i) {
    SolitonParams s;
    s.rho = data.K[i] - data.J[i];
    s.zeta = Complex(0.0, -1.0) * data.nu[i] * unit_root_pow(system.p, -0.5 * (data.K[i] + data.J[i]));
    s.kappa = 2.0 * std::sin(std::numbers::pi * s.rho / system.p);
    out.push_back(s);
  }
  return out;
}

/// E_{a,i} = eps^{a rho_i} exp(kappa_i (zeta_i^-1 z- + zeta_i z+)).
inline Complex eval_E(const TodaSystem& system, const SolitonParams& s, long alpha, LightCone z) {
  return unit_root_pow(system.p, residue(alpha * s.rho, system.p)) *
         std::exp(s.kappa * (z.minus / s.zeta + s.zeta * z.plus));
}

inline Complex eval_E(const TodaSystem& system, const SolitonData& data, long alpha, std::size_t i, LightCone z) {
  return eval_E(system, derive_params(system, data).at(i), alpha, z);
}

/// D~(A), block (i, j) = d_{A_i}^t c_{I_j} / (1 - nu_i^-1 mu_j eps^{A_i + I_j}).
inline ComplexMatrix build_D_tilde(const TodaSystem& system, const SolitonData& data, Selector a) {
  const auto r = static_cast<std::size_t>(data.r);
  const BlockLayout layout{r, r, static_cast<std::size_t>(system.n_star)};
  ComplexMatrix out(layout.rows(), layout.cols());
  const auto& d = a == Selector::J ? data.d_J : data.d_K;
  for (std::size_t i = 0; i < r; ++i) {
    const ComplexMatrix dt = d[i].transpose();
    for (std::size_t j = 0; j < r; ++j) {
      const Complex den = d_tilde_denominator(system, data, a, i, j);
      if (std::abs(den) <= kDenominatorTolerance) {
        throw ValidationError(std::string("D~(") + (a == Selector::J ? "J" : "K") + ") denominator vanishes (i=" +
                              std::to_string(i + 1) + ", j=" + std::to_string(j + 1) + ")");
      }
      block_set(out, layout, i, j, (dt * data.c_I[j]) * (1.0 / den));
    }
  }
  return out;
}

namespace detail {

/// Solves A X = rhs where A = B + diag(w) C row-wise (w_k the weight of row k).
/// Each row is scaled by the size of its terms before they cancel, so a
/// pivot below 1e3 eps of that scale marks A as singular even when A is 1x1.
inline ComplexMatrix weighted_solve(const ComplexMatrix& B, const ComplexMatrix& C, const std::vector<Complex>& w,
                                    const ComplexMatrix& rhs) {
  const std::size_t n = B.rows();
  ComplexMatrix A(n, n);
  ComplexMatrix b = rhs;
  for (std::size_t k = 0; k < n; ++k) {
    double size = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      A(k, j) = B(k, j) + w[k] * C(k, j);
      size = std::max(size, std::abs(B(k, j)) + std::abs(w[k]) * std::abs(C(k, j)));
    }
    if (!(size > 0.0) || !std::isfinite(size)) throw SingularMatrixError(k, 0.0, 0.0);
    const double scale = std::ldexp(1.0, -std::ilogb(size));
    for (std::size_t j = 0; j < n; ++j) A(k, j) *= scale;
    for (std::size_t j = 0; j < b.cols(); ++j) b(k, j) *= scale;
  }
  LuDecomposition lu(std::move(A));
  const double threshold = LuDecomposition::kPivotFactor * std::numeric_limits<double>::epsilon();
  if (lu.min_pivot() <= threshold) throw SingularMatrixError(lu.failing_pivot(), lu.min_pivot(), threshold);
  return lu.solve(b);
}

}  // namespace detail

/// Precomputed constant parts of a soliton solution.
struct SolitonModel {
  TodaSystem system;
  SolitonData data;
  std::vector<SolitonParams> params;
  ComplexMatrix DJ;
  ComplexMatrix DK;

  BlockLayout layout() const {
    const auto r = static_cast<std::size_t>(data.r);
    return {r, r, static_cast<std::size_t>(system.n_star)};
  }

  /// E_{a,i} repeated over the n* rows of block row i.
  std::vector<Complex> row_weights(long alpha, LightCone z) const {
    std::vector<Complex> w;
    for (const auto& s : params) w.insert(w.end(), static_cast<std::size_t>(system.n_star), eval_E(system, s, alpha, z));
    return w;
  }

  /// R~'_a^-1 rhs, with singular R~'_a reported.
  ComplexMatrix solve_R_prime(long alpha, LightCone z, const ComplexMatrix& rhs) const {
    return detail::weighted_solve(DJ, DK, row_weights(alpha, z), rhs);
  }

  /// R~'_a: block (i, j) = D~_ij(J) + E_{a,i} D~_ij(K).
  ComplexMatrix R_prime(long alpha, LightCone z) const {
    const auto r = static_cast<std::size_t>(data.r);
    const auto l = layout();
    ComplexMatrix out = DJ;
    for (std::size_t i = 0; i < r; ++i) {
      const Complex e = eval_E(system, params[i], alpha, z);
      for (std::size_t j = 0; j < r; ++j) block_add(out, l, i, j, block_get(DK, l, i, j) * e);
    }
    return out;
  }
};

inline std::shared_ptr<const SolitonModel> make_model(const TodaSystem& system, const SolitonData& data) {
  validate(system, data);
  auto m = std::make_shared<SolitonModel>();
  m->system = system;
  m->data = data;
  m->params = derive_params(system, data);
  m->DJ = build_D_tilde(system, data, Selector::J);
  m->DK = build_D_tilde(system, data, Selector::K);
  return m;
}

inline ComplexMatrix build_R_prime(const TodaSystem& system, const SolitonData& data, long alpha, LightCone z) {
  return make_model(system, data)->R_prime(alpha, z);
}

/// The diagonal phases relating R~_a to R~'_a:
///   R~_a = diag(nu_i^-a eps^{a J_i} e^{Z_{-J_i}(nu_i)}) R~'_a diag(mu_j^a eps^{a I_j} e^{-Z_{I_j}(mu_j)}).
struct PhaseFactors {
  ComplexMatrix left;
  ComplexMatrix right;
};

inline PhaseFactors phase_factors(const TodaSystem& system, const SolitonData& data, long alpha, LightCone z) {
  const auto r = static_cast<std::size_t>(data.r);
  std::vector<Complex> left(r), right(r);
  const auto ad = static_cast<double>(alpha);
  for (std::size_t i = 0; i < r; ++i) {
    left[i] = std::pow(data.nu[i], -ad) * unit_root_pow(system.p, residue(alpha * data.J[i], system.p)) *
              std::exp(eval_Z(system, -data.J[i], data.nu[i], z));
    right[i] = std::pow(data.mu[i], ad) * unit_root_pow(system.p, residue(alpha * data.I[i], system.p)) *
               std::exp(-eval_Z(system, data.I[i], data.mu[i], z));
  }
  const auto ns = static_cast<std::size_t>(system.n_star);
  return {scalar_block_diagonal(left, ns), scalar_block_diagonal(right, ns)};
}

/// G_a = I - sum_ij c_{I_i} (R~'_a^-1)_ij (d_{J_j}^t + E_{a,j} d_{K_j}^t).
inline GammaField gamma_soliton_e28(const TodaSystem& system, const SolitonData& data) {
  auto m = make_model(system, data);
  return {system.p, system.n_star, [m](int alpha, LightCone z) {
            const auto r = static_cast<std::size_t>(m->data.r);
            const auto ns = static_cast<std::size_t>(m->system.n_star);
            ComplexMatrix row(ns, ns * r);
            ComplexMatrix col(ns * r, ns);
            const BlockLayout rl{1, r, ns};
            const BlockLayout cl{r, 1, ns};
            for (std::size_t j = 0; j < r; ++j) {
              block_set(row, rl, 0, j, m->data.c_I[j]);
              const Complex e = eval_E(m->system, m->params[j], alpha, z);
              block_set(col, cl, j, 0, m->data.d_J[j].transpose() + m->data.d_K[j].transpose() * e);
            }
            return ComplexMatrix::identity(ns) - row * m->solve_R_prime(alpha, z, col);
          }};
}

/// One-soliton solution in its three equivalent forms.
///
/// With H = D~(J)^-1 D~(K) one has R~'_a = D~(J) T_a and T_a = I + E_a H, so
/// R~'_a^-1 R~'_{a+1} = T_a^-1 T_{a+1} identically.
struct OneSoliton {
  ComplexMatrix H;
  std::function<ComplexMatrix(long, LightCone)> T;
  GammaField field;        // T_a^-1 T_{a+1}
  GammaField ratio_field;  // R~'_a^-1 R~'_{a+1}
};

inline OneSoliton gamma_one_soliton(const TodaSystem& system, const SolitonData& data) {
  if (data.r != 1) throw ValidationError("one-soliton form needs r = 1, got r = " + std::to_string(data.r));
  auto m = make_model(system, data);
  LuDecomposition dj(m->DJ);
  if (dj.singular()) throw ValidationError("D~(J) is singular; H is undefined");
  OneSoliton out;
  out.H = dj.solve(m->DK);
  auto H = std::make_shared<const ComplexMatrix>(out.H);
  const auto ns = static_cast<std::size_t>(system.n_star);
  out.T = [m, H, ns](long alpha, LightCone z) {
    return ComplexMatrix::identity(ns) + *H * eval_E(m->system, m->params[0], alpha, z);
  };
  auto T = out.T;
  out.field = {system.p, system.n_star,
               [m, H, T, ns](int alpha, LightCone z) {
                 const std::vector<Complex> w(ns, eval_E(m->system, m->params[0], alpha, z));
                 return detail::weighted_solve(ComplexMatrix::identity(ns), *H, w, T(alpha + 1, z));
               }};
  out.ratio_field = {system.p, system.n_star, [m](int alpha, LightCone z) {
                       return m->solve_R_prime(alpha, z, m->R_prime(alpha + 1, z));
                     }};
  return out;
}

/// The two matrix factors of the multi-soliton product,
///   left  = c_I^T R~'_a^-1 N_J^-1        (n* x n* r),
///   right = R~'_{a+1} M_I c_I^-1          (n* r x n*).
struct TauFactors {
  ComplexMatrix left;
  ComplexMatrix right;
};

inline TauFactors tau_factors(const SolitonModel& m, long alpha, LightCone z) {
  const auto r = static_cast<std::size_t>(m.data.r);
  const auto ns = static_cast<std::size_t>(m.system.n_star);
  ComplexMatrix row(ns, ns * r);
  ComplexMatrix col(ns * r, ns);
  const BlockLayout rl{1, r, ns};
  const BlockLayout cl{r, 1, ns};
  std::vector<Complex> n_inv(r), m_diag(r);
  for (std::size_t i = 0; i < r; ++i) {
    block_set(row, rl, 0, i, m.data.c_I[i]);
    block_set(col, cl, i, 0, inverse(m.data.c_I[i]));
    n_inv[i] = unit_root_pow(m.system.p, m.data.J[i]) / m.data.nu[i];
    m_diag[i] = m.data.mu[i] * unit_root_pow(m.system.p, m.data.I[i]);
  }
  TauFactors t;
  t.left = row * m.solve_R_prime(alpha, z, ComplexMatrix::identity(ns * r)) * scalar_block_diagonal(n_inv, ns);
  t.right = m.R_prime(alpha + 1, z) * scalar_block_diagonal(m_diag, ns) * col;
  return t;
}

inline TauFactors tau_factors(const TodaSystem& system, const SolitonData& data, long alpha, LightCone z) {
  return tau_factors(*make_model(system, data), alpha, z);
}

/// G_a = c_I^T R~'_a^-1 N_J^-1 R~'_{a+1} M_I c_I^-1, times 1/r when normalized.
inline GammaField gamma_multi_soliton(const TodaSystem& system, const SolitonData& data, bool normalize) {
  auto m = make_model(system, data);
  const double scale = normalize ? 1.0 / data.r : 1.0;
  return {system.p, system.n_star, [m, scale](int alpha, LightCone z) {
            const auto t = tau_factors(*m, alpha, z);
            return (t.left * t.right) * scale;
          }};
}

/// Data for the compact-reality condition of a single soliton.
struct RealityCheckData {
  ComplexMatrix H;
  ComplexMatrix H_prime;
  Complex exp_delta;
  Complex delta;
};

struct RealityReport {
  RealityCheckData data;
  double condition_norm = 0.0;       // ||H^dagger - eps^rho H||_max
  double grid_unitarity_norm = 0.0;  // max ||G^dagger G - I||_max over the grid
  double pairing_violation = 0.0;    // |conj(mu) - nu|
  bool pairing_ok = true;
  std::size_t points_tested = 0;
  std::size_t points_singular = 0;
};

/// exp(delta) = (1 - mu nu^-1 eps^{I+J}) / (1 - mu nu^-1 eps^{I+K}).
inline Complex reality_exp_delta(const TodaSystem& system, const SolitonData& data) {
  const Complex q = data.mu[0] / data.nu[0];
  return (1.0 - q * unit_root_pow(system.p, residue(data.I[0] + data.J[0], system.p))) /
         (1.0 - q * unit_root_pow(system.p, residue(data.I[0] + data.K[0], system.p)));
}

/// Sample points (x, t) of the default reality grid: a 9 x 9 euclidean grid on [-2, 2]^2.
inline std::vector<LightCone> default_reality_grid() {
  std::vector<LightCone> pts;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) pts.push_back(light_cone(CoordinateMode::euclidean, -2.0 + 0.5 * i, -2.0 + 0.5 * j));
  }
  return pts;
}

inline RealityReport check_reality_compact(const TodaSystem& system, const SolitonData& data,
                                           const std::vector<LightCone>& grid = default_reality_grid()) {
  if (data.r != 1) {
    throw ValidationError("compact reality check is only available for r = 1, got r = " + std::to_string(data.r));
  }
  const auto one = gamma_one_soliton(system, data);
  RealityReport rep;
  rep.data.H = one.H;
  rep.data.exp_delta = reality_exp_delta(system, data);
  rep.data.delta = std::log(rep.data.exp_delta);
  rep.data.H_prime = one.H * (1.0 / rep.data.exp_delta);
  const auto rho = data.K[0] - data.J[0];
  rep.condition_norm = max_abs_diff(one.H.adjoint(), one.H * unit_root_pow(system.p, rho));
  rep.pairing_violation = std::abs(std::conj(data.mu[0]) - data.nu[0]);
  rep.pairing_ok = rep.pairing_violation <= 1e-9 * (1.0 + std::abs(data.nu[0]));
  const auto I = ComplexMatrix::identity(static_cast<std::size_t>(system.n_star));
  for (const auto& z : grid) {
    for (int a = 1; a <= system.p; ++a) {
      const auto g = one.field.try_evaluate(a, z);
      if (!g) {
        ++rep.points_singular;
        continue;
      }
      ++rep.points_tested;
      rep.grid_unitarity_norm = std::max(rep.grid_unitarity_norm, max_abs_diff(g->adjoint() * *g, I));
    }
  }
  return rep;
}

/// Builds single-soliton data whose H equals eps^{-rho/2} A for a Hermitian A,
/// with mu = e^{i theta} and nu = conj(mu). The d_K matrix is solved from
///   d_K^t = exp(-delta) d_J^t c_I H c_I^-1.
inline SolitonData make_compact_one_soliton(const TodaSystem& system, double theta, int I, int J, int K,
                                            const ComplexMatrix& A, const ComplexMatrix& c_I,
                                            const ComplexMatrix& d_J) {
  if (max_abs_diff(A, A.adjoint()) > 1e-14 * (1.0 + A.max_abs())) throw ValidationError("A must be Hermitian");
  SolitonData d;
  d.r = 1;
  d.mu = {std::polar(1.0, theta)};
  d.nu = {std::conj(d.mu[0])};
  d.I = {I};
  d.J = {J};
  d.K = {K};
  d.c_I = {c_I};
  d.d_J = {d_J};
  d.d_K = {d_J};
  const Complex exp_delta = reality_exp_delta(system, d);
  const ComplexMatrix H = A * unit_root_pow(system.p, -0.5 * (K - J));
  d.d_K = {(d_J.transpose() * c_I * H * inverse(c_I) * (1.0 / exp_delta)).transpose()};
  return d;
}

/// Travelling-wave form of the exponent Z_i(zeta) in physical coordinates.
struct Kinematics {
  CoordinateMode mode = CoordinateMode::euclidean;
  double v = 0.0;
  double kappa = 0.0;
  double sign = 1.0;           // Z = sign 2 kappa (x -+ v t) / sqrt(1 +- v^2)
  double profile_deviation = 0.0;
  std::string profile;
};

/// Z_i(zeta) along (x, t) as a moving profile.
///   euclidean (|zeta| = 1): Z = s 2 kappa (x - v t) / sqrt(1 + v^2), v = Im zeta / Re zeta
///   lorentzian (zeta real): Z = s 2 kappa (x + v t) / sqrt(1 - v^2), v = (zeta - 1/zeta) / (zeta + 1/zeta)
inline Kinematics soliton_kinematics(const TodaSystem& system, const SolitonData& data, std::size_t i,
                                     CoordinateMode mode) {
  const auto params = derive_params(system, data);
  const SolitonParams& s = params.at(i);
  const Complex zeta = s.zeta;
  Kinematics k;
  k.mode = mode;
  k.kappa = s.kappa;
  switch (mode) {
    case CoordinateMode::euclidean: {
      if (std::abs(std::abs(zeta) - 1.0) > 1e-9) {
        throw ValidationError("euclidean kinematics needs |zeta| = 1, got |zeta| = " + std::to_string(std::abs(zeta)));
      }
      if (zeta.real() == 0.0) throw ValidationError("euclidean kinematics needs Re zeta != 0");
      k.v = zeta.imag() / zeta.real();
      k.sign = zeta.real() > 0 ? 1.0 : -1.0;
      k.profile = "Z = s * 2 kappa (x - v t) / sqrt(1 + v^2)";
      break;
    }
    case CoordinateMode::lorentzian: {
      if (std::abs(zeta.imag()) > 1e-9) {
        throw ValidationError("lorentzian kinematics needs real zeta, got Im zeta = " + std::to_string(zeta.imag()));
      }
      const double zr = zeta.real();
      k.v = (zr - 1.0 / zr) / (zr + 1.0 / zr);
      k.sign = zr > 0 ? 1.0 : -1.0;
      k.profile = "Z = s * 2 kappa (x + v t) / sqrt(1 - v^2)";
      break;
    }
    case CoordinateMode::independent:
      throw ValidationError("kinematics needs a euclidean or lorentzian coordinate mode");
  }
  for (double x : {-1.5, -0.25, 0.0, 0.7, 2.0}) {
    for (double t : {-1.0, 0.0, 0.4, 1.3}) {
      const LightCone z = light_cone(mode, x, t);
      const Complex Z = s.kappa * (z.minus / zeta + zeta * z.plus);
      const double profile = mode == CoordinateMode::euclidean
                                 ? k.sign * 2.0 * k.kappa * (x - k.v * t) / std::sqrt(1.0 + k.v * k.v)
                                 : k.sign * 2.0 * k.kappa * (x + k.v * t) / std::sqrt(1.0 - k.v * k.v);
      k.profile_deviation = std::max(k.profile_deviation, std::abs(Z - profile) / (1.0 + std::abs(profile)));
    }
  }
  return k;
}

}  // namespace toda
