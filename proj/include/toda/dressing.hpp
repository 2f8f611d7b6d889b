#pragma once

// Rational dressing of the vacuum solution.
//
// The wave function is taken rational in the spectral parameter,
//
//   psi(l)    = I + sum_i sum_k l / (l - eps^k mu_i) h^k P_i h^-k,
//   psi^-1(l) = I + sum_i sum_k l / (l - eps^k nu_i) h^k Q_i h^-k,
//
// with rank-n* residues P_i = u_i w_i^t, Q_i = x_i y_i^t. The n x n* factors
// u_i, y_i solve linear first-order systems whose general solution is a
// discrete Fourier sum of exponentials over initial matrices c_{i,a}, d_{i,a}.
// Everything else (the R matrices, the blocks G_a, P_i, Q_i) is assembled
// from u and y.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "toda/matrix.hpp"
#include "toda/system.hpp"

namespace toda {

/// Pole positions and initial matrices of a dressing.
///
/// `c_init[i][a-1]` and `d_init[i][a-1]` hold c_{i,a} and d_{i,a} for
/// a = 1..p; each is n* x n*.
struct DressingData {
  int r = 0;
  std::vector<Complex> mu;
  std::vector<Complex> nu;
  std::vector<std::vector<ComplexMatrix>> c_init;
  std::vector<std::vector<ComplexMatrix>> d_init;

  bool operator==(const DressingData&) const = default;
};

/// Relative tolerance for distinguishing p-th powers of pole positions.
inline constexpr double kPoleCollisionTolerance = 1e-9;

namespace detail {

inline bool powers_collide(Complex a, Complex b, int p) {
  const Complex ap = std::pow(a, p);
  const Complex bp = std::pow(b, p);
  return std::abs(ap - bp) <= kPoleCollisionTolerance * (std::abs(ap) + std::abs(bp));
}

inline bool finite(Complex v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); }

}  // namespace detail

/// Checks the pole invariants (nonzero, pairwise distinct p-th powers, and
/// nu_i^p != mu_j^p). Indices in messages are 1-based.
inline void validate_poles(int p, const std::vector<Complex>& mu, const std::vector<Complex>& nu) {
  if (mu.size() != nu.size()) throw ValidationError("mu and nu must have the same length");
  const std::size_t r = mu.size();
  for (std::size_t i = 0; i < r; ++i) {
    const std::string tag = std::to_string(i + 1);
    if (!detail::finite(mu[i]) || !detail::finite(nu[i])) throw ValidationError("pole " + tag + " is not finite");
    if (mu[i] == Complex{}) throw ValidationError("mu_" + tag + " must be nonzero");
    if (nu[i] == Complex{}) throw ValidationError("nu_" + tag + " must be nonzero");
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i + 1; j < r; ++j) {
      const std::string pair = " (i=" + std::to_string(i + 1) + ", j=" + std::to_string(j + 1) + ")";
      if (detail::powers_collide(mu[i], mu[j], p)) throw ValidationError("mu_i^p == mu_j^p" + pair);
      if (detail::powers_collide(nu[i], nu[j], p)) throw ValidationError("nu_i^p == nu_j^p" + pair);
    }
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      if (detail::powers_collide(nu[i], mu[j], p)) {
        throw ValidationError("pole collision nu_i^p == mu_j^p (i=" + std::to_string(i + 1) +
                              ", j=" + std::to_string(j + 1) + ")");
      }
    }
  }
}

inline void validate(const TodaSystem& system, const DressingData& data) {
  if (data.r < 1) throw ValidationError("dressing needs r >= 1 pole pairs");
  const auto r = static_cast<std::size_t>(data.r);
  if (data.mu.size() != r || data.nu.size() != r) throw ValidationError("mu and nu must have r entries");
  validate_poles(system.p, data.mu, data.nu);
  const auto ns = static_cast<std::size_t>(system.n_star);
  auto check_blocks = [&](const std::vector<std::vector<ComplexMatrix>>& blocks, const char* name) {
    if (blocks.size() != r) throw ValidationError(std::string(name) + " must have r rows");
    for (std::size_t i = 0; i < r; ++i) {
      if (blocks[i].size() != static_cast<std::size_t>(system.p)) {
        throw ValidationError(std::string(name) + "[" + std::to_string(i + 1) + "] must have p matrices");
      }
      for (const auto& m : blocks[i]) {
        if (m.rows() != ns || m.cols() != ns) throw ValidationError(std::string(name) + " matrices must be n* x n*");
        if (!m.all_finite()) throw ValidationError(std::string(name) + " has non-finite entries");
      }
    }
  };
  check_blocks(data.c_init, "c_init");
  check_blocks(data.d_init, "d_init");
}

/// Z_a(mu) = mu^-1 eps^-a z- + mu eps^a z+, for any integer a.
inline Complex eval_Z(const TodaSystem& system, long alpha, Complex mu, LightCone z) {
  if (mu == Complex{}) throw ValidationError("Z_alpha(mu) needs mu != 0");
  const Complex e = unit_root_pow(system.p, static_cast<double>(residue(alpha, system.p)));
  return z.minus / (mu * e) + mu * e * z.plus;
}

/// A block together with its analytic d- and d+ derivatives.
struct BlockJet {
  ComplexMatrix value;
  ComplexMatrix minus;
  ComplexMatrix plus;
};

namespace detail {

inline bool is_zero(const ComplexMatrix& m) {
  return std::all_of(m.entries().begin(), m.entries().end(), [](const Complex& v) { return v == Complex{}; });
}

// sum_a eps^{beta a} exp(sign * Z_{sign_a * a}(pole)) init[a], for beta = 1..p,
// with derivative factors dZ/dz- and dZ/dz+ of the exponent.
inline std::vector<BlockJet> fourier_exponential(const TodaSystem& system, const std::vector<ComplexMatrix>& init,
                                                 Complex pole, LightCone z, bool growing) {
  const int p = system.p;
  const auto ns = static_cast<std::size_t>(system.n_star);
  std::vector<BlockJet> out(static_cast<std::size_t>(p),
                            BlockJet{ComplexMatrix(ns, ns), ComplexMatrix(ns, ns), ComplexMatrix(ns, ns)});
  for (int a = 1; a <= p; ++a) {
    const ComplexMatrix& c = init[static_cast<std::size_t>(a - 1)];
    if (is_zero(c)) continue;
    // u: exp(-Z_a(mu)), exponent -(mu^-1 eps^-a z- + mu eps^a z+)
    // y: exp(+Z_-a(nu)), exponent +(nu^-1 eps^a z- + nu eps^-a z+)
    const Complex ea = unit_root_pow(p, a);
    Complex dm;
    Complex dp;
    if (growing) {
      dm = ea / pole;
      dp = pole / ea;
    } else {
      dm = -1.0 / (pole * ea);
      dp = -pole * ea;
    }
    const Complex weight = std::exp(dm * z.minus + dp * z.plus);
    for (int beta = 1; beta <= p; ++beta) {
      const Complex phase = unit_root_pow(p, static_cast<double>(residue(static_cast<long>(beta) * a, p))) * weight;
      auto& jet = out[static_cast<std::size_t>(beta - 1)];
      for (std::size_t k = 0; k < ns * ns; ++k) {
        const Complex v = phase * c.entries()[k];
        jet.value.entries()[k] += v;
        jet.minus.entries()[k] += dm * v;
        jet.plus.entries()[k] += dp * v;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Blocks u_{i,beta}, beta = 1..p (index beta-1), with analytic derivatives.
inline std::vector<BlockJet> eval_u_jet(const TodaSystem& system, const DressingData& data, std::size_t i,
                                        LightCone z) {
  return detail::fourier_exponential(system, data.c_init.at(i), data.mu.at(i), z, false);
}

/// Blocks y_{i,beta}, beta = 1..p (index beta-1), with analytic derivatives.
inline std::vector<BlockJet> eval_y_jet(const TodaSystem& system, const DressingData& data, std::size_t i,
                                        LightCone z) {
  return detail::fourier_exponential(system, data.d_init.at(i), data.nu.at(i), z, true);
}

namespace detail {
inline std::vector<ComplexMatrix> values_of(std::vector<BlockJet> jets) {
  std::vector<ComplexMatrix> out;
  out.reserve(jets.size());
  for (auto& j : jets) out.push_back(std::move(j.value));
  return out;
}
}  // namespace detail

inline std::vector<ComplexMatrix> eval_u(const TodaSystem& system, const DressingData& data, std::size_t i,
                                         LightCone z) {
  return detail::values_of(eval_u_jet(system, data, i, z));
}

inline std::vector<ComplexMatrix> eval_y(const TodaSystem& system, const DressingData& data, std::size_t i,
                                         LightCone z) {
  return detail::values_of(eval_y_jet(system, data, i, z));
}

struct TildeBlocks {
  ComplexMatrix u;    // u_{i,a} mu_i^a
  ComplexMatrix y_t;  // (y_{i,a} nu_i^-a)^t
};

/// Rescaled blocks for any integer alpha (the scalar factors use alpha as
/// given; the u, y blocks themselves are p-periodic).
inline TildeBlocks tilde_blocks(const TodaSystem& system, const DressingData& data, std::size_t i, long alpha,
                                LightCone z) {
  const auto b = static_cast<std::size_t>(reduce_index(alpha, system.p) - 1);
  const auto ad = static_cast<double>(alpha);
  TildeBlocks t;
  t.u = eval_u(system, data, i, z)[b] * std::pow(data.mu[i], ad);
  t.y_t = (eval_y(system, data, i, z)[b] * std::pow(data.nu[i], -ad)).transpose();
  return t;
}

struct RMatrix {
  long alpha = 1;
  ComplexMatrix value;
  bool tilde = false;
};

namespace detail {
inline BlockLayout pole_layout(const TodaSystem& system, int r) {
  return {static_cast<std::size_t>(r), static_cast<std::size_t>(r), static_cast<std::size_t>(system.n_star)};
}
}  // namespace detail

/// R_alpha (tilde = false) or R~_alpha (tilde = true), an (n* r) x (n* r)
/// matrix of n* x n* blocks indexed (i, j) = (nu-pole, mu-pole).
///
/// The tilded matrix uses the closed exponential-sum form, valid for every
/// integer alpha; the plain one uses the |beta - alpha|_p weighted sum over
/// u and y and is p-periodic in alpha.
inline RMatrix build_R(const TodaSystem& system, const DressingData& data, long alpha, LightCone z, bool tilde) {
  validate_poles(system.p, data.mu, data.nu);
  const int p = system.p;
  const auto r = static_cast<std::size_t>(data.r);
  const auto layout = detail::pole_layout(system, data.r);
  RMatrix out{alpha, ComplexMatrix(layout.rows(), layout.cols()), tilde};
  const auto ad = static_cast<double>(alpha);

  if (tilde) {
    for (std::size_t i = 0; i < r; ++i) {
      const Complex nu = data.nu[i];
      for (std::size_t j = 0; j < r; ++j) {
        const Complex mu = data.mu[j];
        const Complex scale = std::pow(mu / nu, ad);
        for (int beta = 1; beta <= p; ++beta) {
          const ComplexMatrix& d = data.d_init[i][static_cast<std::size_t>(beta - 1)];
          if (detail::is_zero(d)) continue;
          const ComplexMatrix dt = d.transpose();
          for (int delta = 1; delta <= p; ++delta) {
            const ComplexMatrix& c = data.c_init[j][static_cast<std::size_t>(delta - 1)];
            if (detail::is_zero(c)) continue;
            const Complex e_sum = unit_root_pow(p, residue(beta + delta, p));
            const Complex coeff = std::exp(eval_Z(system, -beta, nu, z) - eval_Z(system, delta, mu, z)) *
                                  unit_root_pow(p, static_cast<double>(residue(alpha * (beta + delta), p))) /
                                  (1.0 - mu / nu * e_sum) * scale;
            block_add(out.value, layout, i, j, (dt * c) * coeff);
          }
        }
      }
    }
    return out;
  }

  std::vector<std::vector<ComplexMatrix>> u(r), y(r);
  for (std::size_t k = 0; k < r; ++k) {
    u[k] = eval_u(system, data, k, z);
    y[k] = eval_y(system, data, k, z);
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const Complex nu = data.nu[i];
      const Complex mu = data.mu[j];
      const auto ns = static_cast<std::size_t>(system.n_star);
      ComplexMatrix acc(ns, ns);
      for (int beta = 1; beta <= p; ++beta) {
        const int m = residue(beta - alpha, p);
        const auto b = static_cast<std::size_t>(beta - 1);
        acc += (y[i][b].transpose() * u[j][b]) * (std::pow(nu, p - m) * std::pow(mu, m));
      }
      block_set(out.value, layout, i, j, acc * (1.0 / (std::pow(nu, p) - std::pow(mu, p))));
    }
  }
  return out;
}

/// R~_alpha from the partition form
///   (mu_j^p sum_{beta<alpha} + nu_i^p sum_{beta>=alpha}) y~^t_{i,beta} u~_{j,beta} / (nu_i^p - mu_j^p),
/// valid for alpha in 1..p+1. Kept as an independent route for tests.
inline ComplexMatrix build_R_tilde_partition(const TodaSystem& system, const DressingData& data, long alpha,
                                             LightCone z) {
  if (alpha < 1 || alpha > system.p + 1) throw ValidationError("partition form needs alpha in 1..p+1");
  validate_poles(system.p, data.mu, data.nu);
  const auto r = static_cast<std::size_t>(data.r);
  const auto layout = detail::pole_layout(system, data.r);
  ComplexMatrix out(layout.rows(), layout.cols());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const Complex nup = std::pow(data.nu[i], system.p);
      const Complex mup = std::pow(data.mu[j], system.p);
      const auto ns = static_cast<std::size_t>(system.n_star);
      ComplexMatrix acc(ns, ns);
      for (int beta = 1; beta <= system.p; ++beta) {
        const auto ti = tilde_blocks(system, data, i, beta, z);
        const auto tj = tilde_blocks(system, data, j, beta, z);
        acc += (ti.y_t * tj.u) * (beta < alpha ? mup : nup);
      }
      block_set(out, layout, i, j, acc * (1.0 / (nup - mup)));
    }
  }
  return out;
}

namespace detail {

// Row block (u~_{1,a} ... u~_{r,a}) and column block (y~^t_{1,a}; ...; y~^t_{r,a}).
inline std::pair<ComplexMatrix, ComplexMatrix> tilde_strips(const TodaSystem& system, const DressingData& data,
                                                            long alpha, LightCone z) {
  const auto r = static_cast<std::size_t>(data.r);
  const auto ns = static_cast<std::size_t>(system.n_star);
  ComplexMatrix row(ns, ns * r);
  ComplexMatrix col(ns * r, ns);
  const BlockLayout row_layout{1, r, ns};
  const BlockLayout col_layout{r, 1, ns};
  for (std::size_t k = 0; k < r; ++k) {
    const auto t = tilde_blocks(system, data, k, alpha, z);
    block_set(row, row_layout, 0, k, t.u);
    block_set(col, col_layout, k, 0, t.y_t);
  }
  return {row, col};
}


// row R^-1 col with R equilibrated by power-of-two row and column scales
// first; the exponential factors in R~ otherwise spread its rows and columns
// over many orders of magnitude.
inline ComplexMatrix sandwich_solve(const ComplexMatrix& row, ComplexMatrix R, const ComplexMatrix& col) {
  const std::size_t n = R.rows();
  auto pow2_scale = [](double m) { return m > 0.0 && std::isfinite(m) ? std::ldexp(1.0, -std::ilogb(m)) : 1.0; };
  std::vector<double> rs(n), cs(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < n; ++j) m = std::max(m, std::abs(R(i, j)));
    rs[i] = pow2_scale(m);
    for (std::size_t j = 0; j < n; ++j) R(i, j) *= rs[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(R(i, j)));
    cs[j] = pow2_scale(m);
    for (std::size_t i = 0; i < n; ++i) R(i, j) *= cs[j];
  }
  ComplexMatrix c = col;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c.cols(); ++k) c(i, k) *= rs[i];
  }
  ComplexMatrix r = row;
  for (std::size_t k = 0; k < r.rows(); ++k) {
    for (std::size_t j = 0; j < n; ++j) r(k, j) *= cs[j];
  }
  return r * LuDecomposition(std::move(R)).solve(c);
}

}  // namespace detail

/// G_a = I - sum_{ij} u~_{i,a} (R~_a^-1)_{ij} y~^t_{j,a}.
inline GammaField gamma_dressing(const TodaSystem& system, const DressingData& data) {
  validate(system, data);
  auto sys = std::make_shared<const TodaSystem>(system);
  auto dat = std::make_shared<const DressingData>(data);
  return {system.p, system.n_star, [sys, dat](int alpha, LightCone z) {
            const auto [row, col] = detail::tilde_strips(*sys, *dat, alpha, z);
            const auto R = build_R(*sys, *dat, alpha, z, true);
            return ComplexMatrix::identity(static_cast<std::size_t>(sys->n_star)) -
                   detail::sandwich_solve(row, R.value, col);
          }};
}

/// G_a^-1 = I + sum_{ij} u~_{i,a} (R~_{a+1}^-1)_{ij} y~^t_{j,a}, with a in 1..p
/// and R~ taken at the unreduced index a+1.
inline GammaField gamma_inv_dressing(const TodaSystem& system, const DressingData& data) {
  validate(system, data);
  auto sys = std::make_shared<const TodaSystem>(system);
  auto dat = std::make_shared<const DressingData>(data);
  return {system.p, system.n_star, [sys, dat](int alpha, LightCone z) {
            const auto [row, col] = detail::tilde_strips(*sys, *dat, alpha, z);
            const auto R = build_R(*sys, *dat, alpha + 1, z, true);
            return ComplexMatrix::identity(static_cast<std::size_t>(sys->n_star)) +
                   detail::sandwich_solve(row, R.value, col);
          }};
}

/// All residue matrices P_i and Q_i at a point, with analytic derivatives.
struct ResidueMatrices {
  std::vector<BlockJet> P;
  std::vector<BlockJet> Q;
};

namespace detail {

struct MatrixJet {
  ComplexMatrix value, minus, plus;
};

inline MatrixJet product(const MatrixJet& a, const MatrixJet& b) {
  return {a.value * b.value, a.minus * b.value + a.value * b.minus, a.plus * b.value + a.value * b.plus};
}

inline MatrixJet inverse_jet(const MatrixJet& a, long alpha, LightCone z) {
  LuDecomposition lu(a.value);
  if (lu.singular()) {
    throw SingularFieldError(static_cast<int>(alpha), z.plus, z.minus,
                             "R_" + std::to_string(alpha) + " is singular (pivot " +
                                 std::to_string(lu.failing_pivot()) + ")");
  }
  MatrixJet out;
  out.value = lu.inverse();
  out.minus = -(out.value * a.minus * out.value);
  out.plus = -(out.value * a.plus * out.value);
  return out;
}

}  // namespace detail

/// Builds every P_i and Q_i (n x n) together with their d- and d+ derivatives
/// obtained by differentiating the exponential factors exactly.
inline ResidueMatrices build_residues(const TodaSystem& system, const DressingData& data, LightCone z) {
  validate(system, data);
  const int p = system.p;
  const auto r = static_cast<std::size_t>(data.r);
  const auto ns = static_cast<std::size_t>(system.n_star);
  const auto n = static_cast<std::size_t>(system.n());
  const auto pl = detail::pole_layout(system, data.r);
  const BlockLayout nl = system.layout();

  std::vector<std::vector<BlockJet>> u(r), y(r);
  for (std::size_t k = 0; k < r; ++k) {
    u[k] = eval_u_jet(system, data, k, z);
    y[k] = eval_y_jet(system, data, k, z);
  }

  // Plain R_beta for beta = 1..p and their inverses.
  std::vector<detail::MatrixJet> rinv(static_cast<std::size_t>(p));
  for (int beta = 1; beta <= p; ++beta) {
    detail::MatrixJet R{ComplexMatrix(pl.rows(), pl.cols()), ComplexMatrix(pl.rows(), pl.cols()),
                        ComplexMatrix(pl.rows(), pl.cols())};
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < r; ++j) {
        const Complex nu = data.nu[i];
        const Complex mu = data.mu[j];
        const Complex denom = 1.0 / (std::pow(nu, p) - std::pow(mu, p));
        for (int b = 1; b <= p; ++b) {
          const int m = residue(b - beta, p);
          const Complex w = std::pow(nu, p - m) * std::pow(mu, m) * denom;
          const auto& yb = y[i][static_cast<std::size_t>(b - 1)];
          const auto& ub = u[j][static_cast<std::size_t>(b - 1)];
          const ComplexMatrix yt = yb.value.transpose();
          block_add(R.value, pl, i, j, (yt * ub.value) * w);
          block_add(R.minus, pl, i, j, (yb.minus.transpose() * ub.value + yt * ub.minus) * w);
          block_add(R.plus, pl, i, j, (yb.plus.transpose() * ub.value + yt * ub.plus) * w);
        }
      }
    }
    rinv[static_cast<std::size_t>(beta - 1)] = detail::inverse_jet(R, beta, z);
  }

  ResidueMatrices out;
  const BlockJet zero_nn{ComplexMatrix(n, n), ComplexMatrix(n, n), ComplexMatrix(n, n)};
  out.P.assign(r, zero_nn);
  out.Q.assign(r, zero_nn);
  const BlockLayout col_layout{r, 1, ns};
  const BlockLayout row_layout{1, r, ns};

  // P_i: block (a, b) = -(1/p) u_{i,a} [R_b^-1 (y^t_{1,b}; ...; y^t_{r,b})]_i
  for (int b = 1; b <= p; ++b) {
    const auto bi = static_cast<std::size_t>(b - 1);
    detail::MatrixJet ystack{ComplexMatrix(ns * r, ns), ComplexMatrix(ns * r, ns), ComplexMatrix(ns * r, ns)};
    for (std::size_t j = 0; j < r; ++j) {
      block_set(ystack.value, col_layout, j, 0, y[j][bi].value.transpose());
      block_set(ystack.minus, col_layout, j, 0, y[j][bi].minus.transpose());
      block_set(ystack.plus, col_layout, j, 0, y[j][bi].plus.transpose());
    }
    const auto cols = detail::product(rinv[bi], ystack);
    for (std::size_t i = 0; i < r; ++i) {
      const detail::MatrixJet ci{block_get(cols.value, col_layout, i, 0), block_get(cols.minus, col_layout, i, 0),
                                 block_get(cols.plus, col_layout, i, 0)};
      for (int a = 1; a <= p; ++a) {
        const auto& ua = u[i][static_cast<std::size_t>(a - 1)];
        const auto blk = detail::product({ua.value, ua.minus, ua.plus}, ci);
        const Complex s = -1.0 / p;
        block_set(out.P[i].value, nl, static_cast<std::size_t>(a - 1), bi, blk.value * s);
        block_set(out.P[i].minus, nl, static_cast<std::size_t>(a - 1), bi, blk.minus * s);
        block_set(out.P[i].plus, nl, static_cast<std::size_t>(a - 1), bi, blk.plus * s);
      }
    }
  }

  // Q_i: block (a, b) = (1/p) [(u_{1,a}/mu_1 ... u_{r,a}/mu_r) R_{a+1}^-1]_i nu_i y^t_{i,b}
  for (int a = 1; a <= p; ++a) {
    const auto ai = static_cast<std::size_t>(a - 1);
    detail::MatrixJet ustrip{ComplexMatrix(ns, ns * r), ComplexMatrix(ns, ns * r), ComplexMatrix(ns, ns * r)};
    for (std::size_t j = 0; j < r; ++j) {
      const Complex s = 1.0 / data.mu[j];
      block_set(ustrip.value, row_layout, 0, j, u[j][ai].value * s);
      block_set(ustrip.minus, row_layout, 0, j, u[j][ai].minus * s);
      block_set(ustrip.plus, row_layout, 0, j, u[j][ai].plus * s);
    }
    const auto rows = detail::product(ustrip, rinv[static_cast<std::size_t>(a % p)]);
    for (std::size_t i = 0; i < r; ++i) {
      const detail::MatrixJet ri{block_get(rows.value, row_layout, 0, i), block_get(rows.minus, row_layout, 0, i),
                                 block_get(rows.plus, row_layout, 0, i)};
      for (int b = 1; b <= p; ++b) {
        const auto& yb = y[i][static_cast<std::size_t>(b - 1)];
        const auto blk =
            detail::product(ri, {yb.value.transpose(), yb.minus.transpose(), yb.plus.transpose()});
        const Complex s = data.nu[i] / static_cast<double>(p);
        const auto bi = static_cast<std::size_t>(b - 1);
        block_set(out.Q[i].value, nl, ai, bi, blk.value * s);
        block_set(out.Q[i].minus, nl, ai, bi, blk.minus * s);
        block_set(out.Q[i].plus, nl, ai, bi, blk.plus * s);
      }
    }
  }
  return out;
}

inline ComplexMatrix build_P(const TodaSystem& system, const DressingData& data, std::size_t i, LightCone z) {
  return build_residues(system, data, z).P.at(i).value;
}

inline ComplexMatrix build_Q(const TodaSystem& system, const DressingData& data, std::size_t i, LightCone z) {
  return build_residues(system, data, z).Q.at(i).value;
}

/// sum_k weights[k-1] h^k M h^-k for k = 1..p. Block (a, b) of h^k M h^-k is
/// eps^{k (b - a)} M_ab.
inline ComplexMatrix averaged_conjugation(const TodaSystem& system, const ComplexMatrix& m,
                                          const std::vector<Complex>& weights) {
  const int p = system.p;
  const BlockLayout layout = system.layout();
  ComplexMatrix out(m.rows(), m.cols());
  for (int a = 1; a <= p; ++a) {
    for (int b = 1; b <= p; ++b) {
      Complex w{};
      for (int k = 1; k <= p; ++k) {
        w += weights[static_cast<std::size_t>(k - 1)] * unit_root_pow(p, residue(static_cast<long>(k) * (b - a), p));
      }
      if (w == Complex{}) continue;
      const auto ai = static_cast<std::size_t>(a - 1);
      const auto bi = static_cast<std::size_t>(b - 1);
      block_set(out, layout, ai, bi, block_get(m, layout, ai, bi) * w);
    }
  }
  return out;
}

namespace detail {

inline std::vector<Complex> pole_weights(const TodaSystem& system, Complex lambda, Complex pole) {
  std::vector<Complex> w(static_cast<std::size_t>(system.p));
  for (int k = 1; k <= system.p; ++k) {
    const Complex target = unit_root_pow(system.p, k) * pole;
    if (std::abs(lambda - target) <= 1e-14 * std::max(1.0, std::abs(lambda))) {
      throw PoleError("spectral parameter coincides with pole eps^" + std::to_string(k) + " * pole");
    }
    w[static_cast<std::size_t>(k - 1)] = lambda / (lambda - target);
  }
  return w;
}

inline ComplexMatrix rational_sum(const TodaSystem& system, const std::vector<BlockJet>& residues,
                                  const std::vector<Complex>& poles, Complex lambda) {
  const auto n = static_cast<std::size_t>(system.n());
  ComplexMatrix out = ComplexMatrix::identity(n);
  for (std::size_t i = 0; i < residues.size(); ++i) {
    out += averaged_conjugation(system, residues[i].value, pole_weights(system, lambda, poles[i]));
  }
  return out;
}

}  // namespace detail

/// psi(lambda) from precomputed residues.
inline ComplexMatrix eval_psi(const TodaSystem& system, const DressingData& data, const ResidueMatrices& res,
                              Complex lambda) {
  return detail::rational_sum(system, res.P, data.mu, lambda);
}

inline ComplexMatrix eval_psi_inv(const TodaSystem& system, const DressingData& data, const ResidueMatrices& res,
                                  Complex lambda) {
  return detail::rational_sum(system, res.Q, data.nu, lambda);
}

inline ComplexMatrix eval_psi(const TodaSystem& system, const DressingData& data, Complex lambda, LightCone z) {
  return eval_psi(system, data, build_residues(system, data, z), lambda);
}

inline ComplexMatrix eval_psi_inv(const TodaSystem& system, const DressingData& data, Complex lambda, LightCone z) {
  return eval_psi_inv(system, data, build_residues(system, data, z), lambda);
}

/// psi(infinity) = I + sum_i sum_k h^k P_i h^-k (block diagonal).
inline ComplexMatrix psi_at_infinity(const TodaSystem& system, const DressingData& data, LightCone z) {
  const auto res = build_residues(system, data, z);
  const auto n = static_cast<std::size_t>(system.n());
  ComplexMatrix out = ComplexMatrix::identity(n);
  const std::vector<Complex> ones(static_cast<std::size_t>(system.p), 1.0);
  for (const auto& P : res.P) out += averaged_conjugation(system, P.value, ones);
  return out;
}

/// Left-hand sides of the six residue relations, as max-norms over all i.
struct ResidueReport {
  static constexpr std::array<const char*, 6> kNames = {"res1_n", "res1_m", "res2_n", "res3_n", "res2_m", "res3_m"};
  std::array<double, 6> norms{};
  /// Relative gap between the analytic derivatives and central differences.
  double fd_cross_check = 0.0;

  double max_norm() const { return *std::max_element(norms.begin(), norms.end()); }
};

/// Evaluates the six relations for the given residue matrices (which may be
/// perturbed by the caller).
inline std::array<double, 6> residue_norms(const TodaSystem& system, const DressingData& data,
                                           const ResidueMatrices& res) {
  const int p = system.p;
  const auto r = res.P.size();
  const auto n = static_cast<std::size_t>(system.n());
  std::array<double, 6> norms{};
  for (std::size_t i = 0; i < r; ++i) {
    const Complex nu = data.nu[i];
    const Complex mu = data.mu[i];
    ComplexMatrix sn = ComplexMatrix::identity(n);
    ComplexMatrix sm = ComplexMatrix::identity(n);
    for (std::size_t j = 0; j < r; ++j) {
      std::vector<Complex> wn(static_cast<std::size_t>(p)), wm(static_cast<std::size_t>(p));
      for (int k = 1; k <= p; ++k) {
        const Complex e = unit_root_pow(p, k);
        wn[static_cast<std::size_t>(k - 1)] = nu / (nu - e * data.mu[j]);
        wm[static_cast<std::size_t>(k - 1)] = mu / (mu - e * data.nu[j]);
      }
      sn += averaged_conjugation(system, res.P[j].value, wn);
      sm += averaged_conjugation(system, res.Q[j].value, wm);
    }
    const auto& Q = res.Q[i];
    const auto& P = res.P[i];
    const std::array<ComplexMatrix, 6> lhs = {
        Q.value * sn,
        sm * P.value,
        (Q.minus - (Q.value * system.c_minus) * (1.0 / nu)) * sn,
        (Q.plus - (Q.value * system.c_plus) * nu) * sn,
        sm * (P.minus + (system.c_minus * P.value) * (1.0 / mu)),
        sm * (P.plus + (system.c_plus * P.value) * mu),
    };
    for (std::size_t k = 0; k < 6; ++k) norms[k] = std::max(norms[k], lhs[k].max_abs());
  }
  return norms;
}

/// Residue relations at z with analytic derivatives, plus a central
/// difference cross-check of those derivatives (spacing `fd_step`).
inline ResidueReport check_residue_relations(const TodaSystem& system, const DressingData& data, LightCone z,
                                             double fd_step = 1e-5) {
  const auto res = build_residues(system, data, z);
  ResidueReport report;
  report.norms = residue_norms(system, data, res);

  const auto mp = build_residues(system, data, {z.plus, z.minus + fd_step});
  const auto mm = build_residues(system, data, {z.plus, z.minus - fd_step});
  const auto pp = build_residues(system, data, {z.plus + fd_step, z.minus});
  const auto pm = build_residues(system, data, {z.plus - fd_step, z.minus});
  const double inv2h = 1.0 / (2.0 * fd_step);
  double gap = 0.0;
  auto compare = [&](const ComplexMatrix& analytic, const ComplexMatrix& hi, const ComplexMatrix& lo) {
    gap = std::max(gap, relative_deviation(analytic, (hi - lo) * inv2h));
  };
  for (std::size_t i = 0; i < res.P.size(); ++i) {
    compare(res.P[i].minus, mp.P[i].value, mm.P[i].value);
    compare(res.P[i].plus, pp.P[i].value, pm.P[i].value);
    compare(res.Q[i].minus, mp.Q[i].value, mm.Q[i].value);
    compare(res.Q[i].plus, pp.Q[i].value, pm.Q[i].value);
  }
  report.fd_cross_check = gap;
  return report;
}

/// `count` points on the circle |lambda| = radius, equally spaced and
/// rotated to maximize the distance to every pole eps^k mu_i, eps^k nu_i.
inline std::vector<Complex> circle_samples(const TodaSystem& system, const DressingData& data, std::size_t count,
                                           double radius = 1.0) {
  std::vector<Complex> poles;
  for (int k = 1; k <= system.p; ++k) {
    for (int i = 0; i < data.r; ++i) {
      poles.push_back(unit_root_pow(system.p, k) * data.mu[static_cast<std::size_t>(i)]);
      poles.push_back(unit_root_pow(system.p, k) * data.nu[static_cast<std::size_t>(i)]);
    }
  }
  const double spacing = 2.0 * std::numbers::pi / static_cast<double>(count);
  double best_offset = 0.0;
  double best_gap = -1.0;
  constexpr int kTrials = 64;
  for (int t = 0; t < kTrials; ++t) {
    const double offset = spacing * (t + 0.5) / kTrials;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < count; ++s) {
      const Complex lam = std::polar(radius, offset + spacing * static_cast<double>(s));
      for (const auto& pole : poles) gap = std::min(gap, std::abs(lam - pole));
    }
    if (gap > best_gap) {
      best_gap = gap;
      best_offset = offset;
    }
  }
  std::vector<Complex> out(count);
  for (std::size_t s = 0; s < count; ++s) out[s] = std::polar(radius, best_offset + spacing * static_cast<double>(s));
  return out;
}

/// Wave function evaluators psi(lambda; z) and psi^-1(lambda; z).
struct WaveFunction {
  std::function<ComplexMatrix(Complex, LightCone)> psi;
  std::function<ComplexMatrix(Complex, LightCone)> psi_inv;
};

inline WaveFunction dressing_wave_function(const TodaSystem& system, const DressingData& data) {
  auto sys = std::make_shared<const TodaSystem>(system);
  auto dat = std::make_shared<const DressingData>(data);
  return {[sys, dat](Complex l, LightCone z) { return eval_psi(*sys, *dat, l, z); },
          [sys, dat](Complex l, LightCone z) { return eval_psi_inv(*sys, *dat, l, z); }};
}

/// max over samples of ||psi^-1 psi - I||_max.
inline double psi_inverse_defect(const TodaSystem& system, const DressingData& data, LightCone z,
                                 const std::vector<Complex>& lambdas) {
  const auto res = build_residues(system, data, z);
  const auto I = ComplexMatrix::identity(static_cast<std::size_t>(system.n()));
  double worst = 0.0;
  for (const auto& l : lambdas) {
    worst = std::max(worst, max_abs_diff(eval_psi_inv(system, data, res, l) * eval_psi(system, data, res, l), I));
  }
  return worst;
}

/// Connection components at one lambda:
///   w- = psi^-1 d-psi + lambda^-1 psi^-1 c- psi,
///   w+ = psi^-1 d+psi + lambda psi^-1 c+ psi,
/// with d+- taken by central differences of spacing `step` in z+-.
struct Connection {
  ComplexMatrix minus;
  ComplexMatrix plus;
};

inline Connection connection_components(const TodaSystem& system, const WaveFunction& wf, Complex lambda,
                                        LightCone z, double step) {
  const ComplexMatrix psi = wf.psi(lambda, z);
  const ComplexMatrix psi_inv = wf.psi_inv(lambda, z);
  const double inv2h = 1.0 / (2.0 * step);
  const ComplexMatrix dm = (wf.psi(lambda, {z.plus, z.minus + step}) - wf.psi(lambda, {z.plus, z.minus - step})) * inv2h;
  const ComplexMatrix dp = (wf.psi(lambda, {z.plus + step, z.minus}) - wf.psi(lambda, {z.plus - step, z.minus})) * inv2h;
  Connection c;
  c.plus = psi_inv * dp + (psi_inv * system.c_plus * psi) * lambda;
  if (lambda == Complex{}) {
    c.minus = ComplexMatrix();  // pole of w- at zero
  } else {
    c.minus = psi_inv * dm + (psi_inv * system.c_minus * psi) * (1.0 / lambda);
  }
  return c;
}

/// Least-squares fit of matrix samples W_k ~ sum_b basis_b(lambda_k) A_b
/// (entrywise); returns the max residual.
inline double laurent_fit_residual(const std::vector<Complex>& lambdas, const std::vector<ComplexMatrix>& samples,
                                   const std::vector<int>& powers) {
  const std::size_t m = lambdas.size();
  const std::size_t q = powers.size();
  const std::size_t width = samples.front().rows() * samples.front().cols();
  ComplexMatrix X(m, q);
  ComplexMatrix W(m, width);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t b = 0; b < q; ++b) X(k, b) = std::pow(lambdas[k], powers[b]);
    for (std::size_t e = 0; e < width; ++e) W(k, e) = samples[k].entries()[e];
  }
  const ComplexMatrix Xh = X.adjoint();
  const ComplexMatrix coeffs = LuDecomposition(Xh * X).solve(Xh * W);
  return max_abs_diff(X * coeffs, W);
}

struct GradingReport {
  double minus_fit_residual = 0.0;        // w- against {lambda^-1, lambda^0}
  double plus_fit_residual = 0.0;         // w+ against {lambda}
  double plus_at_zero = 0.0;              // ||w+(0)||_max
  double minus_fit_without_pole = 0.0;    // w- against {lambda^0} only (must be large)
};

inline GradingReport check_grading(const TodaSystem& system, const WaveFunction& wf, LightCone z,
                                   const std::vector<Complex>& lambdas, double step = 1e-4) {
  if (lambdas.size() < 3) throw ValidationError("grading check needs at least 3 spectral samples");
  for (const auto& l : lambdas) {
    if (l == Complex{}) throw ValidationError("grading samples must avoid lambda = 0");
  }
  std::vector<ComplexMatrix> wm, wp;
  for (const auto& l : lambdas) {
    auto c = connection_components(system, wf, l, z, step);
    wm.push_back(std::move(c.minus));
    wp.push_back(std::move(c.plus));
  }
  GradingReport g;
  g.minus_fit_residual = laurent_fit_residual(lambdas, wm, {-1, 0});
  g.plus_fit_residual = laurent_fit_residual(lambdas, wp, {1});
  g.minus_fit_without_pole = laurent_fit_residual(lambdas, wm, {0});
  g.plus_at_zero = connection_components(system, wf, 0.0, z, step).plus.max_abs();
  return g;
}

inline GradingReport check_grading(const TodaSystem& system, const DressingData& data, LightCone z,
                                   const std::vector<Complex>& lambdas, double step = 1e-4) {
  // Validates lambdas against the poles before any evaluation.
  for (const auto& l : lambdas) {
    for (int i = 0; i < data.r; ++i) {
      detail::pole_weights(system, l, data.mu[static_cast<std::size_t>(i)]);
      detail::pole_weights(system, l, data.nu[static_cast<std::size_t>(i)]);
    }
  }
  return check_grading(system, dressing_wave_function(system, data), z, lambdas, step);
}

}  // namespace toda
