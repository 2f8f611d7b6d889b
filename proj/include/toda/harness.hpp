#pragma once

// Grid sampling, verification reports and the randomized check campaign.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "toda/dressing.hpp"
#include "toda/solitons.hpp"
#include "toda/system.hpp"

namespace toda {

/// Every tolerance used by the checks, in one place.
namespace tolerance {
inline constexpr double residual = 1e-6;
inline constexpr double richardson_low = 3.2;
inline constexpr double richardson_high = 4.8;
inline constexpr double richardson_floor = 1e-9;  // residuals below this are rounding, not truncation
inline constexpr double equivalence_exact = 1e-10;
inline constexpr double proportional = 1e-9;
inline constexpr double factorization = 1e-10;
inline constexpr double inverse_pair = 1e-10;
inline constexpr double residue = 1e-9;
inline constexpr double residue_negative = 1e-4;
inline constexpr double residue_fd = 1e-5;
inline constexpr double psi_inverse = 1e-9;
inline constexpr double grading_fit = 1e-7;
inline constexpr double plus_at_zero = 1e-8;
inline constexpr double grading_negative = 1e-2;
inline constexpr double e_identity = 1e-12;
inline constexpr double one_soliton = 1e-10;
inline constexpr double abelian = 1e-12;
inline constexpr double asymptotic = 1e-4;
inline constexpr double cross_terms = 1e-6;
inline constexpr double spot_value = 1e-9;
inline constexpr double reality_condition = 1e-12;
inline constexpr double pairing = 1e-12;
inline constexpr double unitarity = 1e-8;
inline constexpr double negative_control = 1e-4;  // perturbed inputs must exceed this
}  // namespace tolerance

/// How a check's aggregated value is compared with its bounds.
enum class CheckKind {
  at_most,   // value = max over samples, pass iff value <= upper
  at_least,  // value = min over samples, pass iff value >= lower
  median,    // value = median of samples, pass iff lower <= value <= upper
};

struct CheckResult {
  CheckKind kind = CheckKind::at_most;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double value = 0.0;
  double sum = 0.0;
  std::size_t points = 0;
  std::vector<double> samples;  // median checks only

  static CheckResult at_most(double tol) {
    CheckResult c;
    c.upper = tol;
    return c;
  }
  static CheckResult at_least(double tol) {
    CheckResult c;
    c.kind = CheckKind::at_least;
    c.lower = tol;
    c.value = std::numeric_limits<double>::infinity();
    return c;
  }
  static CheckResult median(double lo, double hi) {
    CheckResult c;
    c.kind = CheckKind::median;
    c.lower = lo;
    c.upper = hi;
    return c;
  }

  void add(double v) {
    ++points;
    sum += v;
    switch (kind) {
      case CheckKind::at_most:
        // NaN counts as a failure
        value = std::isnan(v) ? v : (std::isnan(value) ? value : std::max(value, v));
        break;
      case CheckKind::at_least:
        value = std::isnan(v) ? v : (std::isnan(value) ? value : std::min(value, v));
        break;
      case CheckKind::median:
        samples.push_back(v);
        value = median_of(samples);
        break;
    }
  }

  void merge(const CheckResult& o) {
    if (kind == CheckKind::median) {
      samples.insert(samples.end(), o.samples.begin(), o.samples.end());
      points += o.points;
      sum += o.sum;
      value = median_of(samples);
      return;
    }
    if (o.points == 0) return;
    if (points == 0) {
      *this = o;
      return;
    }
    points += o.points;
    sum += o.sum;
    if (std::isnan(o.value) || std::isnan(value)) {
      value = std::numeric_limits<double>::quiet_NaN();
    } else {
      value = kind == CheckKind::at_most ? std::max(value, o.value) : std::min(value, o.value);
    }
  }

  double mean() const { return points ? sum / static_cast<double>(points) : 0.0; }

  /// A check with no samples passes (nothing was violated).
  bool pass() const {
    if (points == 0) return true;
    if (std::isnan(value)) return false;
    return value >= lower && value <= upper;
  }

  static double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  }
};

inline const char* to_string(CheckKind k) {
  switch (k) {
    case CheckKind::at_most: return "at_most";
    case CheckKind::at_least: return "at_least";
    case CheckKind::median: return "median";
  }
  return "?";
}

struct VerificationReport {
  std::map<std::string, CheckResult> checks;
  std::map<std::string, double> metrics;
  std::vector<std::string> failures;

  CheckResult& check(const std::string& name, const CheckResult& proto) {
    auto it = checks.find(name);
    if (it == checks.end()) it = checks.emplace(name, proto).first;
    return it->second;
  }

  void add(const std::string& name, const CheckResult& proto, double value) { check(name, proto).add(value); }

  void merge(const VerificationReport& o) {
    for (const auto& [name, c] : o.checks) {
      auto it = checks.find(name);
      if (it == checks.end()) {
        checks.emplace(name, c);
      } else {
        it->second.merge(c);
      }
    }
    for (const auto& [k, v] : o.metrics) metrics[k] += v;
    failures.insert(failures.end(), o.failures.begin(), o.failures.end());
  }

  bool all_pass() const {
    return failures.empty() &&
           std::all_of(checks.begin(), checks.end(), [](const auto& kv) { return kv.second.pass(); });
  }

  nlohmann::json to_json() const {
    auto num = [](double v) -> nlohmann::json {
      if (std::isfinite(v)) return v;
      if (std::isnan(v)) return "nan";
      return v > 0 ? "inf" : "-inf";
    };
    nlohmann::json j;
    j["all_pass"] = all_pass();
    nlohmann::json cs = nlohmann::json::object();
    for (const auto& [name, c] : checks) {
      nlohmann::json e = {{"kind", to_string(c.kind)}, {"value", num(c.value)}, {"mean_norm", num(c.mean())},
                          {"points_tested", c.points},  {"lower", num(c.lower)}, {"upper", num(c.upper)},
                          {"pass", c.pass()}};
      if (c.kind == CheckKind::at_most) e["max_norm"] = num(c.value);
      cs[name] = e;
    }
    j["checks"] = cs;
    nlohmann::json ms = nlohmann::json::object();
    for (const auto& [k, v] : metrics) ms[k] = num(v);
    j["metrics"] = ms;
    j["failures"] = failures;
    return j;
  }
};

struct GridSpec {
  CoordinateMode mode = CoordinateMode::independent;
  double x_min = 0.0;
  double x_max = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  int nx = 1;
  int nt = 1;
  double fd_step = 1e-4;

  bool operator==(const GridSpec&) const = default;

  double x_at(int i) const { return nx == 1 ? x_min : x_min + (x_max - x_min) * i / (nx - 1); }
  double t_at(int j) const { return nt == 1 ? t_min : t_min + (t_max - t_min) * j / (nt - 1); }
  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(nt); }
  /// Grid coordinates of point k (x major).
  std::pair<double, double> point(std::size_t k) const {
    return {x_at(static_cast<int>(k / static_cast<std::size_t>(nt))), t_at(static_cast<int>(k % static_cast<std::size_t>(nt)))};
  }
  LightCone cone(std::size_t k) const {
    const auto [x, t] = point(k);
    return light_cone(mode, x, t);
  }
};

inline void validate(const GridSpec& g) {
  if (g.nx < 1 || g.nt < 1) throw ValidationError("grid.nx and grid.nt must be >= 1");
  for (double v : {g.x_min, g.x_max, g.t_min, g.t_max}) {
    if (!std::isfinite(v)) throw ValidationError("grid ranges must be finite");
  }
  if (g.x_max < g.x_min || g.t_max < g.t_min) throw ValidationError("grid ranges must satisfy min <= max");
  if (!(g.fd_step > 0.0) || !std::isfinite(g.fd_step)) throw ValidationError("grid.fd_step must be positive");
  double spacing = std::numeric_limits<double>::infinity();
  if (g.nx > 1) spacing = std::min(spacing, (g.x_max - g.x_min) / (g.nx - 1));
  if (g.nt > 1) spacing = std::min(spacing, (g.t_max - g.t_min) / (g.nt - 1));
  if (!(g.fd_step < spacing / 4.0)) {
    throw ValidationError("grid.fd_step must be below a quarter of the grid spacing");
  }
}

/// Sampled field values; values[a-1][k] is meaningful only where valid[a-1][k].
struct FieldGrid {
  GridSpec spec;
  int p = 0;
  int n_star = 0;
  std::vector<std::vector<ComplexMatrix>> values;
  std::vector<std::vector<bool>> valid;
  std::optional<std::vector<double>> residual_norms;

  std::size_t invalid_count() const {
    std::size_t n = 0;
    for (const auto& v : valid) n += static_cast<std::size_t>(std::count(v.begin(), v.end(), false));
    return n;
  }
};

inline FieldGrid sample_field(const GammaField& field, const GridSpec& spec) {
  validate(spec);
  FieldGrid g;
  g.spec = spec;
  g.p = field.p();
  g.n_star = field.n_star();
  const auto ns = static_cast<std::size_t>(g.n_star);
  g.values.assign(static_cast<std::size_t>(g.p), std::vector<ComplexMatrix>(spec.size(), ComplexMatrix(ns, ns)));
  g.valid.assign(static_cast<std::size_t>(g.p), std::vector<bool>(spec.size(), false));
  for (int a = 1; a <= g.p; ++a) {
    for (std::size_t k = 0; k < spec.size(); ++k) {
      auto v = field.try_evaluate(a, spec.cone(k));
      if (v && v->all_finite()) {
        g.values[static_cast<std::size_t>(a - 1)][k] = std::move(*v);
        g.valid[static_cast<std::size_t>(a - 1)][k] = true;
      }
    }
  }
  return g;
}

/// Residual norm at a point for every alpha, or nullopt if the stencil hits
/// a singular point.
inline std::optional<double> residual_at(const GammaField& field, const TodaSystem& system, LightCone z, double step,
                                         CoordinateMode mode) {
  double worst = 0.0;
  try {
    for (int a = 1; a <= system.p; ++a) worst = std::max(worst, toda_residual(field, system, a, z, step, mode).max_abs());
  } catch (const SingularFieldError&) {
    return std::nullopt;
  }
  return worst;
}

/// Adds the residual and Richardson samples at one point; returns false when
/// the point is singular.
inline bool add_residual_sample(VerificationReport& rep, const std::string& prefix, const GammaField& field,
                                const TodaSystem& system, LightCone z, double step, CoordinateMode mode) {
  const auto r1 = residual_at(field, system, z, step, mode);
  if (!r1) return false;
  rep.add(prefix, CheckResult::at_most(tolerance::residual), *r1);
  // Order check on the pair (2 step, step): halving from `step` itself would
  // put the smaller residual at the rounding level in the soliton tails.
  if (*r1 >= tolerance::richardson_floor) {
    const auto r2 = residual_at(field, system, z, 2 * step, mode);
    if (r2) {
      rep.add(prefix + "_richardson", CheckResult::median(tolerance::richardson_low, tolerance::richardson_high),
              *r2 / *r1);
    }
  }
  return true;
}

inline VerificationReport residual_report(const GammaField& field, const TodaSystem& system, const GridSpec& spec) {
  validate(spec);
  VerificationReport rep;
  rep.check("residual", CheckResult::at_most(tolerance::residual));
  std::size_t skipped = 0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (!add_residual_sample(rep, "residual", field, system, spec.cone(k), spec.fd_step, spec.mode)) ++skipped;
  }
  rep.metrics["residual_singular_points"] = static_cast<double>(skipped);
  return rep;
}

enum class EquivalenceMode { exact, proportional };

inline VerificationReport equivalence_report(const std::vector<GammaField>& fields, const GridSpec& spec,
                                             EquivalenceMode mode) {
  if (fields.size() < 2) throw ValidationError("equivalence needs at least two fields");
  validate(spec);
  VerificationReport rep;
  const double tol = mode == EquivalenceMode::exact ? tolerance::equivalence_exact : tolerance::proportional;
  const std::string name = mode == EquivalenceMode::exact ? "equivalence" : "proportionality";
  rep.check(name, CheckResult::at_most(tol));
  const int p = fields.front().p();
  for (std::size_t a = 0; a < fields.size(); ++a) {
    for (std::size_t b = a + 1; b < fields.size(); ++b) {
      std::optional<Complex> ratio;
      if (mode == EquivalenceMode::exact) ratio = 1.0;
      for (std::size_t k = 0; k < spec.size(); ++k) {
        const LightCone z = spec.cone(k);
        for (int al = 1; al <= p; ++al) {
          const auto fa = fields[a].try_evaluate(al, z);
          const auto fb = fields[b].try_evaluate(al, z);
          if (!fa || !fb) continue;
          if (!ratio) {
            // Reference: the entry of largest magnitude at the first valid point.
            std::size_t best = 0;
            for (std::size_t e = 1; e < fb->entries().size(); ++e) {
              if (std::abs(fb->entries()[e]) > std::abs(fb->entries()[best])) best = e;
            }
            if (fb->entries()[best] == Complex{}) continue;
            ratio = fa->entries()[best] / fb->entries()[best];
            rep.metrics["ratio_re"] = ratio->real();
            rep.metrics["ratio_im"] = ratio->imag();
          }
          rep.add(name, CheckResult::at_most(tol), relative_deviation(*fa, *fb * *ratio));
        }
      }
    }
  }
  return rep;
}

/// Deterministic random source. Doubles are formed from the top 53 bits and
/// normals by Box-Muller so results do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double m = std::sqrt(-2.0 * std::log(u1));
    spare_ = m * std::sin(2.0 * std::numbers::pi * u2);
    return m * std::cos(2.0 * std::numbers::pi * u2);
  }
  Complex complex_normal() {
    const double a = normal();
    return {a, normal()};
  }
  ComplexMatrix matrix(std::size_t n, double scale = 1.0) {
    ComplexMatrix m(n, n);
    for (auto& v : m.entries()) v = complex_normal() * scale;
    return m;
  }
  /// Point of the annulus lo <= |w| <= hi, uniform in log-radius and angle.
  Complex annulus(double lo, double hi) {
    return std::polar(std::exp(uniform(std::log(lo), std::log(hi))), uniform(0.0, 2.0 * std::numbers::pi));
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct CampaignSettings {
  std::uint64_t seed = 42;
  int trials = 20;
  int p_min = 2, p_max = 4;
  int n_star_min = 1, n_star_max = 3;
  int r_min = 1, r_max = 3;
  double radius_min = 0.3;
  double radius_max = 3.0;
  int points_per_trial = 10;
  double fd_step = 1e-3;
  double grading_step = 1e-4;
  int grading_points = 2;
  int lambda_samples = 16;
  double box = 3.0;              // real and imaginary parts of z+, z- drawn from [-box, box]
  double connection_min = 1e-2;  // tail band: the field must still vary here
  double connection_max = 5e-2;  // off-core: every |G^-1 d G| entry below this
  double data_condition_max = 1e2;   // bound for c_I, D~(J), D~(K) (row-equilibrated)
  double point_condition_max = 1e3;  // bound for every R~'_a at a test point (row-equilibrated)
  int max_point_attempts = 4000;
  std::vector<int> inject_pole_collision;  // trial indices whose first draw collides

  bool operator==(const CampaignSettings&) const = default;
};

inline void validate(const CampaignSettings& s) {
  if (s.trials < 1) throw ValidationError("campaign.trials must be >= 1");
  if (s.p_min < 2 || s.p_max < s.p_min) throw ValidationError("campaign p range must satisfy 2 <= min <= max");
  if (s.n_star_min < 1 || s.n_star_max < s.n_star_min) throw ValidationError("campaign n_star range is invalid");
  if (s.r_min < 1 || s.r_max < s.r_min) throw ValidationError("campaign r range is invalid");
  if (!(s.radius_min > 0.0) || s.radius_max < s.radius_min) throw ValidationError("campaign radius range is invalid");
  if (s.points_per_trial < 1) throw ValidationError("campaign.points_per_trial must be >= 1");
  if (!(s.fd_step > 0.0) || !(s.grading_step > 0.0)) throw ValidationError("campaign steps must be positive");
  if (s.lambda_samples < 3) throw ValidationError("campaign.lambda_samples must be >= 3");
}

/// Seed of one trial, derived from the campaign seed.
inline std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// 1-norm condition number after scaling every row to unit max-norm.
inline double row_equilibrated_condition(ComplexMatrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double top = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) top = std::max(top, std::abs(m(i, j)));
    if (top == 0.0) return std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) /= top;
  }
  LuDecomposition lu(m);
  if (lu.singular()) return std::numeric_limits<double>::infinity();
  return m.norm1() * lu.inverse().norm1();
}

struct GeneratedTrial {
  TodaSystem system;
  SolitonData data;
  int rejected_invalid = 0;
  int rejected_conditioning = 0;
};

/// Draws valid soliton data, rejection-sampling the pole, index and
/// conditioning invariants.
inline GeneratedTrial generate_trial(const CampaignSettings& s, Rng& rng, bool inject_collision) {
  GeneratedTrial g;
  const int p = rng.integer(s.p_min, s.p_max);
  const int ns = rng.integer(s.n_star_min, s.n_star_max);
  const int r = rng.integer(s.r_min, s.r_max);
  g.system = build_system(p, ns);
  const auto nsz = static_cast<std::size_t>(ns);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 10000) throw ValidationError("campaign could not draw valid soliton data");
    SolitonData d;
    d.r = r;
    for (int i = 0; i < r; ++i) {
      d.mu.push_back(rng.annulus(s.radius_min, s.radius_max));
      d.nu.push_back(rng.annulus(s.radius_min, s.radius_max));
      d.I.push_back(rng.integer(1, p));
      const int J = rng.integer(1, p);
      int K = rng.integer(1, p - 1);
      if (K >= J) ++K;
      d.J.push_back(J);
      d.K.push_back(K);
      d.c_I.push_back(ComplexMatrix::identity(nsz) + rng.matrix(nsz, 0.5));
      d.d_J.push_back(rng.matrix(nsz));
      d.d_K.push_back(rng.matrix(nsz));
    }
    if (inject_collision && attempt == 0) d.nu[0] = d.mu[0];
    try {
      validate(g.system, d);
    } catch (const ValidationError&) {
      ++g.rejected_invalid;
      continue;
    }
    bool ok = true;
    for (const auto& c : d.c_I) ok = ok && row_equilibrated_condition(c) <= s.data_condition_max;
    for (auto sel : {Selector::J, Selector::K}) {
      ok = ok && row_equilibrated_condition(build_D_tilde(g.system, d, sel)) <= s.data_condition_max;
    }
    if (!ok) {
      ++g.rejected_conditioning;
      continue;
    }
    g.data = std::move(d);
    return g;
  }
}

/// Largest entry of G_a^-1 d+-G_a over all a, by central differences.
inline std::optional<double> connection_norm(const GammaField& field, const TodaSystem& system, LightCone z,
                                             double step) {
  double worst = 0.0;
  try {
    for (int a = 1; a <= system.p; ++a) {
      const ComplexMatrix gi = inverse(field(a, z));
      const ComplexMatrix dm = (field(a, {z.plus, z.minus + step}) - field(a, {z.plus, z.minus - step})) *
                               (1.0 / (2.0 * step));
      const ComplexMatrix dp = (field(a, {z.plus + step, z.minus}) - field(a, {z.plus - step, z.minus})) *
                               (1.0 / (2.0 * step));
      worst = std::max({worst, (gi * dm).max_abs(), (gi * dp).max_abs()});
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  return worst;
}

/// Draws test points in the soliton tails: complex (z+, z-) in the box where
/// every R~'_a is well conditioned and the connection lies in
/// [connection_min, connection_max].
inline std::vector<LightCone> off_core_points(const TodaSystem& system, const SolitonData& data,
                                              const CampaignSettings& s, Rng& rng, int& attempts_used) {
  const auto model = make_model(system, data);
  const GammaField field = gamma_soliton_e28(system, data);
  std::vector<LightCone> pts;
  attempts_used = 0;
  while (static_cast<int>(pts.size()) < s.points_per_trial && attempts_used < s.max_point_attempts) {
    ++attempts_used;
    const double a = rng.uniform(-s.box, s.box);
    const double b = rng.uniform(-s.box, s.box);
    const double c = rng.uniform(-s.box, s.box);
    const double d = rng.uniform(-s.box, s.box);
    const LightCone z{Complex(a, b), Complex(c, d)};
    bool conditioned = true;
    for (int al = 1; al <= system.p && conditioned; ++al) {
      conditioned = row_equilibrated_condition(model->R_prime(al, z)) <= s.point_condition_max;
    }
    if (!conditioned) continue;
    const auto conn = connection_norm(field, system, z, s.fd_step);
    if (conn && *conn >= s.connection_min && *conn <= s.connection_max) pts.push_back(z);
  }
  return pts;
}

/// Residue relations at z, plus a perturbed control that must fail them.
inline void add_residue_checks(VerificationReport& rep, const TodaSystem& system, const DressingData& dd, LightCone z) {
  const ResidueMatrices res = build_residues(system, dd, z);
  const auto norms = residue_norms(system, dd, res);
  for (std::size_t k = 0; k < norms.size(); ++k) {
    rep.add(std::string("residue_") + ResidueReport::kNames[k], CheckResult::at_most(tolerance::residue), norms[k]);
  }
  ResidueMatrices bumped = res;
  bumped.P[0].value(0, 0) += 1e-3;
  const auto bumped_norms = residue_norms(system, dd, bumped);
  rep.add("residue_negative", CheckResult::at_least(tolerance::residue_negative),
          *std::max_element(bumped_norms.begin(), bumped_norms.end()));
}

/// Finite-difference residue cross-check, psi^-1 psi = I and the Laurent
/// structure of the connection on a circle of spectral samples.
inline void add_grading_checks(VerificationReport& rep, const TodaSystem& system, const DressingData& dd, LightCone z,
                               int lambda_samples, double step) {
  using CR = CheckResult;
  namespace tol = tolerance;
  rep.add("residue_fd_cross_check", CR::at_most(tol::residue_fd), check_residue_relations(system, dd, z).fd_cross_check);
  const auto lambdas = circle_samples(system, dd, static_cast<std::size_t>(lambda_samples));
  rep.add("psi_inverse", CR::at_most(tol::psi_inverse), psi_inverse_defect(system, dd, z, lambdas));
  const auto gr = check_grading(system, dd, z, lambdas, step);
  rep.add("grading_minus_fit", CR::at_most(tol::grading_fit), gr.minus_fit_residual);
  rep.add("grading_plus_fit", CR::at_most(tol::grading_fit), gr.plus_fit_residual);
  rep.add("grading_plus_at_zero", CR::at_most(tol::plus_at_zero), gr.plus_at_zero);
  rep.add("grading_negative", CR::at_least(tol::grading_negative), gr.minus_fit_without_pole);
}

/// The check battery for one soliton data set at the given points.
inline VerificationReport run_battery(const TodaSystem& system, const SolitonData& data,
                                      const std::vector<LightCone>& points, const CampaignSettings& s) {
  using CR = CheckResult;
  namespace tol = tolerance;
  VerificationReport rep;
  const DressingData dd = to_dressing_data(system, data);
  const GammaField dressing = gamma_dressing(system, dd);
  const GammaField dressing_inv = gamma_inv_dressing(system, dd);
  const GammaField e28 = gamma_soliton_e28(system, data);
  const GammaField multi = gamma_multi_soliton(system, data, false);
  const GammaField multi_norm = gamma_multi_soliton(system, data, true);
  const auto params = derive_params(system, data);
  const auto ns = static_cast<std::size_t>(system.n_star);
  const auto I = ComplexMatrix::identity(ns);
  const double r = data.r;

  // Negative control for the residual: one block scaled by 1.01.
  const GammaField perturbed{system.p, system.n_star, [e28](int a, LightCone z) {
                               return a == 1 ? e28(a, z) * Complex(1.01) : e28(a, z);
                             }};

  std::optional<OneSoliton> one;
  if (data.r == 1) one = gamma_one_soliton(system, data);

  int grading_done = 0;
  for (const auto& z : points) {
    add_residual_sample(rep, "residual_dressing", dressing, system, z, s.fd_step, CoordinateMode::independent);
    add_residual_sample(rep, "residual_e28", e28, system, z, s.fd_step, CoordinateMode::independent);
    if (one) {
      add_residual_sample(rep, "residual_one_soliton", one->field, system, z, s.fd_step, CoordinateMode::independent);
    } else {
      add_residual_sample(rep, "residual_multi", multi, system, z, s.fd_step, CoordinateMode::independent);
    }
    if (const auto neg = residual_at(perturbed, system, z, s.fd_step, CoordinateMode::independent)) {
      rep.add("residual_negative", CR::at_least(tol::negative_control), *neg);
    }

    for (int a = 1; a <= system.p; ++a) {
      const ComplexMatrix g = dressing(a, z);
      const ComplexMatrix gi = dressing_inv(a, z);
      const ComplexMatrix g28 = e28(a, z);
      rep.add("dressing_vs_e28", CR::at_most(tol::equivalence_exact), relative_deviation(g, g28));
      rep.add("inverse_pair", CR::at_most(tol::inverse_pair),
              std::max(max_abs_diff(g * gi, I), max_abs_diff(gi * g, I)));
      // Negative control: both closed forms with the same R~_a.
      const ComplexMatrix wrong = I + (I - g);
      rep.add("inverse_pair_negative", CR::at_least(tol::negative_control),
              std::max(max_abs_diff(g * wrong, I), max_abs_diff(wrong * g, I)));
      rep.add("multi_proportional", CR::at_most(tol::proportional), relative_deviation(multi(a, z), g28 * r));
      rep.add("multi_normalized", CR::at_most(tol::proportional), relative_deviation(multi_norm(a, z), g28));

      const auto ph = phase_factors(system, data, a, z);
      const ComplexMatrix lhs = ph.left * build_R_prime(system, data, a, z) * ph.right;
      rep.add("factorization", CR::at_most(tol::factorization),
              relative_deviation(lhs, build_R(system, dd, a, z, true).value));

      for (std::size_t i = 0; i < params.size(); ++i) {
        const Complex e = eval_E(system, params[i], a, z);
        const Complex ref = unit_root_pow(system.p, static_cast<double>(a) * params[i].rho) *
                            std::exp(eval_Z(system, -data.K[i], data.nu[i], z) -
                                     eval_Z(system, -data.J[i], data.nu[i], z));
        rep.add("e_identity", CR::at_most(tol::e_identity), std::abs(e - ref) / (1.0 + std::abs(ref)));
      }

      if (one) {
        const ComplexMatrix t_form = one->field(a, z);
        const Complex xi = data.nu[0] / data.mu[0] * unit_root_pow(system.p, -(data.I[0] + data.J[0]));
        const ComplexMatrix sym = (inverse(data.c_I[0]) * g28 * data.c_I[0]) * xi;
        rep.add("one_soliton_triple", CR::at_most(tol::one_soliton),
                std::max(relative_deviation(t_form, one->ratio_field(a, z)), relative_deviation(t_form, sym)));
      }
    }

    add_residue_checks(rep, system, dd, z);
    if (grading_done < s.grading_points) {
      ++grading_done;
      add_grading_checks(rep, system, dd, z, s.lambda_samples, s.grading_step);
    }
  }
  return rep;
}

/// Runs `trials` seeded trials of generated soliton data through the battery.
inline VerificationReport campaign(const CampaignSettings& s) {
  validate(s);
  VerificationReport total;
  total.metrics["rejected_invalid"] = 0;
  total.metrics["rejected_conditioning"] = 0;
  total.metrics["trials"] = 0;
  total.metrics["points_tested"] = 0;
  for (int t = 0; t < s.trials; ++t) {
    const std::uint64_t ts = trial_seed(s.seed, t);
    Rng rng(ts);
    const bool inject = std::find(s.inject_pole_collision.begin(), s.inject_pole_collision.end(), t) !=
                        s.inject_pole_collision.end();
    const std::string tag = "trial " + std::to_string(t) + " (seed " + std::to_string(ts) + ")";
    try {
      const auto g = generate_trial(s, rng, inject);
      total.metrics["rejected_invalid"] += g.rejected_invalid;
      total.metrics["rejected_conditioning"] += g.rejected_conditioning;
      int attempts = 0;
      const auto pts = off_core_points(g.system, g.data, s, rng, attempts);
      total.metrics["point_attempts"] += attempts;
      if (static_cast<int>(pts.size()) < s.points_per_trial) {
        total.failures.push_back(tag + ": found only " + std::to_string(pts.size()) + " off-core points");
      }
      auto rep = run_battery(g.system, g.data, pts, s);
      for (const auto& [name, c] : rep.checks) {
        if (c.kind != CheckKind::median && !c.pass()) total.failures.push_back(tag + ": " + name);
      }
      total.merge(rep);
      total.metrics["trials"] += 1;
      total.metrics["points_tested"] += static_cast<double>(pts.size());
    } catch (const Error& e) {
      total.failures.push_back(tag + ": " + e.what());
    }
  }
  return total;
}

}  // namespace toda
