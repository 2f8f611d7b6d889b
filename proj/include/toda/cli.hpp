#pragma once

// The run / campaign / validate commands behind the toda_cli binary.
//
// Exit statuses:
//   0  every requested check passed
//   1  at least one check failed
//   2  the config (or a command-line override) is invalid
//   3  a file could not be read or written

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "toda/config.hpp"
#include "toda/harness.hpp"

namespace toda {

enum ExitStatus : int { kExitPass = 0, kExitCheckFailed = 1, kExitInvalid = 2, kExitIo = 3 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> fd_step;
  bool quiet = false;
};

/// Applies command-line overrides and revalidates.
inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.fd_step) {
    if (c.grid) c.grid->fd_step = *o.fd_step;
    if (c.campaign) c.campaign->fd_step = *o.fd_step;
  }
  if (o.seed && c.campaign) c.campaign->seed = *o.seed;
  try {
    validate(c);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(e.what()) + " (after command-line overrides)");
  }
}

/// Relative output paths are taken relative to the config file.
inline std::filesystem::path resolve_output(const std::filesystem::path& config_path, const std::string& p) {
  const std::filesystem::path out(p);
  return out.is_absolute() ? out : config_path.parent_path() / out;
}

namespace detail {

inline std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline std::string summary_line(const std::string& name, const CheckResult& c) {
  std::string bound;
  switch (c.kind) {
    case CheckKind::at_most: bound = "<= " + short_num(c.upper); break;
    case CheckKind::at_least: bound = ">= " + short_num(c.lower); break;
    case CheckKind::median: bound = "median in [" + short_num(c.lower) + ", " + short_num(c.upper) + "]"; break;
  }
  return std::string(c.pass() ? "PASS " : "FAIL ") + name + ": " + short_num(c.value) + " " + bound +
         " (points " + std::to_string(c.points) + ")";
}

inline void print_report(const VerificationReport& rep, std::ostream& out) {
  for (const auto& [name, c] : rep.checks) out << summary_line(name, c) << "\n";
  for (const auto& f : rep.failures) out << "FAIL " << f << "\n";
}

}  // namespace detail

/// Runs the named checks of a solution over a grid.
inline VerificationReport run_checks(const TodaSystem& system, const SolutionConfig& sol, const GridSpec& grid,
                                     const std::vector<std::string>& checks) {
  using CR = CheckResult;
  namespace tol = tolerance;
  VerificationReport rep;
  const GammaField field = build_field(system, sol);
  const auto ns = static_cast<std::size_t>(system.n_star);
  const auto I = ComplexMatrix::identity(ns);

  std::optional<DressingData> dd;
  if (sol.kind == SolutionKind::dressing) dd = sol.dressing;
  if (is_soliton_kind(sol.kind)) dd = to_dressing_data(system, sol.soliton);

  for (const auto& name : checks) {
    if (name == "residual") {
      rep.merge(residual_report(field, system, grid));
    } else if (name == "inverse_pair") {
      const GammaField g = dd ? gamma_dressing(system, *dd) : field;
      const GammaField gi = dd ? gamma_inv_dressing(system, *dd) : field;
      auto& c = rep.check("inverse_pair", CR::at_most(tol::inverse_pair));
      for (std::size_t k = 0; k < grid.size(); ++k) {
        for (int a = 1; a <= system.p; ++a) {
          const auto x = g.try_evaluate(a, grid.cone(k));
          const auto y = gi.try_evaluate(a, grid.cone(k));
          if (x && y) c.add(std::max(max_abs_diff(*x * *y, I), max_abs_diff(*y * *x, I)));
        }
      }
    } else if (name == "equivalence") {
      const auto& d = sol.soliton;
      const GammaField e28 = gamma_soliton_e28(system, d);
      rep.merge(equivalence_report({gamma_dressing(system, *dd), e28}, grid, EquivalenceMode::exact));
      if (d.r == 1) {
        // the T-ratio forms equal the e28 field only after the symmetry (xi, c_I)
        const auto one = gamma_one_soliton(system, d);
        const Complex xi = d.nu[0] / d.mu[0] * unit_root_pow(system.p, -(d.I[0] + d.J[0]));
        rep.merge(equivalence_report({one.field, one.ratio_field, apply_symmetry(e28, xi, d.c_I[0])}, grid,
                                     EquivalenceMode::exact));
      } else {
        rep.merge(equivalence_report({gamma_multi_soliton(system, d, true), e28}, grid, EquivalenceMode::exact));
        rep.merge(equivalence_report({gamma_multi_soliton(system, d, false), e28}, grid, EquivalenceMode::proportional));
      }
    } else if (name == "residue_relations" || name == "grading") {
      std::size_t skipped = 0;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        try {
          if (name == "grading") {
            add_grading_checks(rep, system, *dd, grid.cone(k), 16, CampaignSettings{}.grading_step);
          } else {
            add_residue_checks(rep, system, *dd, grid.cone(k));
          }
        } catch (const SingularMatrixError&) {
          ++skipped;
        } catch (const SingularFieldError&) {
          ++skipped;
        } catch (const PoleError&) {
          ++skipped;
        }
      }
      rep.metrics[name + "_singular_points"] = static_cast<double>(skipped);
    } else if (name == "reality") {
      std::vector<LightCone> pts;
      for (std::size_t k = 0; k < grid.size(); ++k) pts.push_back(grid.cone(k));
      const auto r = check_reality_compact(system, sol.soliton, pts);
      rep.add("reality_condition", CR::at_most(tol::reality_condition), r.condition_norm);
      rep.add("reality_unitarity", CR::at_most(tol::unitarity), r.grid_unitarity_norm);
      rep.add("reality_pairing", CR::at_most(tol::pairing), r.pairing_violation);
      rep.metrics["reality_singular_points"] = static_cast<double>(r.points_singular);
    }
  }
  return rep;
}

namespace detail {

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

inline RunConfig load_with_overrides(const std::filesystem::path& path, const Overrides& o) {
  RunConfig c = load_config(path);
  apply_overrides(c, o);
  return c;
}

}  // namespace detail

inline int validate_command(const std::filesystem::path& config, const Overrides& o, std::ostream& out,
                            std::ostream& err) {
  return detail::guarded(err, [&] {
    const RunConfig c = detail::load_with_overrides(config, o);
    if (c.solution) build_field(build_system(c.system->first, c.system->second), *c.solution);
    if (!o.quiet) out << "config ok: " << config.string() << "\n";
    return kExitPass;
  });
}

inline int run_command(const std::filesystem::path& config, const Overrides& o, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const RunConfig c = detail::load_with_overrides(config, o);
    if (!c.solution) detail::fail("solution", "missing required section (needed by run)");
    if (!c.grid) detail::fail("grid", "missing required section (needed by run)");
    const TodaSystem system = build_system(c.system->first, c.system->second);
    const GammaField field = build_field(system, *c.solution);
    const FieldGrid grid = sample_field(field, *c.grid);
    if (!c.outputs.grid_path.empty()) {
      export_grid(grid, resolve_output(config, c.outputs.grid_path), c.outputs.format);
    }
    VerificationReport rep = run_checks(system, *c.solution, *c.grid, c.checks);
    rep.metrics["grid_points"] = static_cast<double>(c.grid->size());
    rep.metrics["grid_invalid_values"] = static_cast<double>(grid.invalid_count());
    if (!c.outputs.report_path.empty()) {
      write_atomic(resolve_output(config, c.outputs.report_path), rep.to_json().dump(2) + "\n");
    }
    if (!o.quiet) detail::print_report(rep, out);
    return rep.all_pass() ? kExitPass : kExitCheckFailed;
  });
}

inline int campaign_command(const std::filesystem::path& config, const Overrides& o, std::ostream& out,
                            std::ostream& err) {
  return detail::guarded(err, [&] {
    const RunConfig c = detail::load_with_overrides(config, o);
    if (!c.campaign) detail::fail("campaign", "missing required section (needed by campaign)");
    const VerificationReport rep = campaign(*c.campaign);
    if (!c.outputs.report_path.empty()) {
      write_atomic(resolve_output(config, c.outputs.report_path), rep.to_json().dump(2) + "\n");
    }
    if (!o.quiet) detail::print_report(rep, out);
    return rep.all_pass() ? kExitPass : kExitCheckFailed;
  });
}

}  // namespace toda
