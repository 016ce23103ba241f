#include "octool/report.hpp"

#include <cstdio>
#include <sstream>

namespace octool::report {

namespace {

std::string csv17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* verdict_name(pmp::Verdict v) {
  switch (v) {
    case pmp::Verdict::Pass: return "pass";
    case pmp::Verdict::Fail: return "fail";
    default: return "not-checked";
  }
}

const char* mode_name(pmp::QualificationMode m) {
  switch (m) {
    case pmp::QualificationMode::QC0: return "QC0";
    case pmp::QualificationMode::QC1: return "QC1";
    default: return "LI";
  }
}

}  // namespace

Json vec_json(const Vec& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json rowvec_json(const RowVec& v) {
  Json out = Json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json certificate_json(const pmp::PMPCertificate& cert, int adjoint_samples) {
  Json out;
  out["kind"] = "pmp_certificate";
  out["degenerate"] = cert.degenerate;
  out["multipliers"] = {{"lambda", vec_json(cert.multipliers.lambda)},
                        {"mu", vec_json(cert.multipliers.mu)},
                        {"normalized", cert.multipliers.normalized}};
  Json conds;
  for (const auto& [name, c] : cert.conditions) {
    conds[name] = {{"residual", c.residual},
                   {"tolerance", c.tolerance},
                   {"verdict", verdict_name(c.verdict)}};
    if (!c.detail.empty()) conds[name]["detail"] = c.detail;
  }
  out["conditions"] = conds;
  Json quals = Json::array();
  for (const auto& qr : cert.qualification) {
    Json q;
    q["mode"] = mode_name(qr.mode);
    q["passed"] = qr.passed;
    q["sigma_min"] = qr.sigma_min;
    q["singular_values"] = vec_json(qr.singular_values);
    q["active_inequalities"] = qr.active_inequalities;
    q["detail"] = qr.detail;
    quals.push_back(q);
  }
  out["qualification"] = quals;
  out["tolerances"] = {{"tol", cert.options.tol},
                       {"active_set_tol", cert.options.active_set_tol},
                       {"control_grid", cert.options.control_grid},
                       {"ascent_starts", cert.options.ascent_starts}};
  if (cert.adjoint) {
    Json samples = Json::array();
    const double T = cert.adjoint->p.grid().horizon();
    for (int k = 0; k < adjoint_samples; ++k) {
      const double t = T * k / static_cast<double>(adjoint_samples - 1);
      Json row = Json::array();
      row.push_back(t);
      const Vec pv = cert.adjoint->p.eval(t);
      for (int i = 0; i < pv.size(); ++i) row.push_back(pv[i]);
      samples.push_back(row);
    }
    out["adjoint_samples"] = samples;
  }
  return out;
}

Json envelope_json(const envelope::EnvelopeReport& rep, const envelope::FdOracle& fd) {
  Json out;
  out["kind"] = "envelope_report";
  out["pi0"] = vec_json(rep.pi0);
  out["dpi"] = vec_json(rep.direction);
  out["terms"] = {{"g0", rep.term_g0},
                  {"g", rep.term_g},
                  {"h", rep.term_h},
                  {"f0", rep.term_f0},
                  {"f", rep.term_f}};
  out["total"] = rep.total;
  out["multipliers"] = {{"lambda", vec_json(rep.multipliers.lambda)},
                        {"mu", vec_json(rep.multipliers.mu)}};
  Json rows = Json::array();
  for (const auto& r : fd.rows) {
    rows.push_back({{"h", r.h},
                    {"forward", r.forward},
                    {"central", r.central},
                    {"status", r.ok ? "ok" : r.status}});
  }
  out["fd"] = {{"rows", rows},
               {"richardson", fd.richardson},
               {"convergence_order", fd.convergence_order}};
  out["fd_value"] = fd.richardson;
  out["fd_error"] = std::abs(rep.total - fd.richardson);
  return out;
}

Json multiplier_scan_json(const envelope::ContinuityScan& scan) {
  Json out;
  out["kind"] = "multiplier_continuity_scan";
  out["pi0"] = vec_json(scan.pi0);
  Json shells = Json::array();
  for (const auto& shell : scan.shells) {
    Json s;
    s["radius"] = shell.radius;
    s["max_deviation"] = shell.max_deviation;
    s["ok"] = shell.ok;
    shells.push_back(s);
  }
  out["shells"] = shells;
  out["monotone_decreasing"] = scan.monotone_decreasing;
  return out;
}

Json adjoint_scan_json(const envelope::AdjointScan& scan) {
  Json out;
  out["kind"] = "adjoint_continuity_scan";
  out["pi0"] = vec_json(scan.pi0);
  Json shells = Json::array();
  for (std::size_t r = 0; r < scan.radii.size(); ++r) {
    Json s;
    s["radius"] = scan.radii[r];
    s["max_sup_distance"] = scan.max_deviation[r];
    double worst_terminal = 0.0, worst_psi_f = 0.0, worst_psi_f0 = 0.0;
    bool ok = true;
    for (const auto& smp : scan.shells[r]) {
      if (!smp.ok) {
        ok = false;
        continue;
      }
      worst_terminal = std::max(worst_terminal, smp.terminal_distance);
      worst_psi_f = std::max(worst_psi_f, smp.psi_f);
      worst_psi_f0 = std::max(worst_psi_f0, smp.psi_f0);
    }
    s["max_terminal_distance"] = worst_terminal;
    s["max_psi_f"] = worst_psi_f;
    s["max_psi_f0"] = worst_psi_f0;
    s["ok"] = ok;
    shells.push_back(s);
  }
  out["shells"] = shells;
  out["monotone_decreasing"] = scan.monotone_decreasing;
  return out;
}

Json frechet_json(const envelope::FrechetReport& rep) {
  Json out;
  out["kind"] = "frechet_differentiability_check";
  out["pi0"] = vec_json(rep.pi0);
  Json shells = Json::array();
  for (std::size_t r = 0; r < rep.radii.size(); ++r) {
    shells.push_back({{"radius", rep.radii[r]},
                      {"gradient_deviation", rep.gradient_deviation[r]},
                      {"linearization_residual", rep.linearization_residual[r]}});
  }
  out["shells"] = shells;
  out["monotone"] = rep.monotone;
  return out;
}

std::string shell_table_csv(const envelope::ContinuityScan& scan) {
  std::ostringstream os;
  os << "radius,deviation,status\n";
  for (const auto& shell : scan.shells) {
    os << csv17(shell.radius) << "," << csv17(shell.max_deviation) << ","
       << (shell.ok ? "ok" : "partial") << "\n";
  }
  return os.str();
}

std::string adjoint_shell_table_csv(const envelope::AdjointScan& scan) {
  std::ostringstream os;
  os << "radius,deviation,status\n";
  for (std::size_t r = 0; r < scan.radii.size(); ++r) {
    bool ok = true;
    for (const auto& s : scan.shells[r]) ok = ok && s.ok;
    os << csv17(scan.radii[r]) << "," << csv17(scan.max_deviation[r]) << ","
       << (ok ? "ok" : "partial") << "\n";
  }
  return os.str();
}

std::string trajectory_csv(const Process& proc, int samples_per_segment) {
  std::ostringstream os;
  os << "t";
  for (int i = 0; i < proc.x.dim(); ++i) os << ",x" << (i + 1);
  for (int i = 0; i < proc.u.dim(); ++i) os << ",u" << (i + 1);
  os << "\n";
  const Grid merged = merge_grids(proc.x.grid(), proc.u.grid());
  const auto& bp = merged.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = proc.x.grid().locate(mid);
    const std::size_t iu = proc.u.grid().locate(mid);
    for (int k = 0; k <= samples_per_segment; ++k) {
      if (j > 0 && k == 0) continue;  // shared breakpoint already emitted
      const double t = bp[j] + (bp[j + 1] - bp[j]) * k / static_cast<double>(samples_per_segment);
      os << csv17(t);
      const Vec xv = proc.x.values().eval_segment(ix, t);
      for (int i = 0; i < xv.size(); ++i) os << "," << csv17(xv[i]);
      const Vec uv = proc.u.eval_segment(iu, t);
      for (int i = 0; i < uv.size(); ++i) os << "," << csv17(uv[i]);
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace octool::report
