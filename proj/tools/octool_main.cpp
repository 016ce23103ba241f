// octool: simulate, verify, envelope, needle-study, shoot for Bolza-type
// optimal-control problems declared in JSON files or picked from the builtin
// registry.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "octool/builtins.hpp"
#include "octool/envelope.hpp"
#include "octool/exprdiff.hpp"
#include "octool/flow.hpp"
#include "octool/pmp.hpp"
#include "octool/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using octool::BolzaProblem;
using octool::PiecewiseC1Fn;
using octool::PiecewiseFn;
using octool::Process;
using octool::Vec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitNumeric = 4;

Vec parse_vec(const std::string& text, int expect_dim, const std::string& what) {
  if (text.empty() && expect_dim >= 0) return Vec::Zero(expect_dim);
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    vals.push_back(std::stod(item));
  }
  if (expect_dim >= 0 && static_cast<int>(vals.size()) != expect_dim)
    throw std::invalid_argument(what + ": expected " + std::to_string(expect_dim) +
                                " comma-separated values, got " + std::to_string(vals.size()));
  Vec out(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) out[i] = vals[i];
  return out;
}

struct LoadedProblem {
  BolzaProblem problem;
  std::optional<octool::envelope::SolutionFamily> family;  // analytic, builtin only
  std::string source;
};

Vec json_vec(const json& j) {
  Vec out(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out[i] = j[i].get<double>();
  return out;
}

LoadedProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open problem file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("problem file '" + path + "' is not valid JSON: " + e.what());
  }

  static const std::vector<std::string> known = {
      "builtin",     "state_dim", "control_dim", "param_dim", "horizon",
      "xi0",         "f0",        "f",           "g",         "h",
      "control_box", "deriv_mode"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::invalid_argument("unknown problem-file key '" + it.key() + "'");
  }

  std::string builtin_name;
  if (j.contains("builtin")) builtin_name = j["builtin"].get<std::string>();
  if (builtin_name.empty() && j.contains("f0") && j["f0"].is_string() &&
      octool::builtins::is_builtin(j["f0"].get<std::string>()))
    builtin_name = j["f0"].get<std::string>();
  if (!builtin_name.empty()) {
    auto b = octool::builtins::make(builtin_name);
    return LoadedProblem{std::move(b.problem), std::move(b.family), builtin_name};
  }

  octool::expr::Dims dims;
  dims.state = j.at("state_dim").get<int>();
  dims.control = j.at("control_dim").get<int>();
  dims.param = j.value("param_dim", 0);
  const double horizon = j.at("horizon").get<double>();
  const Vec xi0 = json_vec(j.at("xi0"));

  octool::expr::ProblemExprs ex;
  ex.f0 = j.at("f0").get<std::string>();
  for (const auto& s : j.at("f")) ex.f.push_back(s.get<std::string>());
  if (j.contains("g"))
    for (const auto& s : j["g"]) ex.g.push_back(s.get<std::string>());
  if (j.contains("h"))
    for (const auto& s : j["h"]) ex.h.push_back(s.get<std::string>());

  octool::ControlBox box;
  if (j.contains("control_box") && !j["control_box"].is_null() &&
      !(j["control_box"].is_string() && j["control_box"] == "open")) {
    box.lower = json_vec(j["control_box"].at("lower"));
    box.upper = json_vec(j["control_box"].at("upper"));
  }

  BolzaProblem P = octool::expr::bind_problem(ex, dims, horizon, xi0, box,
                                              fs::path(path).stem().string());
  const std::string mode = j.value("deriv_mode", "dual-AD");
  if (mode == "central-FD") {
    // Keep the expression values but drop to difference quotients.
    P.f0_x = nullptr; P.f0_u = nullptr; P.f0_p = nullptr; P.f0_t = nullptr;
    P.f_x = nullptr; P.f_u = nullptr; P.f_p = nullptr; P.f_t = nullptr;
    for (auto& fn : P.g) { fn.grad_state = nullptr; fn.grad_param = nullptr; }
    for (auto& fn : P.h) { fn.grad_state = nullptr; fn.grad_param = nullptr; }
    P.deriv_mode = octool::DerivMode::CentralFd;
    P.finalize();
  } else if (mode != "dual-AD") {
    throw std::invalid_argument("deriv_mode must be dual-AD or central-FD for file problems");
  }
  return LoadedProblem{std::move(P), std::nullopt, path};
}

struct CommonOpts {
  std::string problem_path;
  std::string pi_text;  // empty: zero vector of the problem's parameter dimension
  std::string out_dir = ".";
  std::string format = "json";
  double tol = 1e-6;
  std::uint64_t seed = 0;
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--problem", o.problem_path, "problem file (JSON) or builtin name")->required();
  cmd->add_option("--pi", o.pi_text, "parameter vector, comma separated (default: zeros)");
  cmd->add_option("--tol", o.tol, "verification tolerance");
  cmd->add_option("--seed", o.seed, "seed for scan directions");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--format", o.format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_flag("--no-timestamp", o.no_timestamp, "omit the timestamp field from reports");
}

LoadedProblem load_from_opts(const CommonOpts& o) {
  if (octool::builtins::is_builtin(o.problem_path)) {
    auto b = octool::builtins::make(o.problem_path);
    return LoadedProblem{std::move(b.problem), std::move(b.family), o.problem_path};
  }
  return load_problem(o.problem_path);
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&tt));
  return buf;
}

octool::report::Json meta_json(const std::string& command, const CommonOpts& o, const Vec& pi) {
  octool::report::Json meta;
  meta["command"] = command;
  meta["problem"] = o.problem_path;
  meta["pi"] = octool::report::vec_json(pi);
  meta["seed"] = o.seed;
  meta["tol"] = o.tol;
  if (!o.no_timestamp) meta["timestamp"] = timestamp_now();
  return meta;
}

// Candidate process for verify/simulate: an explicit control, the analytic
// family, or the shooting solver.
Process candidate_process(const LoadedProblem& lp, const Vec& pi, const std::string& control_const,
                          const std::string& control_expr, bool prefer_shooting) {
  const BolzaProblem& P = lp.problem;
  if (!control_const.empty()) {
    const Vec uv = parse_vec(control_const, P.control_dim, "--control-const");
    PiecewiseFn u = PiecewiseFn::constant(P.horizon, uv);
    return Process{octool::flow::integrate_cauchy(P, u, pi), std::move(u), pi};
  }
  if (!control_expr.empty()) {
    octool::expr::Dims dims{0, 0, P.param_dim};
    std::vector<octool::expr::Expr> comps;
    std::stringstream ss(control_expr);
    std::string item;
    while (std::getline(ss, item, ';')) comps.push_back(octool::expr::Expr::parse(item, dims));
    if (static_cast<int>(comps.size()) != P.control_dim)
      throw std::invalid_argument("--control-expr: need one expression per control component");
    auto cp = std::make_shared<const std::vector<octool::expr::Expr>>(std::move(comps));
    const Vec pic = pi;
    PiecewiseFn u = PiecewiseFn::smooth(P.horizon, P.control_dim, [cp, pic](double t) -> Vec {
      Vec out(cp->size());
      octool::expr::EvalPoint pt{t, Vec(), Vec(), pic};
      for (std::size_t i = 0; i < cp->size(); ++i) out[i] = (*cp)[i].eval(pt);
      return out;
    });
    return Process{octool::flow::integrate_cauchy(P, u, pi), std::move(u), pi};
  }
  if (prefer_shooting || !lp.family) {
    try {
      return octool::pmp::shooting_solve(P, pi, Vec::Zero(P.state_dim),
                                         Vec::Zero(P.equality_count()))
          .process;
    } catch (const octool::UnsupportedProblemError&) {
      if (!lp.family) throw;
    }
  }
  return (*lp.family)(pi);
}

octool::envelope::SolutionFamily family_for(const LoadedProblem& lp, const Vec& pi) {
  if (lp.family) return *lp.family;
  return octool::envelope::make_shooting_family(lp.problem, pi, 0.5 * (1.0 + pi.norm()));
}

int cmd_simulate(const CommonOpts& o, const std::string& control_const,
                 const std::string& control_expr) {
  const LoadedProblem lp = load_from_opts(o);
  const Vec pi = parse_vec(o.pi_text, lp.problem.param_dim, "--pi");
  Process proc = candidate_process(lp, pi, control_const, control_expr, false);
  const double J = octool::criterion(lp.problem, proc);
  const auto rep = octool::validate_process(lp.problem, proc, lp.problem.feasibility_tol);

  octool::report::Json out;
  out["kind"] = "simulation";
  out["meta"] = meta_json("simulate", o, pi);
  out["criterion"] = J;
  out["feasibility"] = {{"dynamics_residual", rep.dynamics_residual},
                        {"initial_error", rep.initial_error},
                        {"inequality_slack", octool::report::vec_json(rep.inequality_slack)},
                        {"equality_violation", octool::report::vec_json(rep.equality_violation)},
                        {"feasible", rep.feasible()}};
  write_file(fs::path(o.out_dir) / "report.json", out.dump(2) + "\n");
  write_file(fs::path(o.out_dir) / "trajectory.csv", octool::report::trajectory_csv(proc));
  write_file(fs::path(o.out_dir) / "control.json", octool::to_json(proc.u) + "\n");
  std::cout << "criterion " << J << "\n";
  return kExitOk;
}

int cmd_verify(const CommonOpts& o, const std::string& control_const,
               const std::string& control_expr, double perturb) {
  const LoadedProblem lp = load_from_opts(o);
  const BolzaProblem& P = lp.problem;
  const Vec pi = parse_vec(o.pi_text, P.param_dim, "--pi");
  Process proc = candidate_process(lp, pi, control_const, control_expr, true);
  if (perturb != 0.0) {
    PiecewiseFn u = octool::linear_combination(
        1.0, proc.u, 1.0, PiecewiseFn::constant(P.horizon, Vec::Constant(P.control_dim, perturb)));
    proc = Process{octool::flow::integrate_cauchy(P, u, pi), std::move(u), pi};
  }
  octool::pmp::VerifyOptions vopts;
  vopts.tol = o.tol;
  const auto cert = octool::pmp::certify(P, proc, vopts);
  const auto feas = octool::validate_process(P, proc, P.feasibility_tol);

  octool::report::Json out = octool::report::certificate_json(cert);
  out["meta"] = meta_json("verify", o, pi);
  out["feasibility"] = {{"dynamics_residual", feas.dynamics_residual},
                        {"initial_error", feas.initial_error},
                        {"inequality_slack", octool::report::vec_json(feas.inequality_slack)},
                        {"equality_violation", octool::report::vec_json(feas.equality_violation)},
                        {"feasible", feas.feasible()}};
  write_file(fs::path(o.out_dir) / "certificate.json", out.dump(2) + "\n");
  for (const auto& [name, c] : cert.conditions) {
    std::cout << name << ": "
              << (c.verdict == octool::pmp::Verdict::Pass
                      ? "pass"
                      : c.verdict == octool::pmp::Verdict::Fail ? "FAIL" : "not-checked")
              << " (residual " << c.residual << ")\n";
  }
  if (!feas.feasible()) std::cout << "candidate process infeasible\n";
  if (cert.degenerate) return kExitDegenerate;
  if (cert.any_failed() || !feas.feasible()) return kExitVerifyFailed;
  return kExitOk;
}

std::vector<octool::flow::Spike> load_spikes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open spike file '" + path + "'");
  json sj;
  in >> sj;
  std::vector<octool::flow::Spike> spikes;
  for (const auto& row : sj) {
    octool::flow::Spike s;
    s.time = row.at(0).get<double>();
    Vec v(row.size() - 1);
    for (std::size_t i = 1; i < row.size(); ++i) v[i - 1] = row[i].get<double>();
    s.value = v;
    spikes.push_back(std::move(s));
  }
  return spikes;
}

int cmd_envelope(const CommonOpts& o, const std::string& dpi_text, const std::string& fd_text,
                 bool scan_multipliers, bool scan_adjoint, bool scan_gradient,
                 const std::string& needle_spikes) {
  const LoadedProblem lp = load_from_opts(o);
  const BolzaProblem& P = lp.problem;
  const Vec pi = parse_vec(o.pi_text, P.param_dim, "--pi");
  const Vec dpi = dpi_text.empty() ? Vec::Ones(P.param_dim)
                                   : parse_vec(dpi_text, P.param_dim, "--dpi");
  const auto family = family_for(lp, pi);

  octool::envelope::EnvelopeReport rep;
  try {
    rep = octool::envelope::envelope_directional(P, family, pi, dpi);
  } catch (const octool::RankDeficiencyError& e) {
    std::cerr << "envelope: " << e.what() << "\n";
    return kExitDegenerate;
  }
  std::vector<double> steps;
  if (fd_text.empty()) {
    steps = {1e-2, 1e-3, 1e-4, 1e-5};
  } else {
    const Vec s = parse_vec(fd_text, -1, "--fd-h");
    for (int i = 0; i < s.size(); ++i) steps.push_back(s[i]);
  }
  const auto fd = octool::envelope::value_fd_oracle(P, family, pi, dpi, steps);

  octool::report::Json out = octool::report::envelope_json(rep, fd);
  out["meta"] = meta_json("envelope", o, pi);

  octool::envelope::ScanOptions sopts;
  sopts.seed = o.seed ^ 0x5EED;
  const auto radii = octool::envelope::default_shell_radii();
  if (scan_multipliers) {
    const auto scan = octool::envelope::multiplier_continuity_scan(P, family, pi, radii, sopts);
    out["multiplier_scan"] = octool::report::multiplier_scan_json(scan);
    if (o.format == "csv")
      write_file(fs::path(o.out_dir) / "multiplier_shells.csv",
                 octool::report::shell_table_csv(scan));
  }
  if (scan_adjoint) {
    const auto scan = octool::envelope::adjoint_continuity_scan(P, family, pi, radii, sopts);
    out["adjoint_scan"] = octool::report::adjoint_scan_json(scan);
    if (o.format == "csv")
      write_file(fs::path(o.out_dir) / "adjoint_shells.csv",
                 octool::report::adjoint_shell_table_csv(scan));
  }
  if (scan_gradient) {
    const auto scan = octool::envelope::frechet_continuity_check(P, family, pi, radii, sopts);
    out["gradient_scan"] = octool::report::frechet_json(scan);
  }
  if (!needle_spikes.empty()) {
    const octool::flow::SpikeList S(load_spikes(needle_spikes), P.horizon);
    const Process proc = family(pi);
    Vec base = Vec::Constant(S.size(), 1.0 / static_cast<double>(S.size()));
    base *= 0.25 * std::min(S.min_gap(), P.horizon / 8.0);
    base *= octool::flow::discover_amplitude_guard(P, proc, S, base);
    std::vector<Vec> amplitudes;
    for (int k = 0; k < 6; ++k) amplitudes.push_back(base / std::pow(2.0, k));
    const auto rows = octool::flow::expansion_residual_study(P, proc, S, amplitudes);
    write_file(fs::path(o.out_dir) / "residual_study.csv",
               octool::flow::residual_study_csv(rows));
  }
  write_file(fs::path(o.out_dir) / "envelope.json", out.dump(2) + "\n");
  std::cout << "total " << rep.total << " (fd " << fd.richardson << ")\n";
  return kExitOk;
}

int cmd_needle_study(const CommonOpts& o, const std::string& spikes_path, int levels,
                     double scale) {
  const LoadedProblem lp = load_from_opts(o);
  const BolzaProblem& P = lp.problem;
  const Vec pi = parse_vec(o.pi_text, P.param_dim, "--pi");
  Process proc = candidate_process(lp, pi, "", "", false);

  const octool::flow::SpikeList S(load_spikes(spikes_path), P.horizon);

  Vec base = Vec::Constant(S.size(), 1.0 / static_cast<double>(S.size()));
  double a0 = scale;
  if (!(a0 > 0.0)) a0 = 0.25 * std::min(S.min_gap(), P.horizon / 8.0);
  base *= a0;
  base *= octool::flow::discover_amplitude_guard(P, proc, S, base);

  std::vector<Vec> amplitudes;
  for (int k = 0; k < levels; ++k) amplitudes.push_back(base / std::pow(2.0, k));
  const auto rows = octool::flow::expansion_residual_study(P, proc, S, amplitudes);
  write_file(fs::path(o.out_dir) / "residual_study.csv", octool::flow::residual_study_csv(rows));

  octool::report::Json out;
  out["kind"] = "needle_study";
  out["meta"] = meta_json("needle-study", o, pi);
  out["levels"] = levels;
  out["rows"] = octool::report::Json::array();
  for (const auto& r : rows) {
    out["rows"].push_back({{"norm_a1", r.amplitude_l1},
                           {"residual_norm", r.residual_norm},
                           {"gronwall_ratio", r.gronwall_ratio},
                           {"status", r.ok ? "ok" : "failed"}});
  }
  write_file(fs::path(o.out_dir) / "report.json", out.dump(2) + "\n");
  return kExitOk;
}

int cmd_shoot(const CommonOpts& o, const std::string& p0_text, const std::string& mu0_text) {
  const LoadedProblem lp = load_from_opts(o);
  const BolzaProblem& P = lp.problem;
  const Vec pi = parse_vec(o.pi_text, P.param_dim, "--pi");
  const Vec p0 = p0_text.empty() ? Vec::Zero(P.state_dim)
                                 : parse_vec(p0_text, P.state_dim, "--p0");
  const Vec mu0 = mu0_text.empty() ? Vec::Zero(P.equality_count())
                                   : parse_vec(mu0_text, P.equality_count(), "--mu0");
  const auto res = octool::pmp::shooting_solve(P, pi, p0, mu0);
  octool::pmp::VerifyOptions vopts;
  vopts.tol = o.tol;
  const auto cert =
      octool::pmp::verify_certificate(P, res.process, res.multipliers, res.adjoint, vopts);

  octool::report::Json out = octool::report::certificate_json(cert);
  out["meta"] = meta_json("shoot", o, pi);
  out["criterion"] = octool::criterion(P, res.process);
  out["residual_history"] = res.residual_history;
  write_file(fs::path(o.out_dir) / "certificate.json", out.dump(2) + "\n");
  write_file(fs::path(o.out_dir) / "trajectory.csv", octool::report::trajectory_csv(res.process));
  std::cout << "converged in " << res.residual_history.size() - 1 << " iterations, criterion "
            << out["criterion"].get<double>() << "\n";
  return cert.all_passed() ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimal-control verification toolkit"};
  app.require_subcommand(1);

  CommonOpts so, vo, eo, no, ho;
  std::string control_const, control_expr, v_control_const, v_control_expr;
  double perturb = 0.0;
  std::string dpi_text, fd_text, spikes_path, p0_text, mu0_text, needle_spikes;
  bool scan_multipliers = false, scan_adjoint = false, scan_gradient = false;
  int levels = 6;
  double spike_scale = 0.0;

  auto* simulate = app.add_subcommand("simulate", "integrate a candidate process");
  add_common(simulate, so);
  simulate->add_option("--control-const", control_const, "constant control vector");
  simulate->add_option("--control-expr", control_expr,
                       "control expressions in t and p<i>, ';' separated");

  auto* verify = app.add_subcommand("verify", "check the maximum-principle conditions");
  add_common(verify, vo);
  verify->add_option("--control-const", v_control_const, "candidate control vector");
  verify->add_option("--control-expr", v_control_expr, "candidate control expressions");
  verify->add_option("--perturb", perturb, "constant offset added to the candidate control");

  auto* env = app.add_subcommand("envelope", "value-function sensitivity report");
  add_common(env, eo);
  env->add_option("--dpi", dpi_text, "direction in parameter space");
  env->add_option("--fd-h", fd_text, "finite-difference steps, comma separated");
  env->add_flag("--scan-multipliers", scan_multipliers, "multiplier continuity shells");
  env->add_flag("--scan-adjoint", scan_adjoint, "adjoint continuity shells");
  env->add_flag("--scan-gradient", scan_gradient, "gradient continuity shells");
  env->add_option("--needle", needle_spikes,
                  "spike file: also run the expansion residual study");

  auto* needle = app.add_subcommand("needle-study", "first-order expansion residual table");
  add_common(needle, no);
  needle->add_option("--spikes", spikes_path, "spike file: JSON [[t, v...], ...]")->required();
  needle->add_option("--levels", levels, "number of geometric amplitude levels");
  needle->add_option("--scale", spike_scale, "base total amplitude (default: auto)");

  auto* shoot = app.add_subcommand("shoot", "indirect shooting solve");
  add_common(shoot, ho);
  shoot->add_option("--p0", p0_text, "initial adjoint guess");
  shoot->add_option("--mu0", mu0_text, "equality multiplier guess");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(so, control_const, control_expr);
    if (verify->parsed()) return cmd_verify(vo, v_control_const, v_control_expr, perturb);
    if (env->parsed())
      return cmd_envelope(eo, dpi_text, fd_text, scan_multipliers, scan_adjoint, scan_gradient,
                          needle_spikes);
    if (needle->parsed()) return cmd_needle_study(no, spikes_path, levels, spike_scale);
    if (shoot->parsed()) return cmd_shoot(ho, p0_text, mu0_text);
  } catch (const octool::RankDeficiencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const octool::IntegrationError& e) {
    std::cerr << "error: " << e.what() << " (t = " << e.escape_time() << ")\n";
    return kExitNumeric;
  } catch (const octool::NoConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const octool::UnsupportedProblemError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const octool::expr::ParseError& e) {
    std::cerr << "error: " << e.what() << " (offset " << e.offset << ")\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
