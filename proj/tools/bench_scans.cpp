// Benchmark of the scan kernels: serial reference vs the OpenMP path.
// Results must match bitwise; timings are printed per kernel.

#include <chrono>
#include <cstdio>
#include <vector>

#include "octool/builtins.hpp"
#include "octool/envelope.hpp"
#include "octool/flow.hpp"
#include "octool/parallel.hpp"
#include "octool/pmp.hpp"

using namespace octool;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double timed(F&& fn) {
  fn();  // warm-up pass so caches and lazy tables do not bias the first timing
  const auto t0 = Clock::now();
  fn();
  return seconds_since(t0);
}

void report(const char* name, double serial, double parallel, bool equal) {
  std::printf("%-28s serial %8.3fs   parallel %8.3fs   speedup %5.2fx   %s\n", name, serial,
              parallel, serial / parallel, equal ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", par::max_threads());
  auto lq = builtins::lq_scalar();
  const Vec pi0 = Vec::Zero(1);
  const Process proc = lq.family(pi0);

  {
    std::vector<flow::Spike> spikes;
    for (double t : {0.25, 0.5, 0.75}) spikes.push_back({t, Vec::Constant(1, 0.5)});
    const flow::SpikeList S(spikes, lq.problem.horizon);
    std::vector<Vec> amplitudes;
    for (int k = 0; k < 48; ++k)
      amplitudes.push_back(Vec::Constant(3, 0.02 / 3.0 / std::pow(1.15, k)));
    std::vector<flow::ResidualStudyRow> rs, rp;
    const double ts = timed([&] {
      rs = flow::expansion_residual_study(lq.problem, proc, S, amplitudes,
                                          par::ExecPolicy::Serial);
    });
    const double tp = timed([&] {
      rp = flow::expansion_residual_study(lq.problem, proc, S, amplitudes,
                                          par::ExecPolicy::Parallel);
    });
    bool equal = rs.size() == rp.size();
    for (std::size_t i = 0; equal && i < rs.size(); ++i)
      equal = rs[i].residual_norm == rp[i].residual_norm &&
              rs[i].gronwall_ratio == rp[i].gronwall_ratio;
    report("expansion_residual_study", ts, tp, equal);
  }

  {
    const pmp::Multipliers mult = pmp::solve_multipliers(lq.problem, proc);
    const auto adj = pmp::adjoint_backward(lq.problem, proc, 1.0,
                                           pmp::transversality_terminal(lq.problem, proc, mult));
    pmp::VerifyOptions vs, vp;
    vs.policy = par::ExecPolicy::Serial;
    vp.policy = par::ExecPolicy::Parallel;
    vs.time_samples_per_segment = vp.time_samples_per_segment = 512;
    pmp::PMPCertificate cs, cp;
    const double ts =
        timed([&] { cs = pmp::verify_certificate(lq.problem, proc, mult, adj, vs); });
    const double tp =
        timed([&] { cp = pmp::verify_certificate(lq.problem, proc, mult, adj, vp); });
    const bool equal = cs.conditions.at("MP").residual == cp.conditions.at("MP").residual;
    report("verify (MP scan)", ts, tp, equal);
  }

  {
    envelope::ScanOptions ss, sp;
    ss.policy = par::ExecPolicy::Serial;
    sp.policy = par::ExecPolicy::Parallel;
    ss.directions_per_shell = sp.directions_per_shell = 16;
    const auto radii = envelope::default_shell_radii();
    envelope::AdjointScan as, ap;
    const double ts = timed(
        [&] { as = envelope::adjoint_continuity_scan(lq.problem, lq.family, pi0, radii, ss); });
    const double tp = timed(
        [&] { ap = envelope::adjoint_continuity_scan(lq.problem, lq.family, pi0, radii, sp); });
    bool equal = true;
    for (std::size_t r = 0; r < radii.size(); ++r)
      equal = equal && as.max_deviation[r] == ap.max_deviation[r];
    report("adjoint_continuity_scan", ts, tp, equal);
  }

  return 0;
}
