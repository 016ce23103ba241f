#ifndef OCTOOL_REPORT_HPP_
#define OCTOOL_REPORT_HPP_

#include <string>

#include <json.hpp>

#include "octool/envelope.hpp"
#include "octool/flow.hpp"
#include "octool/pmp.hpp"

namespace octool::report {

using Json = nlohmann::ordered_json;

Json vec_json(const Vec& v);
Json rowvec_json(const RowVec& v);

/// Certificate with per-condition {residual, tolerance, verdict}, the
/// multipliers, qualification diagnostics and adjoint samples. Reports embed
/// the tolerance set so they are self-describing.
Json certificate_json(const pmp::PMPCertificate& cert, int adjoint_samples = 33);

Json envelope_json(const envelope::EnvelopeReport& rep, const envelope::FdOracle& fd);

Json multiplier_scan_json(const envelope::ContinuityScan& scan);
Json adjoint_scan_json(const envelope::AdjointScan& scan);
Json frechet_json(const envelope::FrechetReport& rep);

std::string shell_table_csv(const envelope::ContinuityScan& scan);
std::string adjoint_shell_table_csv(const envelope::AdjointScan& scan);

/// Trajectory samples t, x..., u... as CSV.
std::string trajectory_csv(const Process& proc, int samples_per_segment = 16);

}  // namespace octool::report

#endif  // OCTOOL_REPORT_HPP_
