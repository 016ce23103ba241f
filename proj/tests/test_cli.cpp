#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::path("cli_work");

int run(const std::string& args) {
  const std::string cmd = std::string(OCTOOL_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << content;
}

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST_CASE("simulate: steering optimum reports the analytic criterion") {
  Workspace ws;
  const int code = run("simulate --problem steering --pi 1.0 --out " + (kWork / "sim").string() +
                       " --no-timestamp");
  CHECK(code == 0);
  const json rep = json::parse(slurp(kWork / "sim" / "report.json"));
  CHECK(std::abs(rep["criterion"].get<double>() - (-0.5)) <= 1e-9);
  CHECK(rep["feasibility"]["feasible"].get<bool>());
  CHECK(fs::exists(kWork / "sim" / "trajectory.csv"));
  const json ctrl = json::parse(slurp(kWork / "sim" / "control.json"));
  CHECK(ctrl["T"].get<double>() == 1.0);
  CHECK(ctrl.contains("samples"));
}

TEST_CASE("simulate: constant drift gives straight-line samples") {
  Workspace ws;
  const int code = run("simulate --problem constant_drift --pi 2.0 --out " +
                       (kWork / "drift").string() + " --no-timestamp");
  CHECK(code == 0);
  const std::string csv = slurp(kWork / "drift" / "trajectory.csv");
  CHECK(csv.find("t,x1,u1") == 0);
  const json rep = json::parse(slurp(kWork / "drift" / "report.json"));
  CHECK(std::abs(rep["criterion"].get<double>() - 2.0) <= 1e-9);
}

TEST_CASE("simulate: malformed problem file exits 1") {
  Workspace ws;
  put(kWork / "broken.json", "{ not json ");
  CHECK(run("simulate --problem " + (kWork / "broken.json").string() + " --pi 0") == 1);
  put(kWork / "unknown_key.json",
      R"({"builtin": "steering", "horizont": 1.0})");
  CHECK(run("simulate --problem " + (kWork / "unknown_key.json").string() + " --pi 0") == 1);
}

TEST_CASE("verify: shooting candidate on lq_scalar passes") {
  Workspace ws;
  const int code = run("verify --problem lq_scalar --pi 0.0 --out " +
                       (kWork / "lq").string() + " --no-timestamp");
  CHECK(code == 0);
  const json cert = json::parse(slurp(kWork / "lq" / "certificate.json"));
  CHECK(cert["conditions"]["MP"]["verdict"] == "pass");
  CHECK(cert["conditions"]["TC"]["verdict"] == "pass");
  CHECK_FALSE(cert["degenerate"].get<bool>());
}

TEST_CASE("verify: perturbed control fails the maximization check, exit 2") {
  Workspace ws;
  const int code = run("verify --problem lq_scalar --pi 0.0 --perturb 0.1 --out " +
                       (kWork / "bad").string() + " --no-timestamp");
  CHECK(code == 2);
  const json cert = json::parse(slurp(kWork / "bad" / "certificate.json"));
  CHECK(cert["conditions"]["MP"]["verdict"] == "fail");
}

TEST_CASE("verify: rank-deficient constraints exit 3") {
  Workspace ws;
  put(kWork / "dup.json", R"({
    "state_dim": 1, "control_dim": 1, "param_dim": 1,
    "horizon": 1.0, "xi0": [0.0],
    "f0": "-(u1^2)/2", "f": ["u1"],
    "h": ["x1 - p1", "x1 - p1"]
  })");
  const int code = run("verify --problem " + (kWork / "dup.json").string() +
                       " --pi 1.0 --control-const 1.0 --out " + (kWork / "dup").string() +
                       " --no-timestamp");
  CHECK(code == 3);
  const json cert = json::parse(slurp(kWork / "dup" / "certificate.json"));
  CHECK(cert["degenerate"].get<bool>());
}

TEST_CASE("envelope: steering total and FD agreement; parameter-free total is zero") {
  Workspace ws;
  int code = run("envelope --problem steering --pi 1.0 --dpi 1.0 --out " +
                 (kWork / "env").string() + " --no-timestamp");
  CHECK(code == 0);
  const json rep = json::parse(slurp(kWork / "env" / "envelope.json"));
  CHECK(std::abs(rep["total"].get<double>() - (-1.0)) <= 1e-9);
  CHECK(rep["fd_error"].get<double>() <= 1e-7);

  put(kWork / "free.json", R"({
    "state_dim": 1, "control_dim": 1, "param_dim": 1,
    "horizon": 1.0, "xi0": [0.0],
    "f0": "-(u1^2)/2 - x1^2", "f": ["u1"]
  })");
  code = run("envelope --problem " + (kWork / "free.json").string() +
             " --pi 0.0 --dpi 1.0 --out " + (kWork / "free").string() + " --no-timestamp");
  CHECK(code == 0);
  const json frep = json::parse(slurp(kWork / "free" / "envelope.json"));
  CHECK(std::abs(frep["total"].get<double>()) <= 1e-9);
}

TEST_CASE("envelope: scans are emitted on request") {
  Workspace ws;
  const int code = run(
      "envelope --problem steering --pi 1.0 --dpi 1.0 --scan-multipliers --scan-adjoint "
      "--scan-gradient --format csv --out " +
      (kWork / "scans").string() + " --no-timestamp");
  CHECK(code == 0);
  const json rep = json::parse(slurp(kWork / "scans" / "envelope.json"));
  CHECK(rep.contains("multiplier_scan"));
  CHECK(rep.contains("adjoint_scan"));
  CHECK(rep.contains("gradient_scan"));
  CHECK(rep["multiplier_scan"]["monotone_decreasing"].get<bool>());
  const std::string csv = slurp(kWork / "scans" / "multiplier_shells.csv");
  CHECK(csv.find("radius,deviation,status") == 0);
}

TEST_CASE("needle-study emits the residual table") {
  Workspace ws;
  put(kWork / "spikes.json", "[[0.25, 0.6], [0.5, -0.4], [0.75, 0.2]]");
  const int code = run("needle-study --problem lq_scalar --pi 0.0 --spikes " +
                       (kWork / "spikes.json").string() + " --levels 4 --out " +
                       (kWork / "needle").string() + " --no-timestamp");
  CHECK(code == 0);
  const std::string csv = slurp(kWork / "needle" / "residual_study.csv");
  CHECK(csv.find("norm_a1,residual_norm,gronwall_ratio,status") == 0);
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 5);  // header + 4 levels
}

TEST_CASE("shoot: converges on steering and writes the certificate") {
  Workspace ws;
  const int code = run("shoot --problem steering --pi 1.0 --out " + (kWork / "shoot").string() +
                       " --no-timestamp");
  CHECK(code == 0);
  const json cert = json::parse(slurp(kWork / "shoot" / "certificate.json"));
  CHECK(std::abs(cert["criterion"].get<double>() - (-0.5)) <= 1e-8);
}

TEST_CASE("determinism: identical runs produce byte-identical reports") {
  Workspace ws;
  const std::string args =
      "envelope --problem lq_scalar --pi 0.1 --dpi 1.0 --scan-multipliers --seed 7 "
      "--no-timestamp --out ";
  CHECK(run(args + (kWork / "a").string()) == 0);
  CHECK(run(args + (kWork / "b").string()) == 0);
  CHECK(slurp(kWork / "a" / "envelope.json") == slurp(kWork / "b" / "envelope.json"));

  const std::string vargs = "verify --problem lq_scalar --pi 0.0 --no-timestamp --out ";
  CHECK(run(vargs + (kWork / "va").string()) == 0);
  CHECK(run(vargs + (kWork / "vb").string()) == 0);
  CHECK(slurp(kWork / "va" / "certificate.json") == slurp(kWork / "vb" / "certificate.json"));
}

TEST_CASE("envelope --needle emits the residual table") {
  Workspace ws;
  put(kWork / "spikes.json", "[[0.5, 0.4]]");
  const int code = run("envelope --problem lq_scalar --pi 0.0 --dpi 1.0 --needle " +
                       (kWork / "spikes.json").string() + " --out " +
                       (kWork / "envneedle").string() + " --no-timestamp");
  CHECK(code == 0);
  const std::string csv = slurp(kWork / "envneedle" / "residual_study.csv");
  CHECK(csv.find("norm_a1,residual_norm,gronwall_ratio,status") == 0);
}

TEST_CASE("envelope: vanishing control authority at T exits 3") {
  Workspace ws;
  // f_u(T) = 0 makes the composed terminal-gradient family rank deficient,
  // so the normalized multipliers of the sensitivity formula do not exist.
  put(kWork / "fade.json", R"({
    "state_dim": 1, "control_dim": 1, "param_dim": 1,
    "horizon": 1.0, "xi0": [0.0],
    "f0": "-(u1^2)/2", "f": ["(1-t)*u1"],
    "h": ["x1 - p1"]
  })");
  const int code = run("envelope --problem " + (kWork / "fade.json").string() +
                       " --pi 0.2 --dpi 1.0 --out " + (kWork / "fade").string() +
                       " --no-timestamp");
  CHECK(code == 3);
}

TEST_CASE("simulate: integration blow-up exits 4") {
  Workspace ws;
  put(kWork / "blowup.json", R"({
    "state_dim": 1, "control_dim": 1, "param_dim": 0,
    "horizon": 2.0, "xi0": [1.0],
    "f0": "0", "f": ["x1^2 + u1"]
  })");
  const int code = run("simulate --problem " + (kWork / "blowup.json").string() +
                       " --control-const 1.0 --out " + (kWork / "blow").string());
  CHECK(code == 4);
}

TEST_CASE("config errors exit 1") {
  Workspace ws;
  CHECK(run("simulate --problem does_not_exist.json --pi 0") == 1);
  CHECK(run("simulate --problem steering --pi 1.0,2.0") == 1);  // wrong dimension
}
