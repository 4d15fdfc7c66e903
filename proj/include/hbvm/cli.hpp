#pragma once

#include "hbvm/bvp_newton.hpp"
#include "hbvm/common.hpp"
#include "hbvm/method.hpp"
#include "hbvm/models.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hbvm::cli {

/// Bad, missing or unexpected configuration fields; maps to exit status 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Output files that cannot be written; maps to exit status 1.
class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNewton = 2;

/// Experiment kinds reachable from `hbvm run <kind>`.
const std::vector<std::string>& experiment_kinds();

using Value = std::variant<double, std::string, std::vector<double>>;

/// Typed experiment description. Keys are snake_case in TOML; flags use
/// dashes (`--guess-period-days` sets guess_period_days).
struct RunConfig {
  std::string kind;
  double mu = kSunEarthMu;
  int k = 6;
  int s = 2;
  int n = 100;
  NewtonOptions newton{1e-10, 50, 8, 3, JacobianMode::Exact};

  std::optional<double> T_days;             ///< period kinds
  std::optional<double> H;                  ///< energy kinds
  std::optional<double> guess_period_days;  ///< warm start from a period solve
  std::optional<double> guess_amplitude;
  std::optional<double> guess_aspect;

  std::optional<double> tf;     ///< hill-transfer
  std::vector<double> P1, P2;   ///< hill-transfer endpoints (planar states)
  std::optional<double> T1_days, H2;  ///< halo-transfer: inner orbit period, outer orbit energy

  std::string driver;           ///< continuation: one of the orbit kinds or hill-transfer
  std::vector<double> values;   ///< continuation parameters

  std::string model;            ///< ivp
  std::vector<double> y0;
  std::optional<double> h;
  int steps = 0;

  std::string csv, report, gnuplot;
  int oversample = 1;

  std::map<std::string, Value> fields;  ///< every field as given, echoed in the report
};

/// Merges the config file (top-level keys, then the table named after the kind)
/// with `--key value` overrides and validates the result for `kind`.
RunConfig load_config(const std::string& kind, const std::optional<std::string>& path,
                      const std::vector<std::pair<std::string, std::string>>& overrides);

/// CSV with header t,q1..qm,p1..pm,H,H_drift and one row per node, or
/// `oversample` rows per interval from the dense output. 17 significant digits.
void write_trajectory(const MeshSolution& mesh, const HamiltonianModel& model, const StagePartition& part,
                      const std::string& path, int oversample = 1);

/// Runs one experiment and writes its outputs. Returns the exit status.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full command line: `hbvm run <kind> [--config file.toml] [--key value ...]`.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hbvm::cli
