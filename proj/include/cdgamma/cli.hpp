#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdgamma/grid.hpp"
#include "cdgamma/model.hpp"

namespace cdgamma::cli {

inline constexpr const char* kReportSchema = "cdgamma-report/1";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "CDGAMMA_OUT_DIR";

enum ExitCode { kPass = 0, kVerdictFailure = 1, kSchemaViolation = 2, kComputeFailure = 3 };

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& commands();

// Validated job description. Sections hold the raw, already checked command
// options; unknown keys anywhere are rejected.
struct JobConfig {
  std::string model = "ornstein_uhlenbeck(1)";
  std::optional<GridSpec> grid;
  std::optional<CDParams> params;
  std::uint64_t seed = 1;
  std::optional<double> tol;
  int jobs = 1;
  std::string out;
  nlohmann::json certify = nlohmann::json::object(), heat = nlohmann::json::object(),
                 spectral = nlohmann::json::object(), transport = nlohmann::json::object(),
                 isoperimetry = nlohmann::json::object(), report = nlohmann::json::object();
};

JobConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const JobConfig& c);

// Grid used when the job gives none.
GridSpec default_grid(const ModelDescriptor& m);

// Report document without the timing header; deterministic for a fixed config.
struct CommandOutput {
  nlohmann::json checks = nlohmann::json::array();
  std::vector<double> seconds;  // wall time per check
  bool pass = true;
};
CommandOutput run_command(const std::string& command, const JobConfig& cfg,
                          const std::vector<std::string>& report_inputs = {});

nlohmann::json make_report(const std::string& command, const JobConfig& cfg, const CommandOutput& out,
                           const nlohmann::json& timing);
std::string margins_csv(const nlohmann::json& report);
std::string summary_table(const nlohmann::json& report);

// Full command line entry point; returns the process exit code.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdgamma::cli
