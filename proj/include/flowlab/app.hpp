#pragma once

// Configuration-driven front end. A run is described by one JSON object
// (file plus flag overrides); the report embeds the resolved configuration,
// its FNV-1a hash and the seed, and contains nothing run-specific beyond
// that, so repeated runs reproduce it byte for byte.

#include "flowlab/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace flowlab {

inline constexpr const char* kReportSchema = "flowlab/1";

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitInvalidEstimate = 3 };

/// Validation failure with a source position (line 0 when unknown).
class ConfigError : public ContractError {
 public:
  ConfigError(const std::string& message, std::size_t line = 0, std::size_t column = 0)
      : ContractError(message), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

const std::vector<std::string>& command_names();

/// Parses config text. Syntax errors carry the line and column of the fault.
nlohmann::json parse_config_text(const std::string& text);

/// Checks keys and value types of a raw config. `text`, when non-empty, is
/// used to attach line numbers to the offending keys.
void validate_config(const nlohmann::json& config, const std::string& text = {});

/// Keys that never influence results and are kept out of the report.
bool is_presentation_key(const std::string& key);

std::uint64_t fnv1a64(const std::string& bytes);
std::string config_hash(const nlohmann::json& resolved);

struct RunOutput {
  int exit_code = kExitOk;
  nlohmann::json report;
  std::string csv;          // RFC-4180, CRLF line endings
};

/// Executes config["command"]. Throws ConfigError / ContractError on invalid input.
RunOutput run(const nlohmann::json& config);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);
/// Shortest round-trip decimal form with '.' as separator.
std::string format_number(double v);

/// Command-line entry point: subcommands, --config, flag overrides, FLOWLAB_SEED.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace flowlab
