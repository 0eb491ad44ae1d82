#pragma once

// Command-line front end. Exit statuses: 0 success, 1 usage, validation or
// I/O error, 2 numerical failure or a failed verify check.

#include "kmcex/common.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace kmcex::cli {

/// Bad command line; the message names the offending flag.
class UsageError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

enum class Subcommand { Synth, Fit, Sweep, Online, Verify, Gridsearch };

const char* to_string(Subcommand s);

struct CliInvocation {
  Subcommand subcommand = Subcommand::Verify;
  /// Flags given on the command line, keyed without the leading dashes.
  std::map<std::string, std::string> flags;

  [[nodiscard]] bool has(const std::string& flag) const { return flags.count(flag) != 0; }
  [[nodiscard]] const std::string& get(const std::string& flag) const;
};

/// Parses and validates argv, including the existence of input paths and of
/// the directories receiving outputs. Throws UsageError.
CliInvocation parse_args(const std::vector<std::string>& args);

/// Runs a parsed invocation; results go to the declared output paths or `out`,
/// messages to `err`. Returns the exit status.
int run(const CliInvocation& invocation, std::ostream& out, std::ostream& err);

/// parse_args followed by run, mapping exceptions to exit statuses.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kmcex::cli
