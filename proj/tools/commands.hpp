#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ffdfit::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInputError = 2,
  kSizeMismatch = 3,
  kFitFailed = 4,
  kBadConfig = 5,
  kEmptyDatabase = 6,
};

class CommandError : public std::runtime_error {
 public:
  CommandError(const std::string& what, int code) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
};

void register_commands(CLI::App& app, GlobalOptions& globals);

}  // namespace ffdfit::cli
