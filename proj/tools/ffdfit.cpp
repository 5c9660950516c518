#include "commands.hpp"

#include "ffdfit/errors.hpp"
#include "ffdfit/fit.hpp"

#include <fmt/core.h>

#include <cstdint>
#include <cstdio>
#include <exception>

int main(int argc, char** argv) {
  using namespace ffdfit;
  using namespace ffdfit::cli;

  CLI::App app{"Template retrieval and free-form deformation fitting for point clouds", "ffdfit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions globals;
  app.add_option_function<std::uint64_t>(
      "--seed",
      [&globals](const std::uint64_t& seed) {
        globals.seed = seed;
        globals.seed_given = true;
      },
      "Seed for every random choice (default 0)");
  app.add_flag("--quiet", globals.quiet, "Suppress informational messages");
  register_commands(app, globals);

  try {
    app.parse(argc, argv);
    return kOk;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const CommandError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.code();
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kBadConfig;
  } catch (const FileNotFound& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInputError;
  } catch (const ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInputError;
  } catch (const UnsupportedFormat& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInputError;
  } catch (const SizeMismatch& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kSizeMismatch;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  }
}
