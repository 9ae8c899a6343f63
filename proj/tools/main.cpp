// Command-line front end: every experiment kind is a subcommand reading a
// strict JSON config, with reproducible seeding and deterministic outputs.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "jumplab/config.hpp"
#include "jumplab/errors.hpp"
#include "jumplab/runner.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw jumplab::usage_error("cannot open config file " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jumplab: jump-SDE coupling / ergodicity laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool seed_set = false;

  const std::vector<std::string> kinds = {"simulate",       "couple",
                                          "irreducibility", "ergodicity",
                                          "check",          "lemma21"};
  for (const auto& kind : kinds) {
    auto* sub = app.add_subcommand(kind, "run a " + kind + " experiment");
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed override")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--threads", threads, "worker threads override");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string kind = app.get_subcommands().front()->get_name();

  try {
    auto cfg = jumplab::config::parse_config(slurp(config_path));
    if (jumplab::config::kind_name(cfg.kind) != kind) {
      std::cerr << "error: config declares experiment '"
                << jumplab::config::kind_name(cfg.kind)
                << "' but subcommand is '" << kind << "'\n";
      return 2;
    }
    const auto result = jumplab::runner::run_experiment(
        cfg, out_dir,
        seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
        threads > 0 ? std::optional<int>(threads) : std::nullopt);
    return result.exit_code;
  } catch (const jumplab::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    for (const auto& issue : e.issues) std::cerr << "  - " << issue << "\n";
    return 2;
  } catch (const jumplab::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
