#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "corrmem/harness.hpp"

int main(int argc, char** argv) {
  namespace h = corrmem::harness;
  CLI::App app{"corrmem: correlated-error memory experiments"};
  app.set_version_flag("--version", std::string(CORRMEM_VERSION));

  h::RunRequest req;
  std::string config, out;
  std::uint64_t seed = 0;
  app.add_option("kind", req.kind,
                 "mixing | covariance | adversarial-scan | retention | tails | scaling | verify-all")
      ->required();
  app.add_option("--config", config, "experiment config (JSON)")->required();
  auto* out_opt = app.add_option("--out", out, "output directory (overrides output.dir)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config seed)");
  app.add_option("--threads", req.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return h::kExitConfig;
  }
  req.config = config;
  if (*out_opt) req.out = out;
  if (*seed_opt) req.seed = seed;
  return h::run(req, std::cerr);
}
