// greedyshift: command-line front end.
//
//   greedyshift fit          --config run.json --out dir
//   greedyshift rate-sweep   --config sweep.json --out dir --threads 4
//   greedyshift weights-diag --config diag.json --out dir
//   greedyshift simulate     --config scenario.json --out dir

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "greedyshift/harness/commands.hpp"
#include "greedyshift/version.hpp"

int main(int argc, char** argv) {
  namespace gh = greedyshift::harness;
  CLI::App app{"Greedy variable selection for regression under covariate shift"};
  app.set_version_flag("--version", std::string(greedyshift::kLibraryVersion));
  app.require_subcommand(1);

  gh::CommandOptions opt;
  std::string method;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON configuration file")->required();
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "overrides the configured seed");
    sub->add_option("--method", method, "iwoga+hdiwic, iwoga+hdiwic_s or oga+hdic");
    sub->add_option("--threads", opt.threads,
                    "worker threads (default: GREEDYSHIFT_THREADS, else 1)");
  };
  for (const char* name : {"fit", "rate-sweep", "weights-diag", "simulate"}) add_common(app.add_subcommand(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : gh::kExitValidation;
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--method")) opt.method = method;
  return gh::run_command(sub->get_name(), opt, std::cout, std::cerr);
}
