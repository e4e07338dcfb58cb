#include "deltasurf/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Bound states of delta interactions on surfaces"};
  app.require_subcommand(1);
  deltasurf::RunRequest req;
  std::uint64_t seed = 0;
  std::string out = ".";

  const std::map<std::string, std::string> help{
      {"geometry", "mesh the surface and tabulate K, M and W per vertex"},
      {"surface-modes", "Dirichlet eigenvalues of -Laplace-Beltrami + W"},
      {"transverse", "ground state of the one-dimensional transverse operator"},
      {"bs-solve", "bound states from the single-layer boundary integral formulation"},
      {"sweep", "strong-coupling sweep, remainder fit and bound cross-check"}};
  for (const auto& name : deltasurf::subcommands()) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", req.config_path, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", req.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "seed for randomized sampling; overrides the config");
    sub->callback([&req, name] { req.subcommand = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : deltasurf::kExitConfig;
  }
  for (const auto& name : deltasurf::subcommands())
    if (app.get_subcommand(name)->count("--seed") > 0) req.seed = seed;
  req.out_dir = out;
  return deltasurf::run(req);
}
