#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "dipred/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace dipred::pipeline;

  CLI::App app{"Dynamic-image prediction pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, out = "out";
  std::vector<std::string> sets;
  std::string seed;
  bool force = false, quiet = false;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", sets, "override one config key (key=value), repeatable");
  app.add_option("--seed", seed, "root seed");
  app.add_option("--out", out, "output directory");
  app.add_flag("--force", force, "overwrite existing output");
  app.add_flag("-q,--quiet", quiet, "log to file only");

  bool print_config = false;
  auto* show = app.add_subcommand("config", "print the resolved config");
  show->add_flag("--defaults", print_config, "ignore --config and --set");
  for (const auto& [name, fn] : commands()) app.add_subcommand(name, "run the " + name + " stage");

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx;
    if (!print_config) {
      if (!config_path.empty()) ctx.cfg.load_file(config_path);
      for (const auto& kv : sets) ctx.cfg.set_assignment(kv);
      if (!seed.empty()) ctx.cfg.set("seed", seed);
      ctx.cfg.u64("seed");
    }
    ctx.out = out;
    ctx.force = force;
    ctx.echo = !quiet;
    const auto name = app.get_subcommands().front()->get_name();
    if (name == "config") {
      std::fputs(ctx.cfg.dump().c_str(), stdout);
      return 0;
    }
    commands().at(name)(ctx);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dipred: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
