// imfed_cli: run experiment configs and export presets.
//
//   imfed_cli run config.json [--seeds 1,2] [--output-dir DIR] [--parallelism N]
//   imfed_cli preset NAME [--out DIR] [--run]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "imfed/imfed.hpp"

namespace fs = std::filesystem;
using namespace imfed;

namespace {

struct Overrides {
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::size_t parallelism = 0;

  void apply(ExperimentConfig& c) const {
    if (!seeds.empty()) c.seeds = seeds;
    if (!output_dir.empty()) c.output_dir = output_dir;
    if (parallelism) c.federation.parallelism = parallelism;
  }
};

void print_summary(const std::string& label, const Summary& s) {
  std::cout << label << ": accuracy " << s.mean.at("accuracy") << " +- " << s.stddev.at("accuracy")
            << ", auc " << s.mean.at("auc") << " +- " << s.stddev.at("auc") << '\n';
}

int run_file(const std::string& path, const Overrides& ov) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::config_error, e.what());
  }
  ExperimentConfig c = experiment_config_from_json(j);
  ov.apply(c);
  validate(c);
  print_summary(to_string(c.federation.algorithm), run_config(c));
  return 0;
}

int run_preset(const std::string& name, const std::string& out, bool run, const Overrides& ov) {
  const auto configs = preset(name);
  if (!out.empty()) {
    fs::create_directories(out);
    for (const auto& nc : configs) {
      const auto file = fs::path(out) / (nc.name + ".json");
      write_text(file.string(), to_json(nc.config).dump(2) + "\n");
      std::cout << file.string() << '\n';
    }
  }
  if (!run) {
    if (out.empty())
      for (const auto& nc : configs) std::cout << nc.name << '\n';
    return 0;
  }
  for (auto nc : configs) {
    nc.config.output_dir = (fs::path(nc.config.output_dir) / nc.name).string();
    ov.apply(nc.config);
    if (!ov.output_dir.empty()) nc.config.output_dir = (fs::path(ov.output_dir) / nc.name).string();
    validate(nc.config);
    print_summary(nc.name, run_config(nc.config));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated semi-supervised learning with dynamic banks"};
  app.require_subcommand(1);

  Overrides ov;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seeds", ov.seeds, "Override the seed list")->delimiter(',');
    sub->add_option("--output-dir", ov.output_dir, "Override the output directory");
    sub->add_option("--parallelism", ov.parallelism, "Client worker threads")->check(CLI::PositiveNumber);
  };

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every seed of a config file");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  add_overrides(run);

  std::string preset_name, preset_out;
  bool preset_run = false;
  auto* pre = app.add_subcommand("preset", "Export or run a named preset");
  pre->add_option("name", preset_name, "Preset name")->required();
  pre->add_option("--out", preset_out, "Directory to write one config per variant");
  pre->add_flag("--run", preset_run, "Run every variant");
  add_overrides(pre);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return run_file(config_path, ov);
    return run_preset(preset_name, preset_out, preset_run, ov);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return e.kind() == ErrorKind::config_error || e.kind() == ErrorKind::invalid_input ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
