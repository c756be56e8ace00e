// gridloc: batch evaluation of grid-coordinate localization predictions
// against pixel-level ground truth. Subcommands stage the pipeline so the
// expensive remote querying step is separated from re-scorable local
// analysis:
//
//   synth     generate a seeded synthetic corpus (for demos and testing)
//   prepare   render grid-overlaid canonical images
//   run       query configured backends, resumable via the cache journal
//   score     judge cached responses offline
//   report    emit tables, heatmaps, and review worksheets
//   simulate  prepare+run+score+report with simulated backends only

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gridloc/config.hpp"
#include "gridloc/error.hpp"
#include "gridloc/pipeline.hpp"
#include "gridloc/synth.hpp"
#include "gridloc/version.hpp"

namespace {

struct StageArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_stage_options(CLI::App* cmd, StageArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration (JSON)")
      ->required();
  cmd->add_option("--seed", args.seed, "override the config's global seed");
  cmd->add_option("--out", args.out_dir, "override the config's output directory");
}

gridloc::Pipeline make_pipeline(const StageArgs& args) {
  gridloc::RunConfig cfg = gridloc::load_run_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out_dir) cfg.output_dir = *args.out_dir;
  return gridloc::Pipeline(std::move(cfg));
}

int fail(const std::string& stage, const std::string& what) {
  const nlohmann::json err{{"error", stage}, {"detail", what}};
  std::cerr << err.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grid-overlay localization evaluation harness"};
  app.set_version_flag("--version", gridloc::kVersion);
  app.require_subcommand(1);

  StageArgs stage_args;
  std::string stage;
  for (const char* name : {"prepare", "run", "score", "report", "simulate"}) {
    auto* cmd = app.add_subcommand(name, "");
    add_stage_options(cmd, stage_args);
    cmd->callback([&stage, name]() { stage = name; });
  }

  gridloc::SynthOptions synth_opts;
  std::string synth_out;
  std::vector<std::string> synth_pathologies;
  std::string synth_split = "test";
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", synth_out, "corpus directory")->required();
  synth->add_option("--images", synth_opts.n_images, "number of images");
  synth->add_option("--seed", synth_opts.seed, "generation seed");
  synth->add_option("--pathologies", synth_pathologies,
                    "pathology names (default: Cardiomegaly PleuralEffusion Pneumothorax)");
  synth->add_option("--lateral-frac", synth_opts.lateral_fraction,
                    "fraction of lateral views");
  synth->add_option("--presence", synth_opts.pathology_presence,
                    "chance each pathology is present per image");
  synth->add_option("--min-side", synth_opts.min_side, "min native image side");
  synth->add_option("--max-side", synth_opts.max_side, "max native image side");
  synth->add_option("--split", synth_split, "validation|test");
  synth->add_flag("--atlas", synth_opts.make_atlas,
                  "also write a plausibility atlas");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      synth_opts.split = gridloc::parse_split(synth_split);
      if (!synth_pathologies.empty()) {
        synth_opts.pathologies.clear();
        for (const auto& name : synth_pathologies) {
          const auto p = gridloc::parse_pathology(name);
          if (!p) throw gridloc::Error("unknown pathology: " + name);
          synth_opts.pathologies.push_back(*p);
        }
      }
      const auto manifest = gridloc::generate_corpus(synth_out, synth_opts);
      std::cout << manifest.string() << "\n";
      return 0;
    }

    gridloc::Pipeline pipeline = make_pipeline(stage_args);
    std::vector<std::string> lane_errors;
    if (stage == "prepare") {
      pipeline.prepare();
    } else if (stage == "run") {
      lane_errors = pipeline.run();
    } else if (stage == "score") {
      pipeline.score();
    } else if (stage == "report") {
      pipeline.report();
    } else if (stage == "simulate") {
      lane_errors = pipeline.simulate();
    }
    if (!lane_errors.empty()) {
      nlohmann::json err{{"error", stage}, {"failed_lanes", lane_errors}};
      std::cerr << err.dump() << "\n";
      return 2;
    }
    return 0;
  } catch (const gridloc::RunInterrupted& e) {
    return fail(stage + " (interrupted; cached work is preserved)", e.what());
  } catch (const std::exception& e) {
    return fail(stage.empty() ? "synth" : stage, e.what());
  }
}
