// Command line front end: simulate | train | decompose | encode | beamform |
// render | evaluate | pipeline, driven by a JSON run configuration.
#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "usc/pipeline.hpp"

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string out_dir;
  std::string method;
  bool modified = false;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

usc::RunConfig make_config(const GlobalFlags& flags) {
  if (flags.config_path.empty())
    throw usc::InvalidParameter("missing --config (required for this command)");
  usc::RunConfig cfg = usc::load_config(flags.config_path);
  if (flags.has_seed) {
    cfg.seed = flags.seed;
    cfg.point.seed = flags.seed;
    cfg.cyst.seed = flags.seed;
  }
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.method.empty()) {
    if (flags.method == "stft")
      cfg.decomposition.method = usc::DecomposeMethod::kStft;
    else if (flags.method == "iq")
      cfg.decomposition.method = usc::DecomposeMethod::kIq;
    else
      throw usc::InvalidParameter("--method must be stft or iq");
  }
  if (flags.modified) cfg.decomposition.modified = true;
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component-based processing of raw ultrasound channel data"};
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Run configuration (JSON)");
  app.add_option("--out", flags.out_dir, "Output directory (overrides paths.out_dir)");
  app.add_option("--method", flags.method, "Decomposition method: stft | iq");
  app.add_flag("--modified", flags.modified, "Use the cross-line modified decomposition");
  auto* seed_opt = app.add_option("--seed", flags.seed, "Master seed (overrides seeds.master)");

  auto* cmd_simulate = app.add_subcommand("simulate", "Synthesize a channel-data frame");
  auto* cmd_train = app.add_subcommand("train", "Train the background dictionary (K-SVD)");
  std::string train_frame;
  cmd_train->add_option("--frame", train_frame,
                        "Frame to beamform for training (default: <out>/background.usrf)");
  auto* cmd_decompose =
      app.add_subcommand("decompose", "Separate strong reflectors from the background");
  auto* cmd_encode = app.add_subcommand("encode", "Sparse-code the background frame (OMP)");
  auto* cmd_beamform =
      app.add_subcommand("beamform", "Beamform in the representation domain (Phi = H Z)");
  auto* cmd_render = app.add_subcommand("render", "Localize, inject and render B-mode images");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "Metrics and compression accounting");
  std::string image_a, image_b;
  cmd_evaluate->add_option("--image-a", image_a, "First PGM image (pair mode)");
  cmd_evaluate->add_option("--image-b", image_b, "Second PGM image (pair mode)");
  auto* cmd_pipeline = app.add_subcommand("pipeline", "Run the full processing scheme");

  CLI11_PARSE(app, argc, argv);
  flags.has_seed = seed_opt->count() > 0;

  try {
    if (cmd_evaluate->parsed() && (!image_a.empty() || !image_b.empty())) {
      if (image_a.empty() || image_b.empty())
        throw usc::InvalidParameter("pair mode needs both --image-a and --image-b");
      const std::filesystem::path out =
          flags.out_dir.empty() ? std::filesystem::path(".")
                                  : std::filesystem::path(flags.out_dir);
      std::filesystem::create_directories(out);
      usc::evaluate_pair(image_a, image_b, out / "metrics.csv");
      return 0;
    }

    const usc::RunConfig cfg = make_config(flags);
    if (cmd_simulate->parsed()) {
      usc::run_simulate(cfg);
    } else if (cmd_train->parsed()) {
      const std::filesystem::path frame =
          train_frame.empty() ? cfg.out_dir / usc::artifact::kBackground
                              : std::filesystem::path(train_frame);
      usc::run_train(cfg, frame, cfg.out_dir / usc::artifact::kDictionary);
    } else if (cmd_decompose->parsed()) {
      usc::run_decompose(cfg);
    } else if (cmd_encode->parsed()) {
      usc::run_encode(cfg);
    } else if (cmd_beamform->parsed()) {
      usc::run_beamform(cfg);
    } else if (cmd_render->parsed()) {
      usc::run_render(cfg);
    } else if (cmd_evaluate->parsed()) {
      usc::run_evaluate(cfg);
    } else if (cmd_pipeline->parsed()) {
      usc::run_pipeline(cfg);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
