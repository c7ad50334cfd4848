// tools/rsan.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Batch front end: simulate, train, decode and score.
//
// Precedence: built-in defaults < --config file < command-line flags.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsan/commands.h"

namespace {

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
};

void AddCommon(CLI::App* cmd, Flags* f) {
  cmd->add_option("--config", f->config, "JSON experiment config");
  cmd->add_option("--seed", f->seed, "random seed");
  cmd->add_option("--jobs", f->jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f->out, "output directory");
}

rsan::ExperimentConfig Resolve(const Flags& f) {
  rsan::ExperimentConfig cfg = f.config.empty() ? rsan::ExperimentConfig{} : rsan::LoadConfig(f.config);
  if (f.jobs) {
    cfg.jobs = *f.jobs;
    cfg.train.jobs = *f.jobs;
  }
  return cfg;
}

std::string OutDir(const Flags& f, const rsan::ExperimentConfig& cfg, const std::string& dflt) {
  return f.out ? *f.out : cfg.Resolve(dflt);
}

void Say(const std::string& msg) { std::cerr << msg << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rsan: block-online separation, counting and diarization"};
  app.require_subcommand(1);

  Flags sim_f, train_f, dec_f, score_f;

  auto* sim = app.add_subcommand("simulate", "render synthetic meetings and a manifest");
  AddCommon(sim, &sim_f);
  std::optional<int> count;
  std::optional<std::string> profile;
  std::optional<double> length;
  sim->add_option("-n,--count", count, "number of meetings")->check(CLI::NonNegativeNumber);
  sim->add_option("--profile", profile, "activity profile: A, B or Dialog");
  sim->add_option("--length", length, "meeting length in seconds");

  auto* train = app.add_subcommand("train", "train the mask estimator");
  AddCommon(train, &train_f);
  std::optional<std::string> manifest, resume;
  std::optional<int> epochs;
  train->add_option("--manifest", manifest, "training dataset manifest");
  train->add_option("--epochs", epochs, "epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* dec = app.add_subcommand("decode", "decode sessions block by block");
  AddCommon(dec, &dec_f);
  std::vector<std::string> inputs;
  std::optional<std::string> checkpoint;
  bool oracle = false;
  std::optional<std::string> consistency;
  std::optional<int> fault_block;
  dec->add_option("inputs", inputs, "dataset manifest (.json) or mixture WAV files");
  dec->add_option("--checkpoint", checkpoint, "trained model");
  dec->add_flag("--oracle", oracle, "use ground-truth masks (needs a manifest)");
  dec->add_option("--consistency-check", consistency, "on|off")
      ->expected(0, 1)
      ->default_str("on")
      ->check(CLI::IsMember({"on", "off", ""}));
  dec->add_option("--fault-block", fault_block, "oracle fault injection block");

  auto* score = app.add_subcommand("score", "DER, SDR and counting report");
  AddCommon(score, &score_f);
  std::string ref_manifest, hyp_dir;
  bool spectrograms = false;
  score->add_option("--ref", ref_manifest, "reference dataset manifest")->required();
  score->add_option("--hyp", hyp_dir, "decode output directory")->required();
  score->add_flag("--spectrograms", spectrograms, "write PPM spectrograms");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim) {
      auto cfg = Resolve(sim_f);
      if (sim_f.seed) cfg.simulate.seed = *sim_f.seed;
      if (count) cfg.simulate.count = *count;
      if (length) cfg.simulate.length = *length;
      if (profile) {
        try {
          cfg.simulate.profile = rsan::ParseProfile(*profile);
        } catch (const rsan::Error& e) {
          throw rsan::UsageError(e.what());
        }
      }
      rsan::SimulateCommand(cfg, OutDir(sim_f, cfg, cfg.paths.data), Say);
    } else if (*train) {
      auto cfg = Resolve(train_f);
      if (train_f.seed) cfg.train.seed = *train_f.seed;
      if (manifest) cfg.train_manifest = std::filesystem::absolute(*manifest).string();
      if (epochs) cfg.train.epochs = *epochs;
      if (resume) cfg.resume = std::filesystem::absolute(*resume).string();
      rsan::TrainCommand(cfg, OutDir(train_f, cfg, cfg.paths.checkpoints), Say);
    } else if (*dec) {
      auto cfg = Resolve(dec_f);
      if (checkpoint) cfg.checkpoint = std::filesystem::absolute(*checkpoint).string();
      if (oracle) cfg.oracle = true;
      if (consistency) cfg.decode.consistency_check = *consistency != "off";
      if (fault_block) cfg.fault_block = *fault_block;
      for (auto& in : inputs) in = std::filesystem::absolute(in).string();
      rsan::DecodeCommand(cfg, inputs, OutDir(dec_f, cfg, cfg.paths.outputs), Say);
    } else if (*score) {
      auto cfg = Resolve(score_f);
      if (spectrograms) cfg.spectrograms = true;
      rsan::ScoreCommand(cfg, std::filesystem::absolute(ref_manifest).string(),
                         std::filesystem::absolute(hyp_dir).string(),
                         OutDir(score_f, cfg, cfg.paths.outputs), Say);
    }
  } catch (const rsan::UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
