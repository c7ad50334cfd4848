// rsan/commands.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_COMMANDS_H_
#define RSAN_COMMANDS_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsan/decoder.h"
#include "rsan/meeting_sim.h"
#include "rsan/metrics.h"
#include "rsan/network.h"
#include "rsan/trainer.h"

namespace rsan {

// Bad flags or configuration (exit code 1); everything else raised by the
// commands is a runtime or data error (exit code 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct CurriculumStage {
  std::string name;
  std::string manifest;
  int epochs = 0;
};

// Everything a run depends on. Relative paths are taken relative to
// `workdir`, which itself is relative to the config file.
struct ExperimentConfig {
  struct Paths {
    std::string workdir = ".";
    std::string data = "data";  // simulate output, default train/decode input
    std::string checkpoints = "checkpoints";
    std::string outputs = "outputs";
  } paths;

  struct Simulation {
    Profile profile = Profile::kB;
    int count = 10;
    double length = 0.0;  // seconds, 0 picks the profile default
    uint64_t seed = 1;
    int pool_size = 20;
    uint64_t pool_seed = 7;
    std::string clip_dir;  // optional WAV clip pool
    SimConfig sim;
  } simulate;

  StftConfig stft;
  NetShape model;  // bins follow stft
  TrainConfig train;
  std::string train_manifest;  // empty: <data>/manifest.json
  std::vector<CurriculumStage> curriculum;  // empty: one stage on train_manifest
  std::string resume;                       // checkpoint to continue from

  DecoderConfig decode;
  std::string checkpoint;  // model for decode; empty: <checkpoints>/final.ckpt
  bool oracle = false;
  // Oracle-only fault injection: split `fault_speaker` at `fault_block`.
  int fault_block = -1;
  std::string fault_speaker;
  double fault_keep = 0.2;

  VadConfig vad;
  double der_resolution = 0.01;
  double min_activity = 0.05;  // seconds, reference counting
  bool spectrograms = false;

  int jobs = 1;

  void Validate() const;
  std::string Resolve(const std::string& path) const;
};

// Throws UsageError on unknown keys or malformed values.
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
nlohmann::json ConfigToJson(const ExperimentConfig& cfg);
// Reads a JSON config; a relative workdir is anchored at the file's folder.
ExperimentConfig LoadConfig(const std::string& path);

double DefaultLength(Profile profile);

// One simulated (or otherwise referenced) session of a dataset manifest.
struct ManifestEntry {
  std::string id;
  double length = 0.0;
  std::string mixture, noise, rttm, scenario;       // absolute paths
  std::map<std::string, std::string> references;   // speaker -> WAV
};

std::vector<ManifestEntry> ReadManifest(const std::string& path);
// Loads WAVs and the RTTM of one entry.
RenderedMeeting LoadMeeting(const ManifestEntry& entry);

// Hex FNV-1a of a file's bytes.
std::string FileChecksum(const std::string& path);

using LogFn = std::function<void(const std::string&)>;

// n meetings into `out_dir`: per session mixture.wav, noise.wav,
// ref_<speaker>.wav, ref.rttm and scenario.json, plus manifest.json.
void SimulateCommand(const ExperimentConfig& cfg, const std::string& out_dir,
                     const LogFn& log = {});

// Trains from the configured manifest(s). Writes epoch_NNN.ckpt per epoch,
// final.ckpt, metrics.csv and train.log into `out_dir`.
void TrainCommand(const ExperimentConfig& cfg, const std::string& out_dir,
                  const LogFn& log = {});

// Decodes a dataset manifest or WAV files. Per session writes
// <id>/slot<k>.wav (slot 0 = noise), <id>/hyp.rttm and <id>/activity.json;
// decode.json indexes the sessions.
void DecodeCommand(const ExperimentConfig& cfg, const std::vector<std::string>& inputs,
                   const std::string& out_dir, const LogFn& log = {});

// Scores a decode directory against a dataset manifest into report.csv and
// speakers.csv, with optional spectrogram images.
void ScoreCommand(const ExperimentConfig& cfg, const std::string& reference_manifest,
                  const std::string& hypothesis_dir, const std::string& out_dir,
                  const LogFn& log = {});

// Greyscale binary PPM of |spec| in dB over an 80 dB range, low frequencies
// at the bottom.
void WriteSpectrogramPpm(const std::string& path, const ComplexSpectrogram& spec,
                         double range_db = 80.0);

}  // namespace rsan

#endif  // RSAN_COMMANDS_H_
