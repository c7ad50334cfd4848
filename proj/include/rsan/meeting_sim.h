// rsan/meeting_sim.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_MEETING_SIM_H_
#define RSAN_MEETING_SIM_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rsan/audio.h"
#include "rsan/timeline.h"

namespace rsan {

// Activity profiles. A: 10 s style, first 5 s hold 1-2 speakers, the rest
// 0-2. B: first 5 s hold 0-1 speakers, the rest 0-3. Dialog: exactly two
// speakers conversing from t = 0, the second possibly joining late.
enum class Profile { kA, kB, kDialog };

Profile ParseProfile(const std::string& name);
std::string ProfileName(Profile p);

// Parametric voice: harmonic source with a syllable-rate formant trajectory.
struct VoiceModel {
  double f0 = 120.0;          // Hz
  double tract_scale = 1.0;   // scales formant frequencies
  uint64_t formant_seed = 0;  // picks the speaker's vowel set
};

struct SourceSpec {
  std::string speaker_id;
  VoiceModel voice;
  // When non-empty, utterances are cut from these mono WAV clips instead of
  // being synthesized.
  std::vector<std::string> clips;
};

// `count` parametric speakers with log-spaced fundamentals (90-260 Hz).
std::vector<SourceSpec> MakeSpeakerPool(int count, uint64_t seed = 7);
// File-backed pool: one speaker per subdirectory of `dir`, clips = its WAVs.
std::vector<SourceSpec> LoadClipPool(const std::string& dir);

struct SimConfig {
  int sample_rate = 8000;
  double snr_min_db = 10.0, snr_max_db = 20.0;
  double rt60_min = 0.3, rt60_max = 0.7;
  double utt_min = 1.0, utt_max = 8.0;
  double gap_min = 0.2, gap_max = 2.0;
  // Probability that a turn starts before the previous one has ended.
  double overlap_fraction = 0.25;
  // Late-joining speakers enter on this grid (the decoder block length).
  double entry_grid = 10.0;
  double newcomer_min_turn = 5.0;
  double max_mic_delay = 2.0;  // samples, either sign
  double drr_db = 6.0;         // direct-to-reverberant energy ratio
  double speech_rms = 0.05;
};

struct MeetingScenario {
  Profile profile = Profile::kB;
  double length = 0.0;  // seconds
  int sample_rate = 8000;
  uint64_t seed = 0;
  double snr_db = 15.0;
  double rt60 = 0.5;
  double drr_db = 6.0;
  double speech_rms = 0.05;
  int first_window_speakers = 0;
  int remainder_speakers = 0;
  std::vector<SourceSpec> speakers;       // participants, id-unique
  std::map<std::string, double> mic_delay;  // samples, ch2 relative to ch1
  std::map<std::string, double> gain_db;
  Timeline timeline;

  void Validate() const;
};

MeetingScenario SampleScenario(Profile profile, double length,
                               const std::vector<SourceSpec>& pool,
                               uint64_t seed, const SimConfig& cfg = {});

struct RenderedMeeting {
  AudioSignal mixture;                             // 2 channels
  std::map<std::string, AudioSignal> references;  // per speaker, 2 channels
  AudioSignal noise;                               // 2 channels
  Timeline timeline;
};

RenderedMeeting Render(const MeetingScenario& scenario);

// Exponentially decaying noise tail behind a direct path, truncated at rt60.
Eigen::ArrayXd StochasticRir(double rt60, double drr_db, double direct_delay,
                             int sample_rate, uint64_t seed);

// Speech-to-noise ratio on channel 0 over the samples where any speaker is
// active according to the timeline.
double SegmentalSnrDb(const RenderedMeeting& m);

nlohmann::json ScenarioToJson(const MeetingScenario& s);
MeetingScenario ScenarioFromJson(const nlohmann::json& j);

}  // namespace rsan

#endif  // RSAN_MEETING_SIM_H_
