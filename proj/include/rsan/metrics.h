// rsan/metrics.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_METRICS_H_
#define RSAN_METRICS_H_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rsan/audio.h"
#include "rsan/timeline.h"
#include "rsan/types.h"

namespace rsan {

struct VadConfig {
  double frame = 0.025;  // seconds
  double min_dur = 0.2;  // seconds
  // Meeting-common threshold relative to the loudest frame of any stream.
  double relative_db = -25.0;

  void Validate() const;
};

// Frames quieter than this are never speech, whatever the threshold.
inline constexpr double kVadFloorDb = -120.0;

// Mean-square power of consecutive non-overlapping frames, in dBFS.
std::vector<double> FramePowerDb(const Eigen::ArrayXd& x, int sample_rate, double frame);

// Frames at or above `threshold_db` become speech; gaps shorter than min_dur
// are bridged, then runs shorter than min_dur are dropped.
Timeline PowerVad(const Eigen::ArrayXd& x, int sample_rate, double threshold_db, double frame,
                  double min_dur, const std::string& speaker = "spk");

// Loudest frame power over all streams plus `relative_db`.
double MeetingThresholdDb(const std::vector<AudioSignal>& streams, const VadConfig& cfg);

// Hypothesis timeline of speaker streams labeled `labels`, using one
// threshold common to the meeting.
Timeline StreamsToTimeline(const std::vector<AudioSignal>& streams,
                           const std::vector<std::string>& labels, const VadConfig& cfg);

struct DerReport {
  double missed = 0.0;  // seconds
  double false_alarm = 0.0;
  double confusion = 0.0;
  double total = 0.0;  // reference speech, overlap counted per speaker
  double der = 0.0;
  // Frame counts behind the above.
  long missed_frames = 0, false_alarm_frames = 0, confusion_frames = 0, total_frames = 0;
  std::map<std::string, std::string> mapping;  // reference -> hypothesis
};

inline constexpr int kMaxDerSpeakers = 8;

// Frame-discretized DER with overlap and no collar. A segment covers frames
// round(start / r) .. round(end / r) - 1. The injective speaker mapping
// maximizing matched speech is found by exhaustive search.
DerReport Der(const Timeline& reference, const Timeline& hypothesis, double resolution = 0.01);

inline constexpr double kSdrCap = 60.0;

// Projection SDR: 10 log10(|s|^2 / |e - s|^2), s = <e, r> / <r, r> r,
// clamped to [-kSdrCap, kSdrCap].
double Sdr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference);

struct CountingReport {
  double accuracy = 0.0;
  std::map<std::pair<int, int>, int> confusion;  // (truth, estimate) -> blocks
};

CountingReport CountingAccuracy(const std::vector<int>& estimated, const std::vector<int>& truth);

struct ScoreRow {
  std::string session;
  DerReport der;
  double mean_sdr = 0.0;
  double counting_accuracy = 0.0;
};

std::string FormatScoreCsv(const std::vector<ScoreRow>& rows);

}  // namespace rsan

#endif  // RSAN_METRICS_H_
