// rsan/metrics.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rsan {

void VadConfig::Validate() const {
  if (!(frame > 0.0)) throw Error("vad frame must be positive");
  if (!(min_dur >= 0.0)) throw Error("vad min_dur must be non-negative");
}

std::vector<double> FramePowerDb(const Eigen::ArrayXd& x, int sample_rate, double frame) {
  if (!(frame > 0.0)) throw Error("vad frame must be positive");
  const Eigen::Index fs = std::max<Eigen::Index>(1, std::lround(frame * sample_rate));
  std::vector<double> out;
  for (Eigen::Index start = 0; start < x.size(); start += fs) {
    const Eigen::Index n = std::min(fs, x.size() - start);
    const double p = x.segment(start, n).square().mean();
    out.push_back(10.0 * std::log10(p + 1e-20));
  }
  return out;
}

Timeline PowerVad(const Eigen::ArrayXd& x, int sample_rate, double threshold_db, double frame,
                  double min_dur, const std::string& speaker) {
  Timeline tl;
  if (x.size() == 0) return tl;
  const std::vector<double> db = FramePowerDb(x, sample_rate, frame);
  threshold_db = std::max(threshold_db, kVadFloorDb);
  const double fs = static_cast<double>(std::max<long>(1, std::lround(frame * sample_rate)));
  const double len = static_cast<double>(x.size());
  auto time = [&](size_t i) { return std::min(i * fs, len) / sample_rate; };

  std::vector<std::pair<size_t, size_t>> runs;
  for (size_t i = 0; i < db.size();) {
    if (db[i] < threshold_db) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < db.size() && db[j] >= threshold_db) ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  std::vector<std::pair<size_t, size_t>> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && time(r.first) - time(merged.back().second) < min_dur)
      merged.back().second = r.second;
    else
      merged.push_back(r);
  }
  for (const auto& [a, b] : merged)
    if (time(b) - time(a) >= min_dur) tl.Add(speaker, time(a), time(b));
  return tl;
}

double MeetingThresholdDb(const std::vector<AudioSignal>& streams, const VadConfig& cfg) {
  cfg.Validate();
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& s : streams)
    for (double d : FramePowerDb(s.channel(0), s.sample_rate, cfg.frame)) peak = std::max(peak, d);
  return peak + cfg.relative_db;
}

Timeline StreamsToTimeline(const std::vector<AudioSignal>& streams,
                           const std::vector<std::string>& labels, const VadConfig& cfg) {
  if (streams.size() != labels.size()) throw Error("one label per stream required");
  Timeline out;
  if (streams.empty()) return out;
  const double threshold = MeetingThresholdDb(streams, cfg);
  for (size_t k = 0; k < streams.size(); ++k) {
    const Timeline t = PowerVad(streams[k].channel(0), streams[k].sample_rate, threshold,
                                cfg.frame, cfg.min_dur, labels[k]);
    for (const auto& s : t.segments()) out.Add(s.speaker, s.start, s.end);
  }
  out.Normalize();
  return out;
}

namespace {

// Per-speaker frame activity, speakers in sorted id order.
struct FrameGrid {
  std::vector<std::string> ids;
  std::vector<std::vector<char>> active;
};

FrameGrid Discretize(const Timeline& tl, double r, long frames) {
  FrameGrid g;
  std::map<std::string, size_t> index;
  for (const auto& id : tl.Speakers()) {
    index[id] = g.ids.size();
    g.ids.push_back(id);
  }
  g.active.assign(g.ids.size(), std::vector<char>(frames, 0));
  for (const auto& s : tl.segments()) {
    const long a = std::max(0L, std::lround(s.start / r));
    const long b = std::min(frames, std::lround(s.end / r));
    for (long f = a; f < b; ++f) g.active[index[s.speaker]][f] = 1;
  }
  return g;
}

long FrameCount(const Timeline& tl, double r) {
  long n = 0;
  for (const auto& s : tl.segments()) n = std::max(n, std::lround(s.end / r));
  return n;
}

void SearchMapping(const std::vector<std::vector<long>>& overlap, size_t ref,
                   std::vector<int>* current, std::vector<char>* used, long score, long* best,
                   std::vector<int>* best_map) {
  if (ref == overlap.size()) {
    if (score > *best) {
      *best = score;
      *best_map = *current;
    }
    return;
  }
  for (size_t h = 0; h < used->size(); ++h) {
    if ((*used)[h]) continue;
    (*used)[h] = 1;
    (*current)[ref] = static_cast<int>(h);
    SearchMapping(overlap, ref + 1, current, used, score + overlap[ref][h], best, best_map);
    (*used)[h] = 0;
  }
  (*current)[ref] = -1;
  SearchMapping(overlap, ref + 1, current, used, score, best, best_map);
}

}  // namespace

DerReport Der(const Timeline& reference, const Timeline& hypothesis, double resolution) {
  if (!(resolution > 0.0)) throw Error("der resolution must be positive");
  if (reference.Speakers().size() > kMaxDerSpeakers ||
      hypothesis.Speakers().size() > kMaxDerSpeakers)
    throw Error("der supports at most " + std::to_string(kMaxDerSpeakers) + " speakers per side");
  const long frames = std::max(FrameCount(reference, resolution), FrameCount(hypothesis, resolution));
  const FrameGrid ref = Discretize(reference, resolution, frames);
  const FrameGrid hyp = Discretize(hypothesis, resolution, frames);

  std::vector<std::vector<long>> overlap(ref.ids.size(), std::vector<long>(hyp.ids.size(), 0));
  for (size_t i = 0; i < ref.ids.size(); ++i)
    for (size_t j = 0; j < hyp.ids.size(); ++j)
      for (long f = 0; f < frames; ++f) overlap[i][j] += ref.active[i][f] && hyp.active[j][f];

  std::vector<int> current(ref.ids.size(), -1), best_map(ref.ids.size(), -1);
  std::vector<char> used(hyp.ids.size(), 0);
  long best = -1;
  SearchMapping(overlap, 0, &current, &used, 0, &best, &best_map);

  DerReport r;
  for (long f = 0; f < frames; ++f) {
    long nr = 0, nh = 0, correct = 0;
    for (size_t i = 0; i < ref.ids.size(); ++i) {
      if (!ref.active[i][f]) continue;
      ++nr;
      if (best_map[i] >= 0 && hyp.active[best_map[i]][f]) ++correct;
    }
    for (size_t j = 0; j < hyp.ids.size(); ++j) nh += hyp.active[j][f];
    r.total_frames += nr;
    r.missed_frames += std::max(0L, nr - nh);
    r.false_alarm_frames += std::max(0L, nh - nr);
    r.confusion_frames += std::min(nr, nh) - correct;
  }
  for (size_t i = 0; i < ref.ids.size(); ++i)
    if (best_map[i] >= 0) r.mapping[ref.ids[i]] = hyp.ids[best_map[i]];
  r.missed = r.missed_frames * resolution;
  r.false_alarm = r.false_alarm_frames * resolution;
  r.confusion = r.confusion_frames * resolution;
  r.total = r.total_frames * resolution;
  const long errors = r.missed_frames + r.false_alarm_frames + r.confusion_frames;
  if (r.total_frames > 0)
    r.der = static_cast<double>(errors) / static_cast<double>(r.total_frames);
  else
    r.der = errors > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  return r;
}

double Sdr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference) {
  if (estimate.size() != reference.size()) throw Error("sdr: length mismatch");
  const double rr = reference.square().sum();
  if (!(rr > 0.0)) throw Error("sdr: silent reference");
  const Eigen::ArrayXd target = (estimate * reference).sum() / rr * reference;
  const double num = target.square().sum();
  const double den = (estimate - target).square().sum();
  if (den == 0.0) return num > 0.0 ? kSdrCap : -kSdrCap;
  if (num == 0.0) return -kSdrCap;
  return std::clamp(10.0 * std::log10(num / den), -kSdrCap, kSdrCap);
}

CountingReport CountingAccuracy(const std::vector<int>& estimated, const std::vector<int>& truth) {
  if (estimated.size() != truth.size()) throw Error("counting: length mismatch");
  CountingReport r;
  if (truth.empty()) return r;
  long hits = 0;
  for (size_t b = 0; b < truth.size(); ++b) {
    ++r.confusion[{truth[b], estimated[b]}];
    hits += truth[b] == estimated[b];
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(truth.size());
  return r;
}

std::string FormatScoreCsv(const std::vector<ScoreRow>& rows) {
  std::ostringstream os;
  os << "session,DER,missed,FA,confusion,mean_SDR,counting_accuracy\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.3f,%.3f,%.3f,%.3f,%.6f\n", r.session.c_str(),
                  r.der.der, r.der.missed, r.der.false_alarm, r.der.confusion, r.mean_sdr,
                  r.counting_accuracy);
    os << buf;
  }
  return os.str();
}

}  // namespace rsan
