// rsan/meeting_sim.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/meeting_sim.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numeric>
#include <set>

#include <unsupported/Eigen/FFT>

#include "rsan/random.h"
#include "rsan/types.h"

namespace rsan {

namespace fs = std::filesystem;

Profile ParseProfile(const std::string& name) {
  if (name == "A" || name == "a") return Profile::kA;
  if (name == "B" || name == "b") return Profile::kB;
  if (name == "dialog" || name == "Dialog") return Profile::kDialog;
  throw Error("unknown profile: " + name);
}

std::string ProfileName(Profile p) {
  switch (p) {
    case Profile::kA: return "A";
    case Profile::kB: return "B";
    case Profile::kDialog: return "dialog";
  }
  return "?";
}

std::vector<SourceSpec> MakeSpeakerPool(int count, uint64_t seed) {
  if (count <= 0) throw Error("speaker pool must not be empty");
  Rng rng(seed);
  std::vector<SourceSpec> pool;
  for (int k = 0; k < count; ++k) {
    double frac = count == 1 ? 0.5 : static_cast<double>(k) / (count - 1);
    SourceSpec s;
    char id[16];
    std::snprintf(id, sizeof(id), "spk%02d", k);
    s.speaker_id = id;
    s.voice.f0 = 90.0 * std::pow(260.0 / 90.0, frac);
    // Higher voices get shorter vocal tracts.
    s.voice.tract_scale = 0.88 + 0.24 * frac + rng.Uniform(-0.03, 0.03);
    s.voice.formant_seed = rng.Next();
    pool.push_back(std::move(s));
  }
  return pool;
}

std::vector<SourceSpec> LoadClipPool(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("clip pool is not a directory: " + dir);
  std::vector<fs::path> speakers;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) speakers.push_back(e.path());
  std::sort(speakers.begin(), speakers.end());
  std::vector<SourceSpec> pool;
  for (const auto& p : speakers) {
    SourceSpec s;
    s.speaker_id = p.filename().string();
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".wav") s.clips.push_back(e.path().string());
    std::sort(s.clips.begin(), s.clips.end());
    if (!s.clips.empty()) pool.push_back(std::move(s));
  }
  if (pool.empty()) throw Error("speaker pool must not be empty");
  return pool;
}

void MeetingScenario::Validate() const {
  if (length <= 0.0) throw Error("scenario length must be positive");
  if (!(rt60 > 0.0)) throw Error("scenario rt60 must be positive");
  if (sample_rate <= 0) throw Error("scenario sample rate must be positive");
  std::set<std::string> ids;
  for (const auto& s : speakers)
    if (!ids.insert(s.speaker_id).second)
      throw Error("duplicate speaker id " + s.speaker_id);
  for (const auto& seg : timeline.segments()) {
    if (!ids.count(seg.speaker))
      throw Error("segment references unknown speaker " + seg.speaker);
    if (seg.start < 0.0 || seg.end > length + 1e-9 || !(seg.start < seg.end))
      throw Error("segment out of range for " + seg.speaker);
  }
}

namespace {

struct OccupancyDist {
  std::vector<double> probs;  // probability of 0, 1, 2, ... speakers
};

int Draw(Rng& rng, const std::vector<double>& probs) {
  double u = rng.Uniform(0.0, 1.0), acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::vector<int> DrawDistinct(Rng& rng, int pool_size, int count) {
  std::vector<int> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < count; ++i) {
    int j = i + static_cast<int>(rng.Below(pool_size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

// Turn-taking among `speakers` inside [region_start, length). Each speaker
// enters at its entry time with a long first turn; afterwards turns pass
// between entered speakers, separated by gaps or overlapping the previous
// turn with probability cfg.overlap_fraction.
void Converse(Rng& rng, const std::vector<std::string>& speakers,
              const std::vector<double>& entries, double length,
              const SimConfig& cfg, Timeline* timeline) {
  const int n = static_cast<int>(speakers.size());
  if (n == 0) return;
  std::vector<bool> entered(n, false);
  std::vector<Segment> turns;
  double t = *std::min_element(entries.begin(), entries.end());
  int prev = -1;
  double prev_start = t;
  while (t < length - 0.5) {
    // Newcomers whose entry has come take the floor at their entry time.
    int next = -1;
    double start = t;
    for (int k = 0; k < n; ++k) {
      if (!entered[k] && entries[k] <= t + 1e-9) {
        next = k;
        start = std::max(entries[k], prev_start);
        break;
      }
    }
    if (next < 0) {
      std::vector<int> cands;
      for (int k = 0; k < n; ++k)
        if (entered[k] && (k != prev || n == 1)) cands.push_back(k);
      if (cands.empty()) {
        // Only one speaker so far; they continue.
        for (int k = 0; k < n; ++k)
          if (entered[k]) cands.push_back(k);
      }
      if (cands.empty()) {
        // Nobody has entered yet: jump to the next entry.
        double nxt = length;
        for (int k = 0; k < n; ++k)
          if (!entered[k]) nxt = std::min(nxt, entries[k]);
        t = nxt;
        continue;
      }
      next = cands[rng.Below(cands.size())];
    }
    const bool newcomer = !entered[next];
    double len = newcomer ? rng.Uniform(std::max(cfg.newcomer_min_turn, cfg.utt_min),
                                        std::max(cfg.newcomer_min_turn, cfg.utt_max))
                          : rng.Uniform(cfg.utt_min, cfg.utt_max);
    double end = std::min(length, start + len);
    // A newcomer's entry cuts the current turn short.
    if (newcomer && !turns.empty() && turns.back().end > start) {
      turns.back().end = start;
      if (turns.back().duration() < 0.3) turns.pop_back();
    }
    if (end - start >= 0.3) turns.push_back({speakers[next], start, end});
    entered[next] = true;
    prev = next;
    prev_start = start;

    double next_t;
    const bool overlap = n > 1 && rng.Uniform(0.0, 1.0) < cfg.overlap_fraction;
    if (overlap) {
      double back = rng.Uniform(0.2, std::max(0.25, 0.5 * (end - start)));
      next_t = std::max(start + 0.3, end - back);
    } else {
      next_t = end + rng.Uniform(cfg.gap_min, cfg.gap_max);
    }
    // Pending entries inside this turn or the following gap happen on time.
    for (int k = 0; k < n; ++k)
      if (!entered[k] && entries[k] > start && entries[k] < next_t)
        next_t = entries[k];
    t = next_t;
  }
  for (const auto& seg : turns) timeline->Add(seg.speaker, seg.start, seg.end);
}

}  // namespace

MeetingScenario SampleScenario(Profile profile, double length,
                               const std::vector<SourceSpec>& pool,
                               uint64_t seed, const SimConfig& cfg) {
  if (pool.empty()) throw Error("speaker pool must not be empty");
  if (length < 5.0) throw Error("scenario length must be at least 5 s");

  OccupancyDist first, rest;
  double region = 5.0;
  switch (profile) {
    case Profile::kA:
      first.probs = {0.0, 0.5, 0.5};
      rest.probs = {0.15, 0.55, 0.30};
      break;
    case Profile::kB:
      first.probs = {0.5, 0.5};
      rest.probs = {0.05, 0.75, 0.15, 0.05};
      break;
    case Profile::kDialog:
      first.probs = {1.0};
      rest.probs = {0.0, 0.0, 1.0};
      region = 0.0;
      break;
  }
  const int max_needed = std::max<int>(first.probs.size(), rest.probs.size()) - 1;
  if (static_cast<int>(pool.size()) < max_needed)
    throw Error("speaker pool has " + std::to_string(pool.size()) +
                " speakers, profile needs " + std::to_string(max_needed));

  Rng rng(seed);
  MeetingScenario s;
  s.profile = profile;
  s.length = length;
  s.sample_rate = cfg.sample_rate;
  s.seed = seed;
  s.snr_db = rng.Uniform(cfg.snr_min_db, cfg.snr_max_db);
  s.rt60 = rng.Uniform(cfg.rt60_min, cfg.rt60_max);
  s.drr_db = cfg.drr_db;
  s.speech_rms = cfg.speech_rms;
  s.first_window_speakers = Draw(rng, first.probs);
  s.remainder_speakers = Draw(rng, rest.probs);

  std::vector<int> first_ids = DrawDistinct(rng, pool.size(), s.first_window_speakers);
  std::vector<int> rest_ids = DrawDistinct(rng, pool.size(), s.remainder_speakers);

  std::set<int> used;
  auto use = [&](int idx) {
    if (used.insert(idx).second) {
      s.speakers.push_back(pool[idx]);
      const auto& id = pool[idx].speaker_id;
      s.mic_delay[id] = rng.Uniform(-cfg.max_mic_delay, cfg.max_mic_delay);
      s.gain_db[id] = rng.Uniform(-2.0, 2.0);
    }
  };

  // First window: everybody talks through [0, 5).
  for (int idx : first_ids) {
    use(idx);
    double start = rng.Uniform(0.0, 0.5);
    double end = std::min(length, region) - rng.Uniform(0.0, 0.5);
    s.timeline.Add(pool[idx].speaker_id, start, end);
  }

  // Remainder: the first participant opens at the region start; the others
  // join on distinct cells of the entry grid while cells last.
  std::vector<std::string> names;
  std::vector<double> entries;
  std::vector<double> cells;
  for (double g = cfg.entry_grid; g + cfg.newcomer_min_turn <= length; g += cfg.entry_grid)
    if (g > region) cells.push_back(g);
  for (size_t k = 0; k < rest_ids.size(); ++k) {
    use(rest_ids[k]);
    names.push_back(pool[rest_ids[k]].speaker_id);
    double cell = region;
    if (k > 0 && !cells.empty()) {
      const size_t pick = rng.Below(cells.size());
      cell = cells[pick];
      cells.erase(cells.begin() + static_cast<long>(pick));
    }
    entries.push_back(cell + rng.Uniform(0.0, 0.5));
  }
  Timeline remainder;
  Converse(rng, names, entries, length, cfg, &remainder);
  for (const auto& seg : remainder.segments())
    s.timeline.Add(seg.speaker, seg.start, seg.end);
  s.timeline.Normalize();
  s.Validate();
  return s;
}

namespace {

Eigen::ArrayXd FftConvolve(const Eigen::ArrayXd& x, const Eigen::ArrayXd& h,
                           Eigen::Index out_len) {
  const Eigen::Index full = x.size() + h.size() - 1;
  Eigen::Index n = 1;
  while (n < full) n <<= 1;
  std::vector<double> xa(n, 0.0), ha(n, 0.0), y;
  std::copy(x.data(), x.data() + x.size(), xa.begin());
  std::copy(h.data(), h.data() + h.size(), ha.begin());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> X, H;
  fft.fwd(X, xa);
  fft.fwd(H, ha);
  for (size_t k = 0; k < X.size(); ++k) X[k] *= H[k];
  fft.inv(y, X);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(out_len);
  for (Eigen::Index i = 0; i < std::min(out_len, full); ++i) out[i] = y[i];
  return out;
}

struct Formant {
  double freq, bw, gain;
};

// Harmonic voice for `samples` samples starting at phase zero.
Eigen::ArrayXd SynthesizeVoice(const VoiceModel& v, Eigen::Index samples,
                               int rate, Rng& rng) {
  // Vowel inventory (F1, F2, F3 in Hz) chosen per speaker.
  static const double kVowels[][3] = {{730, 1090, 2440}, {530, 1840, 2480},
                                      {270, 2290, 3010}, {570, 840, 2410},
                                      {300, 870, 2240},  {660, 1720, 2410},
                                      {490, 1350, 1690}, {440, 1020, 2240}};
  Rng vowel_rng(v.formant_seed);
  int vowel_set[4];
  for (int& k : vowel_set) k = static_cast<int>(vowel_rng.Below(8));

  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(samples);
  const double dt = 1.0 / rate;
  const double nyq = 0.475 * rate;
  const int control = 40;
  double phase = 0.0;
  const double rho1 = rng.Uniform(0.0, 2 * M_PI), rho2 = rng.Uniform(0.0, 2 * M_PI);

  // Syllable schedule.
  std::vector<double> syl_start{0.0};
  std::vector<int> syl_vowel{vowel_set[rng.Below(4)]};
  const double total = samples * dt;
  while (syl_start.back() < total) {
    syl_start.push_back(syl_start.back() + rng.Uniform(0.16, 0.32));
    syl_vowel.push_back(vowel_set[rng.Below(4)]);
  }

  std::vector<double> amps;
  double breath_state = 0.0;
  size_t syl = 0;
  for (Eigen::Index n0 = 0; n0 < samples; n0 += control) {
    const double t = n0 * dt;
    while (syl + 1 < syl_start.size() && syl_start[syl + 1] <= t) ++syl;
    const double s0 = syl_start[syl], s1 = syl_start[syl + 1];
    const double u = std::clamp((t - s0) / (s1 - s0), 0.0, 1.0);
    const int va = syl_vowel[syl];
    const int vb = syl_vowel[std::min(syl + 1, syl_vowel.size() - 1)];
    const double glide = u < 0.7 ? 0.0 : (u - 0.7) / 0.3;
    Formant f[3];
    for (int j = 0; j < 3; ++j) {
      f[j].freq = v.tract_scale *
                  ((1 - glide) * kVowels[va][j] + glide * kVowels[vb][j]);
      f[j].bw = 70.0 + 40.0 * j;
      f[j].gain = 1.0 / (1.0 + j);
    }
    const double f0 = v.f0 * (1.0 + 0.06 * std::sin(2 * M_PI * 0.45 * t + rho1) +
                              0.03 * std::sin(2 * M_PI * 2.7 * t + rho2));
    const double level = 0.45 + 0.55 * std::sqrt(std::sin(M_PI * u));
    const int nh = static_cast<int>(nyq / f0);
    amps.assign(nh + 1, 0.0);
    for (int k = 1; k <= nh; ++k) {
      const double fk = k * f0;
      double env = 0.04;
      for (const auto& fm : f) {
        const double d = (fk - fm.freq) / fm.bw;
        env += fm.gain / (1.0 + d * d);
      }
      amps[k] = level * env / std::sqrt(static_cast<double>(k));
    }
    const Eigen::Index n1 = std::min<Eigen::Index>(samples, n0 + control);
    const double dphi = 2 * M_PI * f0 * dt;
    for (Eigen::Index n = n0; n < n1; ++n) {
      phase = std::fmod(phase + dphi, 2 * M_PI);
      const std::complex<double> step(std::cos(phase), std::sin(phase));
      std::complex<double> rot = step;
      double acc = 0.0;
      for (int k = 1; k <= nh; ++k) {
        acc += amps[k] * rot.imag();
        rot *= step;
      }
      // Breath noise fills the gaps between harmonics.
      breath_state = 0.6 * breath_state + rng.Normal();
      out[n] = acc + 0.08 * level * breath_state;
    }
  }
  return out;
}

// Utterance audio cut from a clip pool.
Eigen::ArrayXd CutFromClips(const SourceSpec& spec, Eigen::Index samples,
                            int rate, Rng& rng) {
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(samples);
  Eigen::Index pos = 0;
  int guard = 0;
  while (pos < samples && guard++ < 1000) {
    const auto& path = spec.clips[rng.Below(spec.clips.size())];
    AudioSignal clip = ReadWav(path);
    if (clip.sample_rate != rate)
      throw Error(path + ": sample rate " + std::to_string(clip.sample_rate) +
                  " does not match " + std::to_string(rate));
    const Eigen::Index take = std::min(clip.length(), samples - pos);
    out.segment(pos, take) = clip.channel(0).head(take);
    pos += take;
  }
  return out;
}

void ApplyFades(Eigen::ArrayXd* x, int rate) {
  const Eigen::Index fade = std::min<Eigen::Index>(rate / 50, x->size() / 2);
  for (Eigen::Index i = 0; i < fade; ++i) {
    const double g = 0.5 - 0.5 * std::cos(M_PI * i / fade);
    (*x)[i] *= g;
    (*x)[x->size() - 1 - i] *= g;
  }
}

// Speech-shaped noise: low-passed Gaussian with a DC blocker.
Eigen::ArrayXd ShapedNoise(Eigen::Index samples, Rng& rng) {
  Eigen::ArrayXd out(samples);
  double lp = 0.0, prev_in = 0.0, prev_out = 0.0;
  for (Eigen::Index n = 0; n < samples; ++n) {
    lp = 0.85 * lp + rng.Normal();
    const double y = lp - prev_in + 0.995 * prev_out;
    prev_in = lp;
    prev_out = y;
    out[n] = y;
  }
  return out;
}

double MeanPower(const Eigen::ArrayXd& x) {
  return x.size() == 0 ? 0.0 : x.square().mean();
}

}  // namespace

Eigen::ArrayXd StochasticRir(double rt60, double drr_db, double direct_delay,
                             int sample_rate, uint64_t seed) {
  if (!(rt60 > 0.0)) throw Error("rt60 must be positive");
  Rng rng(seed);
  const Eigen::Index len = static_cast<Eigen::Index>(std::ceil(rt60 * sample_rate)) + 32;
  Eigen::ArrayXd h = Eigen::ArrayXd::Zero(len);
  // Direct path as a Hann-windowed fractional-delay sinc.
  const int half = 8;
  const double center = 8.0 + direct_delay;
  for (int i = 0; i < 2 * half + 1 + 8; ++i) {
    const double d = i - center;
    if (std::abs(d) > half) continue;
    const double sinc = std::abs(d) < 1e-12 ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
    h[i] = sinc * (0.5 + 0.5 * std::cos(M_PI * d / half));
  }
  const double direct_energy = h.square().sum();
  // Diffuse tail starting 2 ms after the direct path; amplitude falls 60 dB
  // over rt60.
  const Eigen::Index onset = static_cast<Eigen::Index>(center) + sample_rate / 500;
  const double decay = 3.0 * std::log(10.0) / (rt60 * sample_rate);
  Eigen::ArrayXd tail = Eigen::ArrayXd::Zero(len);
  const Eigen::Index tail_end = onset + static_cast<Eigen::Index>(rt60 * sample_rate);
  for (Eigen::Index n = onset; n < std::min(len, tail_end); ++n)
    tail[n] = rng.Normal() * std::exp(-decay * (n - onset));
  const double tail_energy = tail.square().sum();
  if (tail_energy > 0.0)
    h += tail * std::sqrt(direct_energy * std::pow(10.0, -drr_db / 10.0) / tail_energy);
  return h;
}

RenderedMeeting Render(const MeetingScenario& sc) {
  sc.Validate();
  const int rate = sc.sample_rate;
  const Eigen::Index len = static_cast<Eigen::Index>(std::llround(sc.length * rate));
  RenderedMeeting out;
  out.timeline = sc.timeline;
  out.mixture = AudioSignal(rate, len, 2);
  out.noise = AudioSignal(rate, len, 2);

  Eigen::Array<bool, Eigen::Dynamic, 1> active =
      Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(len, false);

  for (size_t si = 0; si < sc.speakers.size(); ++si) {
    const auto& spk = sc.speakers[si];
    Rng rng(MixSeed(sc.seed, 0x5157 + si));
    Eigen::ArrayXd dry = Eigen::ArrayXd::Zero(len);
    for (const auto& seg : sc.timeline.segments()) {
      if (seg.speaker != spk.speaker_id) continue;
      const Eigen::Index a = std::clamp<Eigen::Index>(std::llround(seg.start * rate), 0, len);
      const Eigen::Index b = std::clamp<Eigen::Index>(std::llround(seg.end * rate), 0, len);
      if (b <= a) continue;
      Eigen::ArrayXd utt = spk.clips.empty()
                               ? SynthesizeVoice(spk.voice, b - a, rate, rng)
                               : CutFromClips(spk, b - a, rate, rng);
      const double rms = std::sqrt(MeanPower(utt));
      if (rms > 0.0) utt *= sc.speech_rms / rms;
      ApplyFades(&utt, rate);
      dry.segment(a, b - a) = utt;
      active.segment(a, b - a) = true;
    }
    auto it = sc.gain_db.find(spk.speaker_id);
    if (it != sc.gain_db.end()) dry *= std::pow(10.0, it->second / 20.0);
    const double delay = sc.mic_delay.count(spk.speaker_id) ? sc.mic_delay.at(spk.speaker_id) : 0.0;
    AudioSignal ref(rate, len, 2);
    for (int c = 0; c < 2; ++c) {
      Eigen::ArrayXd h = StochasticRir(sc.rt60, sc.drr_db, c == 0 ? 0.0 : delay, rate,
                                       MixSeed(sc.seed, 0xA11 + 2 * si + c));
      ref.channel(c) = FftConvolve(dry, h, len);
    }
    out.references.emplace(spk.speaker_id, std::move(ref));
  }

  Rng noise_rng(MixSeed(sc.seed, 0x7015E));
  Eigen::ArrayXd common = ShapedNoise(len, noise_rng);
  for (int c = 0; c < 2; ++c)
    out.noise.channel(c) = 0.6 * common + 0.8 * ShapedNoise(len, noise_rng);

  Eigen::ArrayXd speech = Eigen::ArrayXd::Zero(len);
  for (const auto& [id, ref] : out.references) speech += ref.channel(0);
  double speech_pow = 0.0, noise_pow = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index n = 0; n < len; ++n) {
    if (!active[n]) continue;
    speech_pow += speech[n] * speech[n];
    noise_pow += out.noise.samples(n, 0) * out.noise.samples(n, 0);
    ++count;
  }
  double scale;
  if (count > 0 && speech_pow > 0.0 && noise_pow > 0.0) {
    scale = std::sqrt(speech_pow / noise_pow * std::pow(10.0, -sc.snr_db / 10.0));
  } else {
    // No speech: nominal speech level sets the noise floor.
    const double p = MeanPower(out.noise.channel(0));
    scale = p > 0.0 ? sc.speech_rms * std::pow(10.0, -sc.snr_db / 20.0) / std::sqrt(p) : 0.0;
  }
  out.noise.samples *= scale;

  out.mixture.samples = out.noise.samples;
  for (const auto& [id, ref] : out.references) out.mixture.samples += ref.samples;
  return out;
}

double SegmentalSnrDb(const RenderedMeeting& m) {
  const int rate = m.mixture.sample_rate;
  const Eigen::Index len = m.mixture.length();
  Eigen::ArrayXd speech = Eigen::ArrayXd::Zero(len);
  for (const auto& [id, ref] : m.references) speech += ref.channel(0);
  double sp = 0.0, np = 0.0;
  Eigen::Array<bool, Eigen::Dynamic, 1> active =
      Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(len, false);
  for (const auto& seg : m.timeline.segments()) {
    const Eigen::Index a = std::clamp<Eigen::Index>(std::llround(seg.start * rate), 0, len);
    const Eigen::Index b = std::clamp<Eigen::Index>(std::llround(seg.end * rate), 0, len);
    if (b > a) active.segment(a, b - a) = true;
  }
  for (Eigen::Index n = 0; n < len; ++n) {
    if (!active[n]) continue;
    sp += speech[n] * speech[n];
    np += m.noise.samples(n, 0) * m.noise.samples(n, 0);
  }
  if (np <= 0.0 || sp <= 0.0) throw Error("segmental SNR undefined without speech");
  return 10.0 * std::log10(sp / np);
}

nlohmann::json ScenarioToJson(const MeetingScenario& s) {
  nlohmann::json j;
  j["profile"] = ProfileName(s.profile);
  j["length"] = s.length;
  j["sample_rate"] = s.sample_rate;
  j["seed"] = s.seed;
  j["snr_db"] = s.snr_db;
  j["rt60"] = s.rt60;
  j["drr_db"] = s.drr_db;
  j["speech_rms"] = s.speech_rms;
  j["first_window_speakers"] = s.first_window_speakers;
  j["remainder_speakers"] = s.remainder_speakers;
  j["speakers"] = nlohmann::json::array();
  for (const auto& spk : s.speakers) {
    nlohmann::json js;
    js["id"] = spk.speaker_id;
    js["f0"] = spk.voice.f0;
    js["tract_scale"] = spk.voice.tract_scale;
    js["formant_seed"] = spk.voice.formant_seed;
    js["clips"] = spk.clips;
    js["mic_delay"] = s.mic_delay.count(spk.speaker_id) ? s.mic_delay.at(spk.speaker_id) : 0.0;
    js["gain_db"] = s.gain_db.count(spk.speaker_id) ? s.gain_db.at(spk.speaker_id) : 0.0;
    j["speakers"].push_back(js);
  }
  j["segments"] = nlohmann::json::array();
  for (const auto& seg : s.timeline.segments())
    j["segments"].push_back({{"speaker", seg.speaker}, {"start", seg.start}, {"end", seg.end}});
  return j;
}

MeetingScenario ScenarioFromJson(const nlohmann::json& j) {
  MeetingScenario s;
  try {
    s.profile = ParseProfile(j.at("profile").get<std::string>());
    s.length = j.at("length").get<double>();
    s.sample_rate = j.at("sample_rate").get<int>();
    s.seed = j.at("seed").get<uint64_t>();
    s.snr_db = j.at("snr_db").get<double>();
    s.rt60 = j.at("rt60").get<double>();
    s.drr_db = j.value("drr_db", 6.0);
    s.speech_rms = j.value("speech_rms", 0.05);
    s.first_window_speakers = j.value("first_window_speakers", 0);
    s.remainder_speakers = j.value("remainder_speakers", 0);
    for (const auto& js : j.at("speakers")) {
      SourceSpec spk;
      spk.speaker_id = js.at("id").get<std::string>();
      spk.voice.f0 = js.at("f0").get<double>();
      spk.voice.tract_scale = js.at("tract_scale").get<double>();
      spk.voice.formant_seed = js.at("formant_seed").get<uint64_t>();
      spk.clips = js.value("clips", std::vector<std::string>{});
      s.mic_delay[spk.speaker_id] = js.value("mic_delay", 0.0);
      s.gain_db[spk.speaker_id] = js.value("gain_db", 0.0);
      s.speakers.push_back(std::move(spk));
    }
    for (const auto& seg : j.at("segments"))
      s.timeline.Add(seg.at("speaker").get<std::string>(), seg.at("start").get<double>(),
                     seg.at("end").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad scenario json: ") + e.what());
  }
  s.timeline.Normalize();
  s.Validate();
  return s;
}

}  // namespace rsan
