// rsan/audio.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_AUDIO_H_
#define RSAN_AUDIO_H_

#include <string>

#include <Eigen/Core>

namespace rsan {

// Multichannel waveform, samples x channels, amplitudes nominally in [-1, 1].
struct AudioSignal {
  int sample_rate = 8000;
  Eigen::ArrayXXd samples;

  AudioSignal() = default;
  AudioSignal(int rate, Eigen::Index length, Eigen::Index channels)
      : sample_rate(rate), samples(Eigen::ArrayXXd::Zero(length, channels)) {}
  AudioSignal(int rate, Eigen::ArrayXXd data)
      : sample_rate(rate), samples(std::move(data)) {}

  Eigen::Index length() const { return samples.rows(); }
  Eigen::Index channels() const { return samples.cols(); }
  double duration() const {
    return static_cast<double>(length()) / sample_rate;
  }
  auto channel(Eigen::Index c) { return samples.col(c); }
  auto channel(Eigen::Index c) const { return samples.col(c); }
};

// 16-bit PCM little-endian RIFF/WAVE. Other encodings are rejected.
AudioSignal ReadWav(const std::string& path);
void WriteWav(const std::string& path, const AudioSignal& signal);

}  // namespace rsan

#endif  // RSAN_AUDIO_H_
