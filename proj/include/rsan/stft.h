// rsan/stft.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_STFT_H_
#define RSAN_STFT_H_

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "rsan/types.h"

namespace rsan {

enum class WindowType { kSqrtHann, kHann, kRect };

WindowType ParseWindow(const std::string& name);
std::string WindowName(WindowType w);

struct StftConfig {
  int window_len = 256;
  int hop = 64;
  WindowType window = WindowType::kSqrtHann;

  int bins() const { return window_len / 2 + 1; }
};

// Periodic window of length cfg.window_len.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> MakeWindow(const StftConfig& cfg) {
  const int n = cfg.window_len;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> w(n);
  for (int i = 0; i < n; ++i) {
    double hann = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
    switch (cfg.window) {
      case WindowType::kSqrtHann: w[i] = static_cast<Scalar>(std::sqrt(hann)); break;
      case WindowType::kHann: w[i] = static_cast<Scalar>(hann); break;
      case WindowType::kRect: w[i] = Scalar(1); break;
    }
  }
  return w;
}

// Sum of squared window over all hop shifts, when it is constant (weighted
// overlap-add with identical analysis and synthesis windows). Throws if the
// window/hop pair does not overlap-add to a constant.
double OverlapAddGain(const StftConfig& cfg);

void ValidateStftConfig(const StftConfig& cfg);

// Number of frames for a signal of `length` samples.
inline Eigen::Index NumFrames(Eigen::Index length, const StftConfig& cfg) {
  return (length - cfg.window_len) / cfg.hop + 1;
}

template <typename Derived>
Spectrogram<typename Derived::Scalar> Stft(const Eigen::DenseBase<Derived>& x,
                                           const StftConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  ValidateStftConfig(cfg);
  const Eigen::Index len = x.size();
  if (len < cfg.window_len) throw Error("input too short");
  const Eigen::Index frames = NumFrames(len, cfg);
  const int bins = cfg.bins();
  const auto window = MakeWindow<Scalar>(cfg);

  Spectrogram<Scalar> spec(frames, bins);
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<Scalar> frame(cfg.window_len);
  std::vector<std::complex<Scalar>> out;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index offset = t * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      frame[n] = x.derived().coeff(offset + n) * window[n];
    fft.fwd(out, frame);
    for (int k = 0; k < bins; ++k) spec(t, k) = out[k];
  }
  return spec;
}

// Weighted overlap-add inverse. Output length is (T - 1) * hop + window_len.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> Istft(const Spectrogram<Scalar>& spec,
                                              const StftConfig& cfg) {
  const double gain = OverlapAddGain(cfg);
  if (spec.cols() != cfg.bins())
    throw Error("istft: spectrogram has " + std::to_string(spec.cols()) +
                " bins, config expects " + std::to_string(cfg.bins()));
  const Eigen::Index frames = spec.rows();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> y =
      Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(
          frames == 0 ? 0 : (frames - 1) * cfg.hop + cfg.window_len);
  const auto window = MakeWindow<Scalar>(cfg);
  Eigen::FFT<Scalar> fft;
  fft.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  std::vector<std::complex<Scalar>> half(cfg.bins());
  std::vector<Scalar> frame;
  const Scalar scale = static_cast<Scalar>(1.0 / gain);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = 0; k < cfg.bins(); ++k) half[k] = spec(t, k);
    fft.inv(frame, half, cfg.window_len);
    const Eigen::Index offset = t * cfg.hop;
    for (int n = 0; n < cfg.window_len; ++n)
      y[offset + n] += frame[n] * window[n] * scale;
  }
  return y;
}

template <typename Scalar>
struct IpdFeature {
  MagnitudeSpectrogram<Scalar> cos;
  MagnitudeSpectrogram<Scalar> sin;
};

// cos/sin of the phase of ch1 relative to ch2. Bins where either channel has
// magnitude below 1e-12 are assigned zero phase difference.
template <typename Scalar>
IpdFeature<Scalar> Ipd(const Spectrogram<Scalar>& ch1,
                       const Spectrogram<Scalar>& ch2) {
  if (ch1.rows() != ch2.rows() || ch1.cols() != ch2.cols())
    throw Error("ipd: dimension mismatch");
  IpdFeature<Scalar> f{MagnitudeSpectrogram<Scalar>::Ones(ch1.rows(), ch1.cols()),
                       MagnitudeSpectrogram<Scalar>::Zero(ch1.rows(), ch1.cols())};
  for (Eigen::Index k = 0; k < ch1.cols(); ++k) {
    for (Eigen::Index t = 0; t < ch1.rows(); ++t) {
      const Scalar a1 = std::abs(ch1(t, k)), a2 = std::abs(ch2(t, k));
      if (a1 < Scalar(1e-12) || a2 < Scalar(1e-12)) continue;
      const std::complex<Scalar> r = ch1(t, k) * std::conj(ch2(t, k)) / (a1 * a2);
      f.cos(t, k) = r.real();
      f.sin(t, k) = r.imag();
    }
  }
  return f;
}

// Scales the mixture magnitude by the mask and keeps the mixture phase.
template <typename Scalar>
Spectrogram<Scalar> ApplyMask(const Mask<Scalar>& mask,
                              const Spectrogram<Scalar>& mix) {
  if (mask.rows() != mix.rows() || mask.cols() != mix.cols())
    throw Error("apply_mask: dimension mismatch");
  return mix * mask.template cast<std::complex<Scalar>>();
}

}  // namespace rsan

#endif  // RSAN_STFT_H_
