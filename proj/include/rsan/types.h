// rsan/types.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_TYPES_H_
#define RSAN_TYPES_H_

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace rsan {

// Time-frequency arrays are stored frames x bins.
template <typename Scalar>
using Spectrogram =
    Eigen::Array<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using MagnitudeSpectrogram = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Per-bin gain in [0, 1].
template <typename Scalar>
using Mask = MagnitudeSpectrogram<Scalar>;

template <typename Scalar>
using Embedding = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using ComplexSpectrogram = Spectrogram<double>;
using MagnitudeSpectrogramd = MagnitudeSpectrogram<double>;
using Maskd = Mask<double>;
using SpeakerEmbedding = Embedding<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rsan

#endif  // RSAN_TYPES_H_
