// rsan/network.h

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef RSAN_NETWORK_H_
#define RSAN_NETWORK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "rsan/estimator.h"
#include "rsan/stft.h"
#include "rsan/types.h"

namespace rsan {

struct NetShape {
  int bins = 129;
  int emb_dim = 32;
  int hidden = 64;  // per direction
  int proj = 64;    // input projection width

  // Per-frame input: normalized log magnitude, IPD cos, IPD sin, residual,
  // then the previous embedding.
  int static_dim() const { return 3 * bins; }
  int input_dim() const { return 4 * bins + emb_dim; }
  bool operator==(const NetShape&) const = default;
};

// All trainable tensors. Biases are stored as n x 1 matrices so that every
// tensor can be visited uniformly.
template <typename Scalar>
struct ModelParams {
  using Mat = Matrix<Scalar>;

  NetShape shape;
  Mat in_w, in_b;                  // proj x input_dim, proj x 1
  Mat fwd_wx, fwd_wh, fwd_b;       // 4H x proj, 4H x H, 4H x 1 (gates i f o g)
  Mat bwd_wx, bwd_wh, bwd_b;
  Mat mask_w, mask_b;              // bins x 2H, bins x 1
  Mat emb_w, emb_b;                // emb_dim x 2H, emb_dim x 1

  static ModelParams Zeros(const NetShape& shape);
  static ModelParams Random(const NetShape& shape, uint64_t seed);

  template <typename F>
  void ForEach(F&& f) {
    f("input.weight", in_w);
    f("input.bias", in_b);
    f("lstm_fwd.w_ih", fwd_wx);
    f("lstm_fwd.w_hh", fwd_wh);
    f("lstm_fwd.bias", fwd_b);
    f("lstm_bwd.w_ih", bwd_wx);
    f("lstm_bwd.w_hh", bwd_wh);
    f("lstm_bwd.bias", bwd_b);
    f("mask.weight", mask_w);
    f("mask.bias", mask_b);
    f("embed.weight", emb_w);
    f("embed.bias", emb_b);
  }
  template <typename F>
  void ForEach(F&& f) const {
    const_cast<ModelParams*>(this)->ForEach(
        [&](const char* name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }

  template <typename To>
  ModelParams<To> Cast() const;

  Eigen::Index Count() const;
  bool AllFinite() const;
  void SetZero();
  ModelParams& operator+=(const ModelParams& o);
  ModelParams& operator*=(Scalar s);
};

// Input planes shared by every iteration of one block, laid out
// static_dim x frames (one column per frame).
template <typename Scalar>
Matrix<Scalar> StaticFeatures(const BlockFeatures& block);

template <typename Scalar>
struct ForwardCache {
  Matrix<Scalar> residual;  // bins x T
  Vector<Scalar> z_prev;
  Matrix<Scalar> u;         // proj x T, after tanh
  Matrix<Scalar> gates[2];  // 4H x T, activated
  Matrix<Scalar> cell[2];   // H x T
  Matrix<Scalar> h;         // 2H x T, [forward; backward]
  Matrix<Scalar> mask;      // bins x T
  Vector<Scalar> pooled, e, z;
  Scalar e_norm = 0;
};

template <typename Scalar>
struct InputGradients {
  Matrix<Scalar> residual;  // bins x T
  Vector<Scalar> z_prev;
  Matrix<Scalar> static_proj;  // proj x T, gradient on ProjectStatic's output
};

// One bidirectional recurrent layer between an input projection and the
// mask/embedding heads. Stateless; all state lives in ModelParams and caches.
template <typename Scalar>
class RecurrentMaskNet {
 public:
  // `features` is static_dim x T, `residual` bins x T.
  static ForwardCache<Scalar> Forward(const ModelParams<Scalar>& p,
                                      const Matrix<Scalar>& features,
                                      const Matrix<Scalar>& residual,
                                      const Vector<Scalar>& z_prev);

  // Accumulates parameter gradients into `grads` given upstream gradients
  // on the mask (bins x T) and embedding. Returns gradients on the residual
  // and z_prev inputs.
  static InputGradients<Scalar> Backward(const ModelParams<Scalar>& p,
                                         const Matrix<Scalar>& features,
                                         const ForwardCache<Scalar>& cache,
                                         const Matrix<Scalar>& d_mask,
                                         const Vector<Scalar>& d_z,
                                         ModelParams<Scalar>* grads);

  // The static part of the input projection is shared by every iteration of
  // a block; these split Forward/Backward around it so it is computed once.
  static Matrix<Scalar> ProjectStatic(const ModelParams<Scalar>& p,
                                      const Matrix<Scalar>& features);
  static ForwardCache<Scalar> ForwardProjected(const ModelParams<Scalar>& p,
                                               const Matrix<Scalar>& static_proj,
                                               const Matrix<Scalar>& residual,
                                               const Vector<Scalar>& z_prev);
  // Leaves the static columns of the input weight untouched.
  static InputGradients<Scalar> BackwardProjected(const ModelParams<Scalar>& p,
                                                  const ForwardCache<Scalar>& cache,
                                                  const Matrix<Scalar>& d_mask,
                                                  const Vector<Scalar>& d_z,
                                                  ModelParams<Scalar>* grads);
  static void AccumulateStatic(const Matrix<Scalar>& features,
                               const Matrix<Scalar>& d_static_proj,
                               ModelParams<Scalar>* grads);
};

// MaskEstimator backed by the trained network.
class NetworkEstimator : public MaskEstimator {
 public:
  explicit NetworkEstimator(ModelParams<float> params);
  MaskEstimate Estimate(const EstimatorInput& in) const override;
  int embedding_dim() const override { return params_.shape.emb_dim; }
  const ModelParams<float>& params() const { return params_; }

 private:
  ModelParams<float> params_;
};

inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  StftConfig stft;
  uint32_t epoch = 0;
};

// Layout: "RSANCKPT", u32 version, u32 window_len, u32 hop, u32 window,
// u32 epoch, u32 tensor count, per tensor {u16 name length, name, u32 rows,
// u32 cols}, then every tensor's values as little-endian float32 in
// column-major order.
std::string SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint ParseCheckpoint(const std::string& bytes);
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace rsan

#endif  // RSAN_NETWORK_H_
