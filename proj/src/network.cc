// rsan/network.cc

// Copyright 2026 rsan authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "rsan/network.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rsan/random.h"

namespace rsan {

namespace {

template <typename Scalar>
Matrix<Scalar> Sigmoid(const Matrix<Scalar>& x) {
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

template <typename Scalar>
void FillUniform(Matrix<Scalar>* m, double bound, Rng& rng) {
  for (Eigen::Index j = 0; j < m->cols(); ++j)
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      (*m)(i, j) = static_cast<Scalar>(rng.Uniform(-bound, bound));
}

constexpr double kNormEps = 1e-12;

}  // namespace

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::Zeros(const NetShape& s) {
  if (s.bins <= 0 || s.emb_dim <= 0 || s.hidden <= 0 || s.proj <= 0)
    throw Error("invalid network shape");
  ModelParams p;
  p.shape = s;
  const int h4 = 4 * s.hidden;
  p.in_w = Mat::Zero(s.proj, s.input_dim());
  p.in_b = Mat::Zero(s.proj, 1);
  p.fwd_wx = Mat::Zero(h4, s.proj);
  p.fwd_wh = Mat::Zero(h4, s.hidden);
  p.fwd_b = Mat::Zero(h4, 1);
  p.bwd_wx = Mat::Zero(h4, s.proj);
  p.bwd_wh = Mat::Zero(h4, s.hidden);
  p.bwd_b = Mat::Zero(h4, 1);
  p.mask_w = Mat::Zero(s.bins, 2 * s.hidden);
  p.mask_b = Mat::Zero(s.bins, 1);
  p.emb_w = Mat::Zero(s.emb_dim, 2 * s.hidden);
  p.emb_b = Mat::Zero(s.emb_dim, 1);
  return p;
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::Random(const NetShape& s, uint64_t seed) {
  ModelParams p = Zeros(s);
  Rng rng(seed);
  FillUniform(&p.in_w, std::sqrt(6.0 / (s.input_dim() + s.proj)), rng);
  const double lstm = 1.0 / std::sqrt(static_cast<double>(s.hidden));
  for (Mat* m : {&p.fwd_wx, &p.fwd_wh, &p.bwd_wx, &p.bwd_wh}) FillUniform(m, lstm, rng);
  // Forget gates start open.
  p.fwd_b.block(s.hidden, 0, s.hidden, 1).setOnes();
  p.bwd_b.block(s.hidden, 0, s.hidden, 1).setOnes();
  FillUniform(&p.mask_w, std::sqrt(6.0 / (2 * s.hidden + s.bins)), rng);
  FillUniform(&p.emb_w, std::sqrt(6.0 / (2 * s.hidden + s.emb_dim)), rng);
  return p;
}

template <typename Scalar>
template <typename To>
ModelParams<To> ModelParams<Scalar>::Cast() const {
  ModelParams<To> out;
  out.shape = shape;
  out.in_w = in_w.template cast<To>();
  out.in_b = in_b.template cast<To>();
  out.fwd_wx = fwd_wx.template cast<To>();
  out.fwd_wh = fwd_wh.template cast<To>();
  out.fwd_b = fwd_b.template cast<To>();
  out.bwd_wx = bwd_wx.template cast<To>();
  out.bwd_wh = bwd_wh.template cast<To>();
  out.bwd_b = bwd_b.template cast<To>();
  out.mask_w = mask_w.template cast<To>();
  out.mask_b = mask_b.template cast<To>();
  out.emb_w = emb_w.template cast<To>();
  out.emb_b = emb_b.template cast<To>();
  return out;
}

template <typename Scalar>
Eigen::Index ModelParams<Scalar>::Count() const {
  Eigen::Index n = 0;
  ForEach([&](const char*, const Mat& m) { n += m.size(); });
  return n;
}

template <typename Scalar>
bool ModelParams<Scalar>::AllFinite() const {
  bool ok = true;
  ForEach([&](const char*, const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename Scalar>
void ModelParams<Scalar>::SetZero() {
  ForEach([](const char*, Mat& m) { m.setZero(); });
}

template <typename Scalar>
ModelParams<Scalar>& ModelParams<Scalar>::operator+=(const ModelParams& o) {
  std::vector<const Mat*> other;
  o.ForEach([&](const char*, const Mat& m) { other.push_back(&m); });
  size_t k = 0;
  ForEach([&](const char* name, Mat& m) {
    if (m.rows() != other[k]->rows() || m.cols() != other[k]->cols())
      throw Error(std::string("parameter shape mismatch in ") + name);
    m += *other[k++];
  });
  return *this;
}

template <typename Scalar>
ModelParams<Scalar>& ModelParams<Scalar>::operator*=(Scalar s) {
  ForEach([&](const char*, Mat& m) { m *= s; });
  return *this;
}

template <typename Scalar>
Matrix<Scalar> StaticFeatures(const BlockFeatures& block) {
  const Eigen::Index T = block.frames(), F = block.bins();
  Matrix<Scalar> x(3 * F, T);
  const double floor = 1e-3 * block.magnitude.mean() + 1e-12;
  Eigen::ArrayXXd lm = (block.magnitude + floor).log();
  const double mean = lm.mean();
  const double sd = std::sqrt((lm - mean).square().mean()) + 1e-6;
  lm = (lm - mean) / sd;
  x.topRows(F) = lm.transpose().matrix().cast<Scalar>();
  x.middleRows(F, F) = block.ipd.cos.transpose().matrix().cast<Scalar>();
  x.bottomRows(F) = block.ipd.sin.transpose().matrix().cast<Scalar>();
  return x;
}

template <typename Scalar>
Matrix<Scalar> RecurrentMaskNet<Scalar>::ProjectStatic(const ModelParams<Scalar>& p,
                                                       const Matrix<Scalar>& features) {
  if (features.rows() != p.shape.static_dim()) throw Error("network input shape mismatch");
  return p.in_w.leftCols(p.shape.static_dim()) * features;
}

template <typename Scalar>
ForwardCache<Scalar> RecurrentMaskNet<Scalar>::Forward(const ModelParams<Scalar>& p,
                                                       const Matrix<Scalar>& features,
                                                       const Matrix<Scalar>& residual,
                                                       const Vector<Scalar>& z_prev) {
  return ForwardProjected(p, ProjectStatic(p, features), residual, z_prev);
}

template <typename Scalar>
ForwardCache<Scalar> RecurrentMaskNet<Scalar>::ForwardProjected(
    const ModelParams<Scalar>& p, const Matrix<Scalar>& static_proj,
    const Matrix<Scalar>& residual, const Vector<Scalar>& z_prev) {
  const NetShape& s = p.shape;
  const Eigen::Index T = static_proj.cols();
  const int H = s.hidden, F = s.bins;
  if (static_proj.rows() != s.proj || residual.rows() != F || residual.cols() != T ||
      z_prev.size() != s.emb_dim)
    throw Error("network input shape mismatch");
  if (T == 0) throw Error("network input has no frames");

  ForwardCache<Scalar> c;
  c.residual = residual;
  c.z_prev = z_prev;
  const Vector<Scalar> bias = p.in_w.rightCols(s.emb_dim) * z_prev + p.in_b.col(0);
  Matrix<Scalar> pre = static_proj;
  pre.noalias() += p.in_w.middleCols(3 * F, F) * residual;
  pre.colwise() += bias;
  c.u = pre.array().tanh().matrix();

  c.h.resize(2 * H, T);
  for (int d = 0; d < 2; ++d) {
    const Matrix<Scalar>& wx = d == 0 ? p.fwd_wx : p.bwd_wx;
    const Matrix<Scalar>& wh = d == 0 ? p.fwd_wh : p.bwd_wh;
    const Matrix<Scalar>& b = d == 0 ? p.fwd_b : p.bwd_b;
    Matrix<Scalar> xg = wx * c.u;
    xg.colwise() += b.col(0);
    c.gates[d].resize(4 * H, T);
    c.cell[d].resize(H, T);
    Vector<Scalar> h = Vector<Scalar>::Zero(H), cell = Vector<Scalar>::Zero(H);
    Vector<Scalar> g(4 * H);
    for (Eigen::Index step = 0; step < T; ++step) {
      const Eigen::Index t = d == 0 ? step : T - 1 - step;
      g.noalias() = xg.col(t);
      g.noalias() += wh * h;
      auto ga = g.array();
      ga.head(3 * H) = Scalar(1) / (Scalar(1) + (-ga.head(3 * H)).exp());
      ga.tail(H) = ga.tail(H).tanh();
      cell = (ga.segment(H, H) * cell.array() + ga.head(H) * ga.tail(H)).matrix();
      h = (ga.segment(2 * H, H) * cell.array().tanh()).matrix();
      c.gates[d].col(t) = g;
      c.cell[d].col(t) = cell;
      c.h.block(d * H, t, H, 1) = h;
    }
  }

  Matrix<Scalar> logits = p.mask_w * c.h;
  logits.colwise() += p.mask_b.col(0);
  c.mask = Sigmoid<Scalar>(logits);

  c.pooled = c.h.rowwise().mean();
  c.e = p.emb_w * c.pooled + p.emb_b.col(0);
  c.e_norm = std::sqrt(c.e.squaredNorm() + Scalar(kNormEps));
  c.z = c.e / c.e_norm;
  return c;
}

template <typename Scalar>
InputGradients<Scalar> RecurrentMaskNet<Scalar>::Backward(
    const ModelParams<Scalar>& p, const Matrix<Scalar>& features,
    const ForwardCache<Scalar>& c, const Matrix<Scalar>& d_mask,
    const Vector<Scalar>& d_z, ModelParams<Scalar>* grads) {
  if (features.rows() != p.shape.static_dim() || features.cols() != c.u.cols())
    throw Error("network input shape mismatch");
  InputGradients<Scalar> g = BackwardProjected(p, c, d_mask, d_z, grads);
  AccumulateStatic(features, g.static_proj, grads);
  return g;
}

template <typename Scalar>
void RecurrentMaskNet<Scalar>::AccumulateStatic(const Matrix<Scalar>& features,
                                                const Matrix<Scalar>& d_static_proj,
                                                ModelParams<Scalar>* grads) {
  grads->in_w.leftCols(features.rows()).noalias() += d_static_proj * features.transpose();
}

template <typename Scalar>
InputGradients<Scalar> RecurrentMaskNet<Scalar>::BackwardProjected(
    const ModelParams<Scalar>& p, const ForwardCache<Scalar>& c,
    const Matrix<Scalar>& d_mask, const Vector<Scalar>& d_z,
    ModelParams<Scalar>* grads) {
  const NetShape& s = p.shape;
  const Eigen::Index T = c.u.cols();
  const int H = s.hidden, F = s.bins;
  if (d_mask.rows() != F || d_mask.cols() != T || d_z.size() != s.emb_dim)
    throw Error("network upstream gradient shape mismatch");
  if (!(grads->shape == s)) throw Error("gradient buffer shape mismatch");

  // Mask head.
  const Matrix<Scalar> d_logits =
      (d_mask.array() * c.mask.array() * (Scalar(1) - c.mask.array())).matrix();
  grads->mask_w.noalias() += d_logits * c.h.transpose();
  grads->mask_b.col(0) += d_logits.rowwise().sum();
  Matrix<Scalar> d_h = p.mask_w.transpose() * d_logits;

  // Embedding head: z = e / sqrt(|e|^2 + eps).
  const Scalar n = c.e_norm;
  const Vector<Scalar> d_e = d_z / n - c.e * (c.e.dot(d_z) / (n * n * n));
  grads->emb_w.noalias() += d_e * c.pooled.transpose();
  grads->emb_b.col(0) += d_e;
  const Vector<Scalar> d_pooled = p.emb_w.transpose() * d_e / static_cast<Scalar>(T);
  d_h.colwise() += d_pooled;

  Matrix<Scalar> d_u = Matrix<Scalar>::Zero(s.proj, T);
  for (int d = 0; d < 2; ++d) {
    const Matrix<Scalar>& wx = d == 0 ? p.fwd_wx : p.bwd_wx;
    const Matrix<Scalar>& wh = d == 0 ? p.fwd_wh : p.bwd_wh;
    Matrix<Scalar>& g_wx = d == 0 ? grads->fwd_wx : grads->bwd_wx;
    Matrix<Scalar>& g_wh = d == 0 ? grads->fwd_wh : grads->bwd_wh;
    Matrix<Scalar>& g_b = d == 0 ? grads->fwd_b : grads->bwd_b;
    const Matrix<Scalar>& gates = c.gates[d];
    const Matrix<Scalar>& cell = c.cell[d];

    Matrix<Scalar> d_gates(4 * H, T);
    Matrix<Scalar> h_prev = Matrix<Scalar>::Zero(H, T);
    Vector<Scalar> dh_next = Vector<Scalar>::Zero(H), dc_next = Vector<Scalar>::Zero(H);
    for (Eigen::Index step = T - 1; step >= 0; --step) {
      const Eigen::Index t = d == 0 ? step : T - 1 - step;
      const Eigen::Index tp = d == 0 ? t - 1 : t + 1;  // previous step in time
      const bool first = step == 0;
      auto gi = gates.col(t).array().head(H);
      auto gf = gates.col(t).array().segment(H, H);
      auto go = gates.col(t).array().segment(2 * H, H);
      auto gg = gates.col(t).array().tail(H);
      const Eigen::Array<Scalar, Eigen::Dynamic, 1> tc = cell.col(t).array().tanh();
      const Eigen::Array<Scalar, Eigen::Dynamic, 1> c_prev =
          first ? Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(H)
                : Eigen::Array<Scalar, Eigen::Dynamic, 1>(cell.col(tp).array());
      if (!first) h_prev.col(t) = c.h.block(d * H, tp, H, 1);

      const Eigen::Array<Scalar, Eigen::Dynamic, 1> dh =
          d_h.block(d * H, t, H, 1).array() + dh_next.array();
      const Eigen::Array<Scalar, Eigen::Dynamic, 1> dc =
          dh * go * (Scalar(1) - tc.square()) + dc_next.array();
      auto dg = d_gates.col(t).array();
      dg.head(H) = dc * gg * gi * (Scalar(1) - gi);
      dg.segment(H, H) = dc * c_prev * gf * (Scalar(1) - gf);
      dg.segment(2 * H, H) = dh * tc * go * (Scalar(1) - go);
      dg.tail(H) = dc * gi * (Scalar(1) - gg.square());
      dc_next = (dc * gf).matrix();
      dh_next.noalias() = wh.transpose() * d_gates.col(t);
    }
    g_wh.noalias() += d_gates * h_prev.transpose();
    g_wx.noalias() += d_gates * c.u.transpose();
    g_b.col(0) += d_gates.rowwise().sum();
    d_u.noalias() += wx.transpose() * d_gates;
  }

  Matrix<Scalar> d_pre = (d_u.array() * (Scalar(1) - c.u.array().square())).matrix();
  grads->in_w.middleCols(3 * F, F).noalias() += d_pre * c.residual.transpose();
  const Vector<Scalar> d_pre_sum = d_pre.rowwise().sum();
  grads->in_w.rightCols(s.emb_dim).noalias() += d_pre_sum * c.z_prev.transpose();
  grads->in_b.col(0) += d_pre_sum;

  InputGradients<Scalar> out;
  out.residual = p.in_w.middleCols(3 * F, F).transpose() * d_pre;
  out.z_prev = p.in_w.rightCols(s.emb_dim).transpose() * d_pre_sum;
  out.static_proj = std::move(d_pre);
  return out;
}

NetworkEstimator::NetworkEstimator(ModelParams<float> params) : params_(std::move(params)) {
  if (!params_.AllFinite()) throw Error("non-finite model");
}

MaskEstimate NetworkEstimator::Estimate(const EstimatorInput& in) const {
  CheckEstimatorInput(in, params_.shape.emb_dim);
  if (in.block.bins() != params_.shape.bins)
    throw Error("network expects " + std::to_string(params_.shape.bins) +
                " bins, block has " + std::to_string(in.block.bins()));
  const Matrix<float> x = StaticFeatures<float>(in.block);
  const Matrix<float> r = in.residual.transpose().matrix().cast<float>();
  const Vector<float> z = in.z_prev.cast<float>();
  const auto c = RecurrentMaskNet<float>::Forward(params_, x, r, z);
  MaskEstimate out;
  out.mask = c.mask.transpose().array().cast<double>().cwiseMax(0.0).cwiseMin(1.0);
  out.embedding = c.z.cast<double>();
  out.embedding /= out.embedding.norm();
  return out;
}

// Checkpoints.

namespace {

constexpr char kMagic[8] = {'R', 'S', 'A', 'N', 'C', 'K', 'P', 'T'};

void PutU32(std::string* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU16(std::string* out, uint16_t v) {
  out->push_back(static_cast<char>(v & 0xff));
  out->push_back(static_cast<char>(v >> 8));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}
  void Need(size_t n) const {
    if (pos_ + n > b_.size()) throw Error("corrupt checkpoint");
  }
  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint16_t U16() {
    Need(2);
    uint16_t v = static_cast<uint16_t>(static_cast<unsigned char>(b_[pos_]) |
                                       (static_cast<unsigned char>(b_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  std::string Bytes(size_t n) {
    Need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::string& b_;
  size_t pos_ = 0;
};

}  // namespace

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  PutU32(&out, kCheckpointVersion);
  PutU32(&out, static_cast<uint32_t>(ckpt.stft.window_len));
  PutU32(&out, static_cast<uint32_t>(ckpt.stft.hop));
  PutU32(&out, static_cast<uint32_t>(ckpt.stft.window));
  PutU32(&out, ckpt.epoch);
  uint32_t count = 0;
  ckpt.params.ForEach([&](const char*, const Matrix<float>&) { ++count; });
  PutU32(&out, count);
  ckpt.params.ForEach([&](const char* name, const Matrix<float>& m) {
    const size_t len = std::strlen(name);
    PutU16(&out, static_cast<uint16_t>(len));
    out.append(name, len);
    PutU32(&out, static_cast<uint32_t>(m.rows()));
    PutU32(&out, static_cast<uint32_t>(m.cols()));
  });
  ckpt.params.ForEach([&](const char*, const Matrix<float>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      uint32_t bits;
      const float v = m.data()[i];
      std::memcpy(&bits, &v, 4);
      PutU32(&out, bits);
    }
  });
  return out;
}

Checkpoint ParseCheckpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.Bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw Error("corrupt checkpoint");
  const uint32_t version = r.U32();
  if (version != kCheckpointVersion)
    throw Error("unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.stft.window_len = static_cast<int>(r.U32());
  ck.stft.hop = static_cast<int>(r.U32());
  const uint32_t window = r.U32();
  if (window > 2) throw Error("corrupt checkpoint");
  ck.stft.window = static_cast<WindowType>(window);
  ck.epoch = r.U32();
  const uint32_t count = r.U32();

  struct Entry {
    std::string name;
    uint32_t rows, cols;
  };
  std::vector<Entry> table;
  for (uint32_t k = 0; k < count; ++k) {
    Entry e;
    e.name = r.Bytes(r.U16());
    e.rows = r.U32();
    e.cols = r.U32();
    table.push_back(std::move(e));
  }
  // Shape from the table, then verify every tensor against it.
  auto find = [&](const std::string& name) -> const Entry& {
    for (const auto& e : table)
      if (e.name == name) return e;
    throw Error("corrupt checkpoint: missing tensor " + name);
  };
  NetShape shape;
  shape.bins = static_cast<int>(find("mask.weight").rows);
  shape.hidden = static_cast<int>(find("lstm_fwd.w_hh").cols);
  shape.proj = static_cast<int>(find("input.weight").rows);
  shape.emb_dim = static_cast<int>(find("embed.weight").rows);
  if (shape.bins <= 0 || shape.hidden <= 0 || shape.proj <= 0 || shape.emb_dim <= 0 ||
      shape.bins > 1 << 16 || shape.hidden > 1 << 14 || shape.proj > 1 << 14 ||
      shape.emb_dim > 1 << 14)
    throw Error("corrupt checkpoint");
  ck.params = ModelParams<float>::Zeros(shape);
  size_t k = 0;
  bool shapes_ok = table.size() == count;
  ck.params.ForEach([&](const char* name, Matrix<float>& m) {
    if (k >= table.size() || table[k].name != name || table[k].rows != m.rows() ||
        table[k].cols != m.cols())
      shapes_ok = false;
    ++k;
  });
  if (!shapes_ok || k != table.size()) throw Error("corrupt checkpoint: shape table");
  if (r.remaining() != static_cast<size_t>(ck.params.Count()) * 4)
    throw Error("corrupt checkpoint");
  ck.params.ForEach([&](const char*, Matrix<float>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const uint32_t bits = r.U32();
      std::memcpy(m.data() + i, &bits, 4);
    }
  });
  if (!ck.params.AllFinite()) throw Error("non-finite model");
  return ck;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = SerializeCheckpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("write failed: " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return ParseCheckpoint(bytes);
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::Cast<double>() const;
template ModelParams<float> ModelParams<double>::Cast<float>() const;
template ModelParams<float> ModelParams<float>::Cast<float>() const;
template ModelParams<double> ModelParams<double>::Cast<double>() const;
template Matrix<float> StaticFeatures<float>(const BlockFeatures&);
template Matrix<double> StaticFeatures<double>(const BlockFeatures&);
template class RecurrentMaskNet<float>;
template class RecurrentMaskNet<double>;

}  // namespace rsan
