#include "onadesep/network.h"

#include <cmath>

#include "onadesep/errors.h"

namespace onadesep {
namespace {

using Eigen::Dynamic;
using Eigen::Index;

template <typename S>
using Mat = Eigen::Matrix<S, Dynamic, Dynamic>;
template <typename S>
using RowMat = Eigen::Matrix<S, Dynamic, Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstRowMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using RowMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<S, Dynamic, 1>>;
template <typename S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Dynamic, 1>>;

// Gathers strided windows: column t holds x[:, t*stride - pad + k] for
// k = 0..kernel-1 stacked, zero outside the signal.
template <typename S>
Mat<S> im2col(const Mat<S>& x, int kernel, int stride, int pad, Index out_len) {
  const Index channels = x.rows();
  const Index in_len = x.cols();
  Mat<S> cols = Mat<S>::Zero(kernel * channels, out_len);
  for (Index t = 0; t < out_len; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index src = t * stride - pad + k;
      if (src < 0 || src >= in_len) continue;
      cols.col(t).segment(k * channels, channels) = x.col(src);
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds window columns back onto a signal.
template <typename S>
Mat<S> col2im(const Mat<S>& cols, int kernel, int stride, int pad, Index channels,
              Index out_len) {
  Mat<S> x = Mat<S>::Zero(channels, out_len);
  for (Index t = 0; t < cols.cols(); ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index dst = t * stride - pad + k;
      if (dst < 0 || dst >= out_len) continue;
      x.col(dst) += cols.col(t).segment(k * channels, channels);
    }
  }
  return x;
}

template <typename S>
Mat<S> sigmoid(const Mat<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

template <typename S>
Mat<S> glu(const Mat<S>& p) {
  const Index c = p.rows() / 2;
  return (p.topRows(c).array() * sigmoid<S>(p.bottomRows(c)).array()).matrix();
}

template <typename S>
Mat<S> glu_backward(const Mat<S>& p, const Mat<S>& d_out) {
  const Index c = p.rows() / 2;
  const Mat<S> gate = sigmoid<S>(p.bottomRows(c));
  Mat<S> d(p.rows(), p.cols());
  d.topRows(c) = (d_out.array() * gate.array()).matrix();
  d.bottomRows(c) =
      (d_out.array() * p.topRows(c).array() * gate.array() * (S(1) - gate.array()))
          .matrix();
  return d;
}

template <typename S>
Mat<S> affine(std::span<const S> params, std::size_t w_off, std::size_t b_off, Index rows,
              Index cols, const Mat<S>& x) {
  ConstRowMap<S> w(params.data() + w_off, rows, cols);
  ConstVecMap<S> b(params.data() + b_off, rows);
  Mat<S> y = w * x;
  y.colwise() += b;
  return y;
}

// gb += row sums of dy, accumulated column by column. Eigen's vectorised
// rowwise().sum() changes its summation order with heap alignment, which
// breaks bitwise reproducibility.
template <typename S, typename Out>
void add_row_sums(Out& gb, const Mat<S>& dy) {
  for (Index c = 0; c < dy.cols(); ++c) gb += dy.col(c);
}

// Accumulates weight/bias grads of y = W x + b and returns dx.
template <typename S>
Mat<S> affine_backward(std::span<const S> params, std::span<S> grads, std::size_t w_off,
                       std::size_t b_off, Index rows, Index cols, const Mat<S>& x,
                       const Mat<S>& dy, bool need_dx = true) {
  RowMap<S> gw(grads.data() + w_off, rows, cols);
  VecMap<S> gb(grads.data() + b_off, rows);
  gw.noalias() += dy * x.transpose();
  add_row_sums<S>(gb, dy);
  if (!need_dx) return Mat<S>();
  ConstRowMap<S> w(params.data() + w_off, rows, cols);
  return w.transpose() * dy;
}

template <typename S>
typename SeparatorNet<S>::LstmTape lstm_forward(std::span<const S> params, std::size_t w_ih,
                                                std::size_t w_hh, std::size_t bias,
                                                int input_size, int hidden, const Mat<S>& x) {
  typename SeparatorNet<S>::LstmTape tape;
  const Index len = x.cols();
  const Index h4 = 4 * hidden;
  ConstRowMap<S> whh(params.data() + w_hh, h4, hidden);
  Mat<S> pre = affine<S>(params, w_ih, bias, h4, input_size, x);
  tape.input = x;
  tape.gates.resize(h4, len);
  tape.cells.resize(hidden, len);
  tape.hidden.resize(hidden, len);
  Eigen::Matrix<S, Dynamic, 1> h = Eigen::Matrix<S, Dynamic, 1>::Zero(hidden);
  Eigen::Matrix<S, Dynamic, 1> c = Eigen::Matrix<S, Dynamic, 1>::Zero(hidden);
  Eigen::Matrix<S, Dynamic, 1> a(h4);
  for (Index t = 0; t < len; ++t) {
    a.noalias() = pre.col(t) + whh * h;
    auto gates = tape.gates.col(t);
    gates.head(2 * hidden) =
        (S(1) / (S(1) + (-a.head(2 * hidden).array()).exp())).matrix();
    gates.segment(2 * hidden, hidden) = a.segment(2 * hidden, hidden).array().tanh().matrix();
    gates.tail(hidden) = (S(1) / (S(1) + (-a.tail(hidden).array()).exp())).matrix();
    c = (gates.segment(hidden, hidden).array() * c.array() +
         gates.head(hidden).array() * gates.segment(2 * hidden, hidden).array())
            .matrix();
    h = (gates.tail(hidden).array() * c.array().tanh()).matrix();
    tape.cells.col(t) = c;
    tape.hidden.col(t) = h;
  }
  return tape;
}

template <typename S>
Mat<S> lstm_backward(std::span<const S> params, std::span<S> grads, std::size_t w_ih,
                     std::size_t w_hh, std::size_t bias, int input_size, int hidden,
                     const typename SeparatorNet<S>::LstmTape& tape, const Mat<S>& d_hidden) {
  const Index len = tape.input.cols();
  const Index h4 = 4 * hidden;
  ConstRowMap<S> whh(params.data() + w_hh, h4, hidden);
  Mat<S> d_gates(h4, len);
  Eigen::Matrix<S, Dynamic, 1> dh_next = Eigen::Matrix<S, Dynamic, 1>::Zero(hidden);
  Eigen::Matrix<S, Dynamic, 1> dc_next = Eigen::Matrix<S, Dynamic, 1>::Zero(hidden);
  Eigen::Matrix<S, Dynamic, 1> dc(hidden);
  for (Index t = len - 1; t >= 0; --t) {
    const auto gates = tape.gates.col(t);
    const auto in = gates.head(hidden).array();
    const auto fg = gates.segment(hidden, hidden).array();
    const auto gg = gates.segment(2 * hidden, hidden).array();
    const auto og = gates.tail(hidden).array();
    const auto tc = tape.cells.col(t).array().tanh();
    const auto dh = (d_hidden.col(t) + dh_next).array();
    dc = (dh * og * (S(1) - tc * tc) + dc_next.array()).matrix();
    auto dg = d_gates.col(t);
    if (t > 0) {
      dg.segment(hidden, hidden) =
          (dc.array() * tape.cells.col(t - 1).array() * fg * (S(1) - fg)).matrix();
    } else {
      dg.segment(hidden, hidden).setZero();
    }
    dg.head(hidden) = (dc.array() * gg * in * (S(1) - in)).matrix();
    dg.segment(2 * hidden, hidden) = (dc.array() * in * (S(1) - gg * gg)).matrix();
    dg.tail(hidden) = (dh * tc * og * (S(1) - og)).matrix();
    dc_next = (dc.array() * fg).matrix();
    dh_next.noalias() = whh.transpose() * dg;
  }
  RowMap<S> g_whh(grads.data() + w_hh, h4, hidden);
  if (len > 1) {
    g_whh.noalias() += d_gates.rightCols(len - 1) * tape.hidden.leftCols(len - 1).transpose();
  }
  return affine_backward<S>(params, grads, w_ih, bias, h4, input_size, tape.input, d_gates);
}

}  // namespace

template <typename S>
SeparatorNet<S>::SeparatorNet(const SeparatorConfig& cfg) : cfg_(cfg), layout_(cfg) {
  cfg_.validate();
  const auto chans = cfg_.encoder_channels();
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string enc = "encoder." + std::to_string(l);
    const std::string dec = "decoder." + std::to_string(l);
    Level lv{};
    lv.in_channels = l == 0 ? cfg_.input_channels() : chans[l - 1];
    lv.out_channels = chans[l];
    lv.conv_w = layout_.find(enc + ".conv.weight").offset;
    lv.conv_b = layout_.find(enc + ".conv.bias").offset;
    lv.enc_rw_w = layout_.find(enc + ".rewrite.weight").offset;
    lv.enc_rw_b = layout_.find(enc + ".rewrite.bias").offset;
    lv.dec_rw_w = layout_.find(dec + ".rewrite.weight").offset;
    lv.dec_rw_b = layout_.find(dec + ".rewrite.bias").offset;
    lv.convtr_w = layout_.find(dec + ".conv_tr.weight").offset;
    lv.convtr_b = layout_.find(dec + ".conv_tr.bias").offset;
    lv.dec_in_channels = chans[l];
    lv.dec_out_channels = l == 0 ? cfg_.num_sources : chans[l - 1];
    levels_.push_back(lv);
  }
  hidden_ = chans.back();
  for (int k = 0; k < cfg_.recurrent_layers; ++k) {
    const std::string base = "bottleneck.lstm." + std::to_string(k);
    const int input_size = k == 0 ? hidden_ : 2 * hidden_;
    lstm_fwd_.push_back({layout_.find(base + ".fwd.weight_ih").offset,
                         layout_.find(base + ".fwd.weight_hh").offset,
                         layout_.find(base + ".fwd.bias").offset, input_size});
    lstm_bwd_.push_back({layout_.find(base + ".bwd.weight_ih").offset,
                         layout_.find(base + ".bwd.weight_hh").offset,
                         layout_.find(base + ".bwd.bias").offset, input_size});
  }
  if (cfg_.recurrent_layers > 0) {
    linear_w_ = layout_.find("bottleneck.linear.weight").offset;
    linear_b_ = layout_.find("bottleneck.linear.bias").offset;
  }
}

template <typename S>
typename SeparatorNet<S>::Mat SeparatorNet<S>::forward(std::span<const S> params,
                                                       const Mat& input, Tape* tape) const {
  if (params.size() != layout_.total_size()) {
    throw ShapeError("parameter buffer has " + std::to_string(params.size()) +
                     " values, layout needs " + std::to_string(layout_.total_size()));
  }
  if (input.rows() != cfg_.input_channels()) {
    throw ShapeError("network expects " + std::to_string(cfg_.input_channels()) +
                     " input channels, got " + std::to_string(input.rows()));
  }
  if (input.cols() == 0) throw ShapeError("network input is empty");

  const int kernel = cfg_.kernel_size;
  const int stride = cfg_.stride;
  const int pad = (kernel - stride) / 2;
  const std::size_t length = static_cast<std::size_t>(input.cols());
  const std::size_t padded = cfg_.valid_length(length);
  const std::size_t pad_left = (padded - length) / 2;

  Mat x = Mat::Zero(input.rows(), static_cast<Index>(padded));
  x.middleCols(static_cast<Index>(pad_left), input.cols()) = input;

  Tape local;
  Tape& tp = tape ? *tape : local;
  tp.length = length;
  tp.padded = padded;
  tp.pad_left = pad_left;
  tp.encoder.assign(cfg_.depth, {});
  tp.skips.assign(cfg_.depth, {});
  tp.decoder.assign(cfg_.depth, {});
  tp.lstm_fwd.assign(cfg_.recurrent_layers, {});
  tp.lstm_bwd.assign(cfg_.recurrent_layers, {});

  for (int l = 0; l < cfg_.depth; ++l) {
    const Level& lv = levels_[l];
    auto& et = tp.encoder[l];
    const Index out_len = x.cols() / stride;
    et.cols = im2col<S>(x, kernel, stride, pad, out_len);
    et.relu = affine<S>(params, lv.conv_w, lv.conv_b, lv.out_channels,
                        static_cast<Index>(kernel) * lv.in_channels, et.cols)
                  .cwiseMax(S(0));
    et.pre_glu = affine<S>(params, lv.enc_rw_w, lv.enc_rw_b, 2 * lv.out_channels,
                           lv.out_channels, et.relu);
    x = glu<S>(et.pre_glu);
    tp.skips[l] = x;
  }

  if (cfg_.recurrent_layers > 0) {
    Mat seq = x;
    for (int k = 0; k < cfg_.recurrent_layers; ++k) {
      const auto& pf = lstm_fwd_[k];
      const auto& pb = lstm_bwd_[k];
      tp.lstm_fwd[k] = lstm_forward<S>(params, pf.w_ih, pf.w_hh, pf.bias, pf.input_size,
                                       hidden_, seq);
      const Mat reversed = seq.rowwise().reverse();
      tp.lstm_bwd[k] = lstm_forward<S>(params, pb.w_ih, pb.w_hh, pb.bias, pb.input_size,
                                       hidden_, reversed);
      Mat next(2 * hidden_, seq.cols());
      next.topRows(hidden_) = tp.lstm_fwd[k].hidden;
      next.bottomRows(hidden_) = tp.lstm_bwd[k].hidden.rowwise().reverse();
      seq = std::move(next);
    }
    tp.linear_in = seq;
    x = affine<S>(params, linear_w_, linear_b_, hidden_, 2 * hidden_, seq);
  }

  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const Level& lv = levels_[l];
    auto& dt = tp.decoder[l];
    dt.sum = x + tp.skips[l];
    dt.pre_glu = affine<S>(params, lv.dec_rw_w, lv.dec_rw_b, 2 * lv.dec_in_channels,
                           lv.dec_in_channels, dt.sum);
    dt.glu = glu<S>(dt.pre_glu);
    ConstRowMap<S> w(params.data() + lv.convtr_w,
                     static_cast<Index>(kernel) * lv.dec_out_channels, lv.dec_in_channels);
    ConstVecMap<S> b(params.data() + lv.convtr_b, lv.dec_out_channels);
    const Mat z = w * dt.glu;
    dt.out = col2im<S>(z, kernel, stride, pad, lv.dec_out_channels, dt.glu.cols() * stride);
    dt.out.colwise() += b;
    if (l > 0) dt.out = dt.out.cwiseMax(S(0));
    x = dt.out;
  }
  return x.middleCols(static_cast<Index>(pad_left), static_cast<Index>(length));
}

template <typename S>
void SeparatorNet<S>::backward(std::span<const S> params, const Tape& tape,
                               const Mat& grad_output, std::span<S> grads) const {
  if (grads.size() != layout_.total_size()) throw ShapeError("gradient buffer size mismatch");
  if (grad_output.rows() != cfg_.num_sources ||
      grad_output.cols() != static_cast<Index>(tape.length)) {
    throw ShapeError("output gradient shape does not match the forward pass");
  }
  const int kernel = cfg_.kernel_size;
  const int stride = cfg_.stride;
  const int pad = (kernel - stride) / 2;

  Mat dy = Mat::Zero(cfg_.num_sources, static_cast<Index>(tape.padded));
  dy.middleCols(static_cast<Index>(tape.pad_left), grad_output.cols()) = grad_output;

  std::vector<Mat> d_skips(cfg_.depth);
  for (int l = 0; l < cfg_.depth; ++l) {
    const Level& lv = levels_[l];
    const auto& dt = tape.decoder[l];
    if (l > 0) dy = (dy.array() * (dt.out.array() > S(0)).template cast<S>()).matrix();
    RowMap<S> gw(grads.data() + lv.convtr_w,
                 static_cast<Index>(kernel) * lv.dec_out_channels, lv.dec_in_channels);
    VecMap<S> gb(grads.data() + lv.convtr_b, lv.dec_out_channels);
    ConstRowMap<S> w(params.data() + lv.convtr_w,
                     static_cast<Index>(kernel) * lv.dec_out_channels, lv.dec_in_channels);
    const Mat dz = im2col<S>(dy, kernel, stride, pad, dt.glu.cols());
    gw.noalias() += dz * dt.glu.transpose();
    add_row_sums<S>(gb, dy);
    const Mat d_glu = w.transpose() * dz;
    const Mat d_pre = glu_backward<S>(dt.pre_glu, d_glu);
    dy = affine_backward<S>(params, grads, lv.dec_rw_w, lv.dec_rw_b, 2 * lv.dec_in_channels,
                            lv.dec_in_channels, dt.sum, d_pre);
    d_skips[l] = dy;
  }

  if (cfg_.recurrent_layers > 0) {
    Mat d_seq = affine_backward<S>(params, grads, linear_w_, linear_b_, hidden_, 2 * hidden_,
                                   tape.linear_in, dy);
    for (int k = cfg_.recurrent_layers - 1; k >= 0; --k) {
      const auto& pf = lstm_fwd_[k];
      const auto& pb = lstm_bwd_[k];
      const Mat d_fwd_h = d_seq.topRows(hidden_);
      const Mat d_bwd_h = d_seq.bottomRows(hidden_).rowwise().reverse();
      Mat d_in = lstm_backward<S>(params, grads, pf.w_ih, pf.w_hh, pf.bias, pf.input_size,
                                  hidden_, tape.lstm_fwd[k], d_fwd_h);
      const Mat d_rev = lstm_backward<S>(params, grads, pb.w_ih, pb.w_hh, pb.bias,
                                         pb.input_size, hidden_, tape.lstm_bwd[k], d_bwd_h);
      d_in += d_rev.rowwise().reverse();
      d_seq = std::move(d_in);
    }
    dy = std::move(d_seq);
  }

  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const Level& lv = levels_[l];
    const auto& et = tape.encoder[l];
    // The skip and the next level both consume this level's output.
    const Mat d_out = l == cfg_.depth - 1 ? Mat(dy + d_skips[l]) : Mat(dy);
    const Mat d_pre = glu_backward<S>(et.pre_glu, d_out);
    Mat d_relu = affine_backward<S>(params, grads, lv.enc_rw_w, lv.enc_rw_b,
                                    2 * lv.out_channels, lv.out_channels, et.relu, d_pre);
    d_relu = (d_relu.array() * (et.relu.array() > S(0)).template cast<S>()).matrix();
    const Index fan = static_cast<Index>(kernel) * lv.in_channels;
    const bool need_dx = l > 0;
    const Mat d_cols = affine_backward<S>(params, grads, lv.conv_w, lv.conv_b, lv.out_channels,
                                          fan, et.cols, d_relu, need_dx);
    if (!need_dx) break;
    dy = col2im<S>(d_cols, kernel, stride, pad, lv.in_channels, et.cols.cols() * stride);
    dy += d_skips[l - 1];
  }
}

template <typename S>
typename SeparatorNet<S>::Mat input_matrix(const ModelInput& input) {
  Eigen::Map<const Eigen::Matrix<float, Dynamic, Dynamic, Eigen::RowMajor>> m(
      input.data().data(), static_cast<Index>(input.num_channels()),
      static_cast<Index>(input.length()));
  return m.template cast<S>();
}

template class SeparatorNet<float>;
template class SeparatorNet<double>;
template SeparatorNet<float>::Mat input_matrix<float>(const ModelInput&);
template SeparatorNet<double>::Mat input_matrix<double>(const ModelInput&);

}  // namespace onadesep
