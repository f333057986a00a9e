#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

#include "onadesep/model.h"

namespace onadesep {

// The separator's compute graph with hand-written reverse mode. Templated on
// the scalar so float serves training and inference while double serves
// finite-difference checks.
//
// Activations are channels x time, column-major: one time step's channels
// are contiguous.
template <typename Scalar>
class SeparatorNet {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct LstmTape {
    Mat input;   // D x T, already in processing order
    Mat gates;   // 4H x T, post-activation [i; f; g; o]
    Mat cells;   // H x T
    Mat hidden;  // H x T
  };

  struct EncoderTape {
    Mat cols;     // im2col of the layer input
    Mat relu;     // post-ReLU conv output
    Mat pre_glu;  // 2C x T
  };

  struct DecoderTape {
    Mat sum;      // decoder input plus skip
    Mat pre_glu;  // 2C x T
    Mat glu;      // C x T
    Mat out;      // transposed-conv output (post-ReLU for inner layers)
  };

  struct Tape {
    std::size_t length = 0;
    std::size_t padded = 0;
    std::size_t pad_left = 0;
    std::vector<EncoderTape> encoder;
    std::vector<Mat> skips;
    std::vector<LstmTape> lstm_fwd;
    std::vector<LstmTape> lstm_bwd;
    Mat linear_in;  // 2H x T
    std::vector<DecoderTape> decoder;
  };

  explicit SeparatorNet(const SeparatorConfig& cfg);

  const SeparatorConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }

  // input: C_in x T. Returns I x T. Fills tape when non-null.
  Mat forward(std::span<const Scalar> params, const Mat& input, Tape* tape) const;

  // Accumulates dLoss/dParams into grads given dLoss/dOutput (I x T).
  void backward(std::span<const Scalar> params, const Tape& tape, const Mat& grad_output,
                std::span<Scalar> grads) const;

 private:
  struct Level {
    int in_channels;
    int out_channels;
    std::size_t conv_w, conv_b, enc_rw_w, enc_rw_b;
    std::size_t dec_rw_w, dec_rw_b, convtr_w, convtr_b;
    int dec_in_channels;
    int dec_out_channels;
  };
  struct LstmParams {
    std::size_t w_ih, w_hh, bias;
    int input_size;
  };

  SeparatorConfig cfg_;
  ParamLayout layout_;
  std::vector<Level> levels_;
  std::vector<LstmParams> lstm_fwd_;
  std::vector<LstmParams> lstm_bwd_;
  std::size_t linear_w_ = 0, linear_b_ = 0;
  int hidden_ = 0;
};

extern template class SeparatorNet<float>;
extern template class SeparatorNet<double>;

// Copies a model input into a C x T network matrix.
template <typename Scalar>
typename SeparatorNet<Scalar>::Mat input_matrix(const ModelInput& input);

}  // namespace onadesep
