#pragma once

#include <vector>

#include <Eigen/Core>

namespace avse::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

enum class Phase { Training, Inference };

// ---------------------------------------------------------------------------
// Dense layer: y = W x + b, optionally followed by ReLU. Columns are samples.

struct DenseCache {
  Matrix input;
  Matrix output;  // post-activation
};

Matrix dense_forward(const ConstMatrixMap& w, const double* b, const Matrix& x, bool relu,
                     DenseCache* cache);

// Accumulates into dw/db and returns dL/dx.
Matrix dense_backward(const ConstMatrixMap& w, MatrixMap& dw, double* db, const DenseCache& cache,
                      Matrix dy, bool relu);

// ---------------------------------------------------------------------------
// Convolution block: 3x3 convolution (same padding, no bias), batch
// normalisation, ReLU, 2x2 max pooling. A feature map is [channels x H*W] with
// pixel index h*W + w. Weight rows are output channels; the column for input
// channel c at kernel tap k = 3*kh + kw is k*in_channels + c.

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int height = 0;
  int width = 0;

  int pixels() const { return height * width; }
  int pooled_height() const { return height / 2; }
  int pooled_width() const { return width / 2; }
  int pooled_pixels() const { return pooled_height() * pooled_width(); }
};

struct BatchNormParams {
  const double* gamma = nullptr;
  const double* beta = nullptr;
  const double* running_mean = nullptr;
  const double* running_var = nullptr;
};

struct ConvBlockCache {
  Phase phase = Phase::Training;
  std::vector<Matrix> cols;  // im2col per sample
  std::vector<Matrix> xhat;  // normalised conv output per sample
  std::vector<std::vector<int>> argmax;
  Vector batch_mean;
  Vector batch_var;
  Vector inv_std;
};

void im2col3x3(const Matrix& x, const ConvShape& s, Matrix& col);

std::vector<Matrix> conv_block_forward(const ConvShape& s, const ConstMatrixMap& w, const BatchNormParams& bn,
                                       const std::vector<Matrix>& x, Phase phase, ConvBlockCache* cache);

// Accumulates weight, gamma and beta gradients. Returns input gradients when
// need_input_grad is set, else an empty vector.
std::vector<Matrix> conv_block_backward(const ConvShape& s, const ConstMatrixMap& w, const BatchNormParams& bn,
                                        MatrixMap& dw, double* dgamma, double* dbeta,
                                        const ConvBlockCache& cache, const std::vector<Matrix>& dy,
                                        bool need_input_grad);

// ---------------------------------------------------------------------------
// LSTM layer. Gate rows of the [4H x (in + H)] weight are ordered i, f, g, o;
// the input to the weight is [x_t; h_{t-1}]. Initial state is zero.

struct LstmCache {
  std::vector<Matrix> xh;
  std::vector<Matrix> i, f, g, o, c, tanh_c;
};

std::vector<Matrix> lstm_forward(const ConstMatrixMap& w, const double* b, int hidden,
                                 const std::vector<Matrix>& xs, LstmCache* cache);

// dhs holds dL/dh_t for every step (zero matrices where unused). Returns dL/dx_t.
std::vector<Matrix> lstm_backward(const ConstMatrixMap& w, MatrixMap& dw, double* db, int hidden,
                                  const LstmCache& cache, const std::vector<Matrix>& dhs);

}  // namespace avse::nn
