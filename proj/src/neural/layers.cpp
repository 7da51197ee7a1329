#include "avse/neural/layers.hpp"

#include <cmath>

namespace avse::nn {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Matrix dense_forward(const ConstMatrixMap& w, const double* b, const Matrix& x, bool relu,
                     DenseCache* cache) {
  Matrix y = w * x;
  y.colwise() += Eigen::Map<const Vector>(b, w.rows());
  if (relu) y = y.cwiseMax(0.0);
  if (cache) {
    cache->input = x;
    cache->output = y;
  }
  return y;
}

Matrix dense_backward(const ConstMatrixMap& w, MatrixMap& dw, double* db, const DenseCache& cache,
                      Matrix dy, bool relu) {
  if (relu) dy = (cache.output.array() > 0.0).select(dy, 0.0);
  dw.noalias() += dy * cache.input.transpose();
  Eigen::Map<Vector>(db, w.rows()) += dy.rowwise().sum();
  return w.transpose() * dy;
}

void im2col3x3(const Matrix& x, const ConvShape& s, Matrix& col) {
  const int c_in = s.in_channels;
  col.setZero(9 * c_in, s.pixels());
  for (int h = 0; h < s.height; ++h) {
    for (int w = 0; w < s.width; ++w) {
      const int p = h * s.width + w;
      for (int kh = 0; kh < 3; ++kh) {
        const int hh = h + kh - 1;
        if (hh < 0 || hh >= s.height) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int ww = w + kw - 1;
          if (ww < 0 || ww >= s.width) continue;
          col.col(p).segment((3 * kh + kw) * c_in, c_in) = x.col(hh * s.width + ww);
        }
      }
    }
  }
}

namespace {

void col2im3x3(const Matrix& dcol, const ConvShape& s, Matrix& dx) {
  const int c_in = s.in_channels;
  dx.setZero(c_in, s.pixels());
  for (int h = 0; h < s.height; ++h) {
    for (int w = 0; w < s.width; ++w) {
      const int p = h * s.width + w;
      for (int kh = 0; kh < 3; ++kh) {
        const int hh = h + kh - 1;
        if (hh < 0 || hh >= s.height) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int ww = w + kw - 1;
          if (ww < 0 || ww >= s.width) continue;
          dx.col(hh * s.width + ww) += dcol.col(p).segment((3 * kh + kw) * c_in, c_in);
        }
      }
    }
  }
}

}  // namespace

std::vector<Matrix> conv_block_forward(const ConvShape& s, const ConstMatrixMap& w, const BatchNormParams& bn,
                                       const std::vector<Matrix>& x, Phase phase, ConvBlockCache* cache) {
  const std::size_t batch = x.size();
  const int c_out = s.out_channels;
  const Eigen::Map<const Vector> gamma(bn.gamma, c_out);
  const Eigen::Map<const Vector> beta(bn.beta, c_out);

  std::vector<Matrix> conv(batch);
  std::vector<Matrix> cols(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col3x3(x[n], s, cols[n]);
    conv[n].noalias() = w * cols[n];
  }

  Vector mean(c_out), var(c_out);
  if (phase == Phase::Training) {
    const double count = static_cast<double>(batch) * s.pixels();
    mean.setZero();
    for (const auto& y : conv) mean += y.rowwise().sum();
    mean /= count;
    var.setZero();
    for (const auto& y : conv) var += (y.colwise() - mean).rowwise().squaredNorm();
    var /= count;
  } else {
    mean = Eigen::Map<const Vector>(bn.running_mean, c_out);
    var = Eigen::Map<const Vector>(bn.running_var, c_out);
  }
  const Vector inv_std = (var.array() + kBatchNormEpsilon).rsqrt();

  const int ph = s.pooled_height();
  const int pw = s.pooled_width();
  std::vector<Matrix> out(batch);
  std::vector<std::vector<int>> argmax(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    Matrix& y = conv[n];
    y = ((y.colwise() - mean).array().colwise() * inv_std.array()).matrix();  // xhat
    Matrix act = ((y.array().colwise() * gamma.array()).colwise() + beta.array()).cwiseMax(0.0);

    out[n].resize(c_out, ph * pw);
    argmax[n].resize(static_cast<std::size_t>(c_out) * ph * pw);
    for (int i = 0; i < ph; ++i) {
      for (int j = 0; j < pw; ++j) {
        const int q = i * pw + j;
        const int taps[4] = {(2 * i) * s.width + 2 * j, (2 * i) * s.width + 2 * j + 1,
                             (2 * i + 1) * s.width + 2 * j, (2 * i + 1) * s.width + 2 * j + 1};
        for (int c = 0; c < c_out; ++c) {
          int best = taps[0];
          double v = act(c, best);
          for (int t = 1; t < 4; ++t) {
            if (act(c, taps[t]) > v) {
              v = act(c, taps[t]);
              best = taps[t];
            }
          }
          out[n](c, q) = v;
          argmax[n][static_cast<std::size_t>(q) * c_out + c] = best;
        }
      }
    }
  }

  if (cache) {
    cache->phase = phase;
    cache->cols = std::move(cols);
    cache->xhat = std::move(conv);
    cache->argmax = std::move(argmax);
    cache->batch_mean = mean;
    cache->batch_var = var;
    cache->inv_std = inv_std;
  }
  return out;
}

std::vector<Matrix> conv_block_backward(const ConvShape& s, const ConstMatrixMap& w, const BatchNormParams& bn,
                                        MatrixMap& dw, double* dgamma_ptr, double* dbeta_ptr,
                                        const ConvBlockCache& cache, const std::vector<Matrix>& dy,
                                        bool need_input_grad) {
  const std::size_t batch = dy.size();
  const int c_out = s.out_channels;
  const Eigen::Map<const Vector> gamma(bn.gamma, c_out);
  const Eigen::Map<const Vector> beta(bn.beta, c_out);
  Eigen::Map<Vector> dgamma(dgamma_ptr, c_out);
  Eigen::Map<Vector> dbeta(dbeta_ptr, c_out);
  const int pooled = s.pooled_pixels();

  // Route pooled gradients to the winning taps, through the ReLU.
  std::vector<Matrix> d(batch);
  Vector sum_d = Vector::Zero(c_out);
  Vector sum_d_xhat = Vector::Zero(c_out);
  for (std::size_t n = 0; n < batch; ++n) {
    const Matrix& xhat = cache.xhat[n];
    d[n].setZero(c_out, s.pixels());
    for (int q = 0; q < pooled; ++q) {
      for (int c = 0; c < c_out; ++c) {
        const int p = cache.argmax[n][static_cast<std::size_t>(q) * c_out + c];
        if (gamma(c) * xhat(c, p) + beta(c) > 0.0) d[n](c, p) += dy[n](c, q);
      }
    }
    sum_d += d[n].rowwise().sum();
    sum_d_xhat += d[n].cwiseProduct(xhat).rowwise().sum();
  }
  dgamma += sum_d_xhat;
  dbeta += sum_d;

  const double count = static_cast<double>(batch) * s.pixels();
  std::vector<Matrix> dx;
  if (need_input_grad) dx.resize(batch);
  Matrix dcol;
  for (std::size_t n = 0; n < batch; ++n) {
    Matrix dconv;
    if (cache.phase == Phase::Training) {
      // dxhat = gamma * d; dconv = inv_std / N * (N dxhat - sum dxhat - xhat * sum(dxhat xhat))
      dconv = ((d[n].colwise() - sum_d / count).array() -
               cache.xhat[n].array().colwise() * (sum_d_xhat / count).array())
                  .matrix();
      dconv = (dconv.array().colwise() * (gamma.array() * cache.inv_std.array())).matrix();
    } else {
      dconv = (d[n].array().colwise() * (gamma.array() * cache.inv_std.array())).matrix();
    }
    dw.noalias() += dconv * cache.cols[n].transpose();
    if (need_input_grad) {
      dcol.noalias() = w.transpose() * dconv;
      col2im3x3(dcol, s, dx[n]);
    }
  }
  return dx;
}

std::vector<Matrix> lstm_forward(const ConstMatrixMap& w, const double* b, int hidden,
                                 const std::vector<Matrix>& xs, LstmCache* cache) {
  const Eigen::Index batch = xs.front().cols();
  const Eigen::Index in = xs.front().rows();
  const Eigen::Map<const Vector> bias(b, 4 * hidden);
  Matrix h = Matrix::Zero(hidden, batch);
  Matrix c = Matrix::Zero(hidden, batch);
  std::vector<Matrix> hs;
  hs.reserve(xs.size());
  if (cache) *cache = LstmCache{};
  for (const Matrix& x : xs) {
    Matrix xh(in + hidden, batch);
    xh.topRows(in) = x;
    xh.bottomRows(hidden) = h;
    Matrix z = w * xh;
    z.colwise() += bias;
    Matrix i = z.topRows(hidden).unaryExpr(&sigmoid);
    Matrix f = z.middleRows(hidden, hidden).unaryExpr(&sigmoid);
    Matrix g = z.middleRows(2 * hidden, hidden).array().tanh().matrix();
    Matrix o = z.bottomRows(hidden).unaryExpr(&sigmoid);
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    Matrix tc = c.array().tanh().matrix();
    h = o.cwiseProduct(tc);
    hs.push_back(h);
    if (cache) {
      cache->xh.push_back(std::move(xh));
      cache->i.push_back(std::move(i));
      cache->f.push_back(std::move(f));
      cache->g.push_back(std::move(g));
      cache->o.push_back(std::move(o));
      cache->c.push_back(c);
      cache->tanh_c.push_back(std::move(tc));
    }
  }
  return hs;
}

std::vector<Matrix> lstm_backward(const ConstMatrixMap& w, MatrixMap& dw, double* db, int hidden,
                                  const LstmCache& cache, const std::vector<Matrix>& dhs) {
  const std::size_t steps = cache.xh.size();
  const Eigen::Index batch = cache.xh.front().cols();
  const Eigen::Index in = cache.xh.front().rows() - hidden;
  Eigen::Map<Vector> dbias(db, 4 * hidden);

  std::vector<Matrix> dxs(steps);
  Matrix dh_next = Matrix::Zero(hidden, batch);
  Matrix dc_next = Matrix::Zero(hidden, batch);
  Matrix dz(4 * hidden, batch);
  for (std::size_t t = steps; t-- > 0;) {
    const Matrix dh = dhs[t] + dh_next;
    const Matrix& i = cache.i[t];
    const Matrix& f = cache.f[t];
    const Matrix& g = cache.g[t];
    const Matrix& o = cache.o[t];
    const Matrix& tc = cache.tanh_c[t];
    const Matrix c_prev = t > 0 ? cache.c[t - 1] : Matrix::Zero(hidden, batch);

    const Matrix dc = (dh.array() * o.array() * (1.0 - tc.array().square())).matrix() + dc_next;
    dz.topRows(hidden) = (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
    dz.middleRows(hidden, hidden) = (dc.array() * c_prev.array() * f.array() * (1.0 - f.array())).matrix();
    dz.middleRows(2 * hidden, hidden) = (dc.array() * i.array() * (1.0 - g.array().square())).matrix();
    dz.bottomRows(hidden) = (dh.array() * tc.array() * o.array() * (1.0 - o.array())).matrix();
    dc_next = dc.cwiseProduct(f);

    dw.noalias() += dz * cache.xh[t].transpose();
    dbias += dz.rowwise().sum();
    const Matrix dxh = w.transpose() * dz;
    dxs[t] = dxh.topRows(in);
    dh_next = dxh.bottomRows(hidden);
  }
  return dxs;
}

}  // namespace avse::nn
