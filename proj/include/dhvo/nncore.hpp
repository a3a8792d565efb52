#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dhvo/common.hpp"

namespace dhvo::nn {

// Dense row-major matrix of 64-bit reals. Small enough that we keep it a
// plain struct and let callers index directly.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return data.size(); }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// A learnable tensor with its gradient accumulator and Adam state.
struct ParamBlock {
  std::string name;
  Matrix value;
  Matrix gradient;
  Matrix adam_m;
  Matrix adam_v;
  long step_count = 0;

  ParamBlock() = default;
  ParamBlock(std::string n, int rows, int cols)
      : name(std::move(n)), value(rows, cols), gradient(rows, cols),
        adam_m(rows, cols), adam_v(rows, cols) {}

  void zero_grad() { gradient.fill(0.0); }

  // Glorot-uniform init over +-sqrt(6/(fan_in+fan_out)).
  void init_glorot(Rng& rng, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : value.data) v = dist(rng);
  }
};

struct AdamConfig {
  double learning_rate = 0.01;
  double beta_m = 0.9;
  double beta_v = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw config_error("adam: learning_rate must be > 0");
    if (!(beta_m > 0.0 && beta_m < 1.0) || !(beta_v > 0.0 && beta_v < 1.0))
      throw config_error("adam: betas must lie in (0,1)");
  }
};

// ---------------------------------------------------------------------------
// Differentiable primitives. Forward functions are pure; backward functions
// accumulate into ParamBlock::gradient and return the input gradient, so a
// caller composes the chain rule explicitly in reverse order.
// ---------------------------------------------------------------------------

// y = x W + b, x: (n x in), W: (in x out), b: (1 x out).
inline Matrix affine_forward(const Matrix& x, const ParamBlock& W, const ParamBlock& b) {
  if (x.cols != W.value.rows || W.value.cols != b.value.cols || b.value.rows != 1)
    throw std::invalid_argument("affine_forward: shape mismatch");
  Matrix y(x.rows, W.value.cols);
  for (int r = 0; r < x.rows; ++r) {
    double* yr = &y.data[static_cast<std::size_t>(r) * y.cols];
    for (int c = 0; c < y.cols; ++c) yr[c] = b.value.data[c];
    for (int k = 0; k < x.cols; ++k) {
      const double xv = x(r, k);
      if (xv == 0.0) continue;
      const double* wk = &W.value.data[static_cast<std::size_t>(k) * W.value.cols];
      for (int c = 0; c < y.cols; ++c) yr[c] += xv * wk[c];
    }
  }
  return y;
}

inline Matrix affine_backward(const Matrix& x, ParamBlock& W, ParamBlock& b,
                              const Matrix& grad_y) {
  if (grad_y.rows != x.rows || grad_y.cols != W.value.cols)
    throw std::invalid_argument("affine_backward: shape mismatch");
  Matrix grad_x(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r) {
    const double* gy = &grad_y.data[static_cast<std::size_t>(r) * grad_y.cols];
    for (int c = 0; c < grad_y.cols; ++c) b.gradient.data[c] += gy[c];
    for (int k = 0; k < x.cols; ++k) {
      const double xv = x(r, k);
      double* wg = &W.gradient.data[static_cast<std::size_t>(k) * W.value.cols];
      const double* wv = &W.value.data[static_cast<std::size_t>(k) * W.value.cols];
      double acc = 0.0;
      for (int c = 0; c < grad_y.cols; ++c) {
        wg[c] += xv * gy[c];
        acc += wv[c] * gy[c];
      }
      grad_x(r, k) = acc;
    }
  }
  return grad_x;
}

inline Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

// Subgradient at 0 is 0.
inline Matrix relu_backward(const Matrix& x, const Matrix& grad_y) {
  assert(x.same_shape(grad_y));
  Matrix g = grad_y;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (x.data[i] <= 0.0) g.data[i] = 0.0;
  return g;
}

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_relu_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logistic_grad_from_value(double y) { return y * (1.0 - y); }

inline double softplus(double x) {
  // log(1+exp(x)) without overflow for large |x|
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double softplus_grad(double x) { return logistic(x); }

// Softmax over the unmasked entries of `scores`; masked entries get weight
// exactly 0. Stabilized by max subtraction.
inline std::vector<double> masked_softmax(const std::vector<double>& scores,
                                          const std::vector<std::uint8_t>& mask) {
  assert(scores.size() == mask.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i] && scores[i] > hi) hi = scores[i];
  if (!std::isfinite(hi)) throw std::invalid_argument("masked_softmax: fully masked input");
  std::vector<double> w(scores.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    w[i] = std::exp(scores[i] - hi);
    z += w[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) w[i] /= z;
  return w;
}

// d loss / d scores given the softmax output `w` and upstream grad `grad_w`.
inline std::vector<double> masked_softmax_backward(const std::vector<double>& w,
                                                   const std::vector<std::uint8_t>& mask,
                                                   const std::vector<double>& grad_w) {
  assert(w.size() == mask.size() && w.size() == grad_w.size());
  double dot = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (mask[i]) dot += w[i] * grad_w[i];
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (mask[i]) g[i] = w[i] * (grad_w[i] - dot);
  return g;
}

// loss = (target - pred)^2
inline double mse_scalar(double pred, double target) {
  const double d = target - pred;
  return d * d;
}
inline double mse_scalar_backward(double pred, double target) { return -2.0 * (target - pred); }

// One Adam step (descent direction, bias-corrected) over all blocks;
// gradients are zeroed afterwards.
inline void adam_step(const std::vector<ParamBlock*>& blocks, const AdamConfig& cfg) {
  for (ParamBlock* blk : blocks) {
    blk->step_count += 1;
    const double bc_m = 1.0 - std::pow(cfg.beta_m, static_cast<double>(blk->step_count));
    const double bc_v = 1.0 - std::pow(cfg.beta_v, static_cast<double>(blk->step_count));
    for (std::size_t i = 0; i < blk->value.data.size(); ++i) {
      const double g = blk->gradient.data[i];
      double& m = blk->adam_m.data[i];
      double& v = blk->adam_v.data[i];
      m = cfg.beta_m * m + (1.0 - cfg.beta_m) * g;
      v = cfg.beta_v * v + (1.0 - cfg.beta_v) * g * g;
      const double mhat = m / bc_m;
      const double vhat = v / bc_v;
      blk->value.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    blk->zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient audit.
// ---------------------------------------------------------------------------

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::string worst_entry;
  long n_checked = 0;
};

// Protocol: the caller runs its analytic backward once so that every block's
// `gradient` holds d loss / d value, then calls grad_check with a closure that
// recomputes the forward loss from the current block values.
//
// Central differences of a loss of magnitude |L| computed at step h carry an
// absolute noise floor of roughly eps*|L|/h from cancellation, so entries far
// below that floor cannot be compared relatively. The reported error is
//   |fd - an| / max(|fd|, |an|, noise/tol)
// which reduces to a plain relative comparison for entries the oracle can
// resolve and to a noise-level absolute comparison below it.
inline GradCheckReport grad_check(const std::function<double()>& loss_fn,
                                  const std::vector<ParamBlock*>& blocks, double h, double tol) {
  GradCheckReport report;
  const double base_loss = loss_fn();
  const double eps = std::numeric_limits<double>::epsilon();
  for (ParamBlock* blk : blocks) {
    for (std::size_t i = 0; i < blk->value.data.size(); ++i) {
      double& w = blk->value.data[i];
      const double saved = w;
      const double step = h * std::max(1.0, std::fabs(saved));
      w = saved + step;
      const double lp = loss_fn();
      w = saved - step;
      const double lm = loss_fn();
      w = saved;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = blk->gradient.data[i];
      ++report.n_checked;
      const double noise = 64.0 * eps * std::max(1.0, std::fabs(base_loss)) / step;
      const double denom = std::max({std::fabs(fd), std::fabs(an), noise / tol});
      const double rel = std::fabs(fd - an) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_entry = blk->name + "[" + std::to_string(i) + "] analytic=" +
                             std::to_string(an) + " fd=" + std::to_string(fd);
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned header, then per block a record
//   name rows cols
// followed by `rows` lines of `cols` hexfloat values. Hexfloat keeps the
// round-trip bit-exact.
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointHeader = "dhvo-params v1";

inline void write_matrix_values(std::ostream& os, const Matrix& m) {
  char buf[64];
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%a", m(r, c));
      os << (c ? " " : "") << buf;
    }
    os << '\n';
  }
}

inline void read_matrix_values(std::istream& is, Matrix& m) {
  std::string tok;
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      if (!(is >> tok)) throw config_error("checkpoint: truncated matrix values");
      char* end = nullptr;
      m(r, c) = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str()) throw config_error("checkpoint: bad value '" + tok + "'");
    }
}

inline void write_params(std::ostream& os, const std::vector<const ParamBlock*>& blocks) {
  os << kCheckpointHeader << '\n' << blocks.size() << '\n';
  for (const ParamBlock* blk : blocks) {
    os << blk->name << ' ' << blk->value.rows << ' ' << blk->value.cols << '\n';
    write_matrix_values(os, blk->value);
  }
}

inline std::map<std::string, Matrix> read_params(std::istream& is) {
  std::string header;
  std::getline(is, header);
  if (header != kCheckpointHeader) throw config_error("checkpoint: bad header '" + header + "'");
  std::size_t count = 0;
  if (!(is >> count)) throw config_error("checkpoint: missing block count");
  std::map<std::string, Matrix> out;
  for (std::size_t b = 0; b < count; ++b) {
    std::string name;
    int rows = 0, cols = 0;
    if (!(is >> name >> rows >> cols)) throw config_error("checkpoint: bad block record");
    if (rows < 0 || cols < 0) throw config_error("checkpoint: negative shape");
    Matrix m(rows, cols);
    read_matrix_values(is, m);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

// Restores values into named blocks; every block must be present with the
// right shape.
inline void load_params(const std::map<std::string, Matrix>& loaded,
                        const std::vector<ParamBlock*>& blocks) {
  for (ParamBlock* blk : blocks) {
    auto it = loaded.find(blk->name);
    if (it == loaded.end()) throw config_error("checkpoint: missing block '" + blk->name + "'");
    if (!blk->value.same_shape(it->second))
      throw config_error("checkpoint: shape mismatch for '" + blk->name + "'");
    blk->value = it->second;
  }
}

}  // namespace dhvo::nn
