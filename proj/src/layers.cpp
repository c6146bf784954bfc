#include "d4d/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "d4d/error.hpp"

namespace d4d {

namespace {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void init_tensor(Tensor& t, const Init& init, std::size_t fan_in, std::size_t fan_out,
                 RngStream& rng) {
  switch (init.kind) {
    case InitKind::Zeros:
      t.fill(0.0);
      return;
    case InitKind::GlorotUniform: {
      const double lim = glorot_limit(fan_in, fan_out);
      for (double& v : t.data) v = rng.uniform(-lim, lim);
      return;
    }
    case InitKind::HeUniform: {
      const double lim = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : t.data) v = rng.uniform(-lim, lim);
      return;
    }
    case InitKind::Normal:
      for (double& v : t.data) v = rng.normal(0.0, init.stddev);
      return;
  }
}

}  // namespace

void Layer::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

ParamBlock& Layer::add_param(std::string tag, std::vector<std::size_t> shape, bool bias_like,
                             bool trainable) {
  ParamBlock p;
  p.tag = std::move(tag);
  p.bias_like = bias_like;
  p.trainable = trainable;
  p.value = Tensor::zeros(shape);
  p.grad = Tensor::zeros(shape);
  params_.push_back(std::move(p));
  return params_.back();
}

void Layer::require_inputs(std::size_t n) const {
  if (in_shapes_.size() != n)
    throw Error(name() + ": expected " + std::to_string(n) + " input(s), got " +
                std::to_string(in_shapes_.size()));
}

void apply_activation(ActivationKind a, Tensor& x) {
  switch (a) {
    case ActivationKind::None:
    case ActivationKind::Linear:
      return;
    case ActivationKind::Relu:
      for (double& v : x.data) v = v > 0.0 ? v : 0.0;
      return;
    case ActivationKind::Sigmoid:
      for (double& v : x.data) v = 1.0 / (1.0 + std::exp(-v));
      return;
    case ActivationKind::Tanh:
      for (double& v : x.data) v = std::tanh(v);
      return;
    case ActivationKind::Softmax: {
      const std::size_t c = x.last_extent();
      const std::size_t rows = x.numel() / c;
      for (std::size_t r = 0; r < rows; ++r) {
        double* p = x.data.data() + r * c;
        double mx = p[0];
        for (std::size_t j = 1; j < c; ++j) mx = p[j] > mx ? p[j] : mx;
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          p[j] = std::exp(p[j] - mx);
          sum += p[j];
        }
        for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
      }
      return;
    }
  }
}

Tensor activation_backward(ActivationKind a, const Tensor& post, const Tensor& dout) {
  Tensor g = dout;
  switch (a) {
    case ActivationKind::None:
    case ActivationKind::Linear:
      return g;
    case ActivationKind::Relu:
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (!(post[i] > 0.0)) g[i] = 0.0;
      }
      return g;
    case ActivationKind::Sigmoid:
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= post[i] * (1.0 - post[i]);
      return g;
    case ActivationKind::Tanh:
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= 1.0 - post[i] * post[i];
      return g;
    case ActivationKind::Softmax: {
      const std::size_t c = post.last_extent();
      const std::size_t rows = post.numel() / c;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* p = post.data.data() + r * c;
        double* gr = g.data.data() + r * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gr[j] * p[j];
        for (std::size_t j = 0; j < c; ++j) gr[j] = p[j] * (gr[j] - dot);
      }
      return g;
    }
  }
  return g;
}

bool is_bounded_activation(ActivationKind a) {
  return a == ActivationKind::Sigmoid || a == ActivationKind::Tanh;
}

void matmul_acc(const double* a, const double* b, double* c, std::size_t rows, std::size_t inner,
                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = a + r * inner;
    double* cr = c + r * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b + k * cols;
      for (std::size_t u = 0; u < cols; ++u) cr[u] += av * br[u];
    }
  }
}

namespace {

// ---------------------------------------------------------------------------
// Dense / TimeDistributedDense (affine over the last axis)

class DenseLayer : public Layer {
 public:
  DenseLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    const auto& is = in_shapes_[0];
    const bool time_distributed = spec_.kind == LayerKind::TimeDistributedDense;
    const std::size_t want_rank = time_distributed ? 2 : 1;
    if (is.size() != want_rank)
      throw Error(name() + ": expected rank-" + std::to_string(want_rank) +
                  " input, got " + shape_to_string(is));
    in_features_ = is.back();
    units_ = static_cast<std::size_t>(spec_.units);
    out_shape_ = is;
    out_shape_.back() = units_;
    add_param("W", {in_features_, units_}, false);
    add_param("b", {units_}, true);
  }

  void init_params(RngStream& rng) override {
    init_tensor(params_[0].value, spec_.init, in_features_, units_, rng);
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    x_ = *in[0];
    const std::size_t rows = x_.numel() / in_features_;
    std::vector<std::size_t> oshape = x_.shape;
    oshape.back() = units_;
    Tensor y = Tensor::zeros(oshape);
    const Tensor& w = params_[0].value;
    const Tensor& b = params_[1].value;
    for (std::size_t r = 0; r < rows; ++r) {
      double* yr = y.data.data() + r * units_;
      for (std::size_t u = 0; u < units_; ++u) yr[u] = b[u];
    }
    matmul_acc(x_.data.data(), w.data.data(), y.data.data(), rows, in_features_, units_);
    apply_activation(spec_.activation, y);
    post_ = y;
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    Tensor dpre = activation_backward(spec_.activation, post_, dout);
    const std::size_t rows = x_.numel() / in_features_;
    Tensor& dw = params_[0].grad;
    Tensor& db = params_[1].grad;
    const Tensor& w = params_[0].value;
    // dW[f,u] += sum_r x[r,f] * dpre[r,u]
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x_.data.data() + r * in_features_;
      const double* gr = dpre.data.data() + r * units_;
      for (std::size_t f = 0; f < in_features_; ++f) {
        const double xv = xr[f];
        if (xv == 0.0) continue;
        double* dwr = dw.data.data() + f * units_;
        for (std::size_t u = 0; u < units_; ++u) dwr[u] += xv * gr[u];
      }
      for (std::size_t u = 0; u < units_; ++u) db[u] += gr[u];
    }
    Tensor dx = Tensor::zeros(x_.shape);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = dpre.data.data() + r * units_;
      double* dxr = dx.data.data() + r * in_features_;
      for (std::size_t f = 0; f < in_features_; ++f) {
        const double* wr = w.data.data() + f * units_;
        double acc = 0.0;
        for (std::size_t u = 0; u < units_; ++u) acc += gr[u] * wr[u];
        dxr[f] = acc;
      }
    }
    return {std::move(dx)};
  }

 private:
  std::size_t in_features_ = 0, units_ = 0;
  Tensor x_, post_;
};

// ---------------------------------------------------------------------------
// Conv2D, stride 1, valid padding; data layout NHWC, kernel [kh,kw,c,f].

class Conv2DLayer : public Layer {
 public:
  Conv2DLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    const auto& is = in_shapes_[0];
    if (is.size() != 3)
      throw Error(name() + ": expected rank-3 input [h,w,c], got " + shape_to_string(is));
    h_ = is[0];
    w_ = is[1];
    c_ = is[2];
    kh_ = static_cast<std::size_t>(spec_.kernel[0]);
    kw_ = static_cast<std::size_t>(spec_.kernel[1]);
    f_ = static_cast<std::size_t>(spec_.filters);
    if (kh_ > h_ || kw_ > w_)
      throw Error(name() + ": kernel " + std::to_string(kh_) + "x" + std::to_string(kw_) +
                  " larger than input " + shape_to_string(is));
    oh_ = h_ - kh_ + 1;
    ow_ = w_ - kw_ + 1;
    out_shape_ = {oh_, ow_, f_};
    add_param("W", {kh_, kw_, c_, f_}, false);
    add_param("b", {f_}, true);
  }

  void init_params(RngStream& rng) override {
    init_tensor(params_[0].value, spec_.init, kh_ * kw_ * c_, kh_ * kw_ * f_, rng);
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    x_ = *in[0];
    const std::size_t n = x_.shape[0];
    Tensor y = Tensor::zeros({n, oh_, ow_, f_});
    const double* w = params_[0].value.data.data();
    const double* b = params_[1].value.data.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x_.data.data() + i * h_ * w_ * c_;
      double* yi = y.data.data() + i * oh_ * ow_ * f_;
      for (std::size_t oy = 0; oy < oh_; ++oy) {
        for (std::size_t ox = 0; ox < ow_; ++ox) {
          double* yo = yi + (oy * ow_ + ox) * f_;
          for (std::size_t v = 0; v < f_; ++v) yo[v] = b[v];
          for (std::size_t ky = 0; ky < kh_; ++ky) {
            for (std::size_t kx = 0; kx < kw_; ++kx) {
              const double* xp = xi + ((oy + ky) * w_ + (ox + kx)) * c_;
              const double* wp = w + (ky * kw_ + kx) * c_ * f_;
              for (std::size_t ch = 0; ch < c_; ++ch) {
                const double xv = xp[ch];
                if (xv == 0.0) continue;
                const double* wc = wp + ch * f_;
                for (std::size_t v = 0; v < f_; ++v) yo[v] += xv * wc[v];
              }
            }
          }
        }
      }
    }
    apply_activation(spec_.activation, y);
    post_ = y;
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    Tensor dpre = activation_backward(spec_.activation, post_, dout);
    const std::size_t n = x_.shape[0];
    Tensor dx = Tensor::zeros(x_.shape);
    double* dwp = params_[0].grad.data.data();
    double* dbp = params_[1].grad.data.data();
    const double* w = params_[0].value.data.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x_.data.data() + i * h_ * w_ * c_;
      double* dxi = dx.data.data() + i * h_ * w_ * c_;
      const double* gi = dpre.data.data() + i * oh_ * ow_ * f_;
      for (std::size_t oy = 0; oy < oh_; ++oy) {
        for (std::size_t ox = 0; ox < ow_; ++ox) {
          const double* go = gi + (oy * ow_ + ox) * f_;
          for (std::size_t v = 0; v < f_; ++v) dbp[v] += go[v];
          for (std::size_t ky = 0; ky < kh_; ++ky) {
            for (std::size_t kx = 0; kx < kw_; ++kx) {
              const std::size_t xoff = ((oy + ky) * w_ + (ox + kx)) * c_;
              const std::size_t woff = (ky * kw_ + kx) * c_ * f_;
              for (std::size_t ch = 0; ch < c_; ++ch) {
                const double xv = xi[xoff + ch];
                const double* wc = w + woff + ch * f_;
                double* dwc = dwp + woff + ch * f_;
                double acc = 0.0;
                for (std::size_t v = 0; v < f_; ++v) {
                  dwc[v] += xv * go[v];
                  acc += wc[v] * go[v];
                }
                dxi[xoff + ch] += acc;
              }
            }
          }
        }
      }
    }
    return {std::move(dx)};
  }

 private:
  std::size_t h_ = 0, w_ = 0, c_ = 0, kh_ = 0, kw_ = 0, f_ = 0, oh_ = 0, ow_ = 0;
  Tensor x_, post_;
};

// ---------------------------------------------------------------------------
// MaxPool2D, stride == pool size, valid (trailing cells dropped).

class MaxPool2DLayer : public Layer {
 public:
  MaxPool2DLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    const auto& is = in_shapes_[0];
    if (is.size() != 3)
      throw Error(name() + ": expected rank-3 input [h,w,c], got " + shape_to_string(is));
    h_ = is[0];
    w_ = is[1];
    c_ = is[2];
    ph_ = static_cast<std::size_t>(spec_.pool[0]);
    pw_ = static_cast<std::size_t>(spec_.pool[1]);
    oh_ = h_ / ph_;
    ow_ = w_ / pw_;
    if (oh_ == 0 || ow_ == 0)
      throw Error(name() + ": pool " + std::to_string(ph_) + "x" + std::to_string(pw_) +
                  " larger than input " + shape_to_string(is));
    out_shape_ = {oh_, ow_, c_};
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    const Tensor& x = *in[0];
    in_shape_cache_ = x.shape;
    const std::size_t n = x.shape[0];
    Tensor y = Tensor::zeros({n, oh_, ow_, c_});
    argmax_.assign(y.numel(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.data.data() + i * h_ * w_ * c_;
      for (std::size_t oy = 0; oy < oh_; ++oy) {
        for (std::size_t ox = 0; ox < ow_; ++ox) {
          for (std::size_t ch = 0; ch < c_; ++ch) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = ((oy * ph_) * w_ + ox * pw_) * c_ + ch;
            for (std::size_t py = 0; py < ph_; ++py) {
              for (std::size_t px = 0; px < pw_; ++px) {
                const std::size_t idx = ((oy * ph_ + py) * w_ + (ox * pw_ + px)) * c_ + ch;
                if (xi[idx] > best) {
                  best = xi[idx];
                  best_idx = idx;
                }
              }
            }
            const std::size_t o = ((i * oh_ + oy) * ow_ + ox) * c_ + ch;
            y[o] = xi[best_idx];
            argmax_[o] = i * h_ * w_ * c_ + best_idx;
          }
        }
      }
    }
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    Tensor dx = Tensor::zeros(in_shape_cache_);
    for (std::size_t o = 0; o < dout.numel(); ++o) dx[argmax_[o]] += dout[o];
    return {std::move(dx)};
  }

 private:
  std::size_t h_ = 0, w_ = 0, c_ = 0, ph_ = 0, pw_ = 0, oh_ = 0, ow_ = 0;
  std::vector<std::size_t> in_shape_cache_;
  std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------

class FlattenLayer : public Layer {
 public:
  FlattenLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    out_shape_ = {shape_numel(in_shapes_[0])};
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    const Tensor& x = *in[0];
    in_shape_cache_ = x.shape;
    Tensor y = x;
    y.shape = {x.shape[0], x.row_size()};
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    Tensor dx = dout;
    dx.shape = in_shape_cache_;
    return {std::move(dx)};
  }

 private:
  std::vector<std::size_t> in_shape_cache_;
};

// ---------------------------------------------------------------------------
// Inverted dropout: active only in training mode.

class DropoutLayer : public Layer {
 public:
  DropoutLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    out_shape_ = in_shapes_[0];
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool training, RngStream* rng) override {
    const Tensor& x = *in[0];
    if (!training || spec_.rate <= 0.0) {
      mask_.clear();
      return x;
    }
    const double keep = 1.0 - spec_.rate;
    mask_.resize(x.numel());
    Tensor y = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      mask_[i] = rng->uniform() < spec_.rate ? 0.0 : 1.0 / keep;
      y[i] *= mask_[i];
    }
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    Tensor dx = dout;
    if (!mask_.empty()) {
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= mask_[i];
    }
    return {std::move(dx)};
  }

 private:
  std::vector<double> mask_;
};

// ---------------------------------------------------------------------------
// BatchNorm over the last-axis features, pooling batch and any leading axes.
// Two modes: minibatch statistics (default; running buffers track inference
// stats) and frozen statistics (buffers fixed up front, used in both modes).

class BatchNormLayer : public Layer {
 public:
  static constexpr double kEps = 1e-3;
  static constexpr double kMomentum = 0.99;

  BatchNormLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    out_shape_ = in_shapes_[0];
    f_ = out_shape_.back();
    add_param("gamma", {f_}, false);
    add_param("beta", {f_}, true);
    add_param("running_mean", {f_}, false, false);
    add_param("running_var", {f_}, false, false);
    params_[0].value.fill(1.0);
    params_[3].value.fill(1.0);
  }

  bool supports_frozen_stats() const override { return true; }

  void freeze_statistics(const std::vector<double>& mean, const std::vector<double>& var) override {
    if (mean.size() != f_ || var.size() != f_)
      throw Error(name() + ": frozen statistics size mismatch");
    for (std::size_t j = 0; j < f_; ++j) {
      params_[2].value[j] = mean[j];
      params_[3].value[j] = var[j];
    }
    frozen_ = true;
  }

  void set_stats_frozen(bool v) override { frozen_ = v; }

  Tensor forward(const std::vector<const Tensor*>& in, bool training, RngStream*) override {
    x_ = *in[0];
    const std::size_t rows = x_.numel() / f_;
    rows_ = rows;
    batch_mode_ = training && !frozen_;
    mu_.assign(f_, 0.0);
    var_.assign(f_, 0.0);
    if (batch_mode_) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x_.data.data() + r * f_;
        for (std::size_t j = 0; j < f_; ++j) mu_[j] += xr[j];
      }
      for (std::size_t j = 0; j < f_; ++j) mu_[j] /= static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x_.data.data() + r * f_;
        for (std::size_t j = 0; j < f_; ++j) {
          const double d = xr[j] - mu_[j];
          var_[j] += d * d;
        }
      }
      for (std::size_t j = 0; j < f_; ++j) var_[j] /= static_cast<double>(rows);
      for (std::size_t j = 0; j < f_; ++j) {
        params_[2].value[j] = kMomentum * params_[2].value[j] + (1.0 - kMomentum) * mu_[j];
        params_[3].value[j] = kMomentum * params_[3].value[j] + (1.0 - kMomentum) * var_[j];
      }
    } else {
      for (std::size_t j = 0; j < f_; ++j) {
        mu_[j] = params_[2].value[j];
        var_[j] = params_[3].value[j];
      }
    }
    inv_std_.resize(f_);
    for (std::size_t j = 0; j < f_; ++j) inv_std_[j] = 1.0 / std::sqrt(var_[j] + kEps);

    Tensor y = Tensor::zeros(x_.shape);
    xhat_ = Tensor::zeros(x_.shape);
    const double* g = params_[0].value.data.data();
    const double* b = params_[1].value.data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x_.data.data() + r * f_;
      double* hr = xhat_.data.data() + r * f_;
      double* yr = y.data.data() + r * f_;
      for (std::size_t j = 0; j < f_; ++j) {
        hr[j] = (xr[j] - mu_[j]) * inv_std_[j];
        yr[j] = g[j] * hr[j] + b[j];
      }
    }
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    const std::size_t rows = rows_;
    const double n = static_cast<double>(rows);
    const double* g = params_[0].value.data.data();
    double* dgamma = params_[0].grad.data.data();
    double* dbeta = params_[1].grad.data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dr = dout.data.data() + r * f_;
      const double* hr = xhat_.data.data() + r * f_;
      for (std::size_t j = 0; j < f_; ++j) {
        dgamma[j] += dr[j] * hr[j];
        dbeta[j] += dr[j];
      }
    }
    Tensor dx = Tensor::zeros(x_.shape);
    if (!batch_mode_) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dr = dout.data.data() + r * f_;
        double* dxr = dx.data.data() + r * f_;
        for (std::size_t j = 0; j < f_; ++j) dxr[j] = dr[j] * g[j] * inv_std_[j];
      }
      return {std::move(dx)};
    }
    // Batch statistics participate in the graph.
    std::vector<double> sum_dxhat(f_, 0.0), sum_dxhat_xhat(f_, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dr = dout.data.data() + r * f_;
      const double* hr = xhat_.data.data() + r * f_;
      for (std::size_t j = 0; j < f_; ++j) {
        const double dxhat = dr[j] * g[j];
        sum_dxhat[j] += dxhat;
        sum_dxhat_xhat[j] += dxhat * hr[j];
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dr = dout.data.data() + r * f_;
      const double* hr = xhat_.data.data() + r * f_;
      double* dxr = dx.data.data() + r * f_;
      for (std::size_t j = 0; j < f_; ++j) {
        const double dxhat = dr[j] * g[j];
        dxr[j] = inv_std_[j] / n * (n * dxhat - sum_dxhat[j] - hr[j] * sum_dxhat_xhat[j]);
      }
    }
    return {std::move(dx)};
  }

 private:
  std::size_t f_ = 0, rows_ = 0;
  bool frozen_ = false, batch_mode_ = false;
  Tensor x_, xhat_;
  std::vector<double> mu_, var_, inv_std_;
};

// ---------------------------------------------------------------------------
// Embedding: integer ids (stored as doubles) -> learned rows.

class EmbeddingLayer : public Layer {
 public:
  EmbeddingLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    const auto& is = in_shapes_[0];
    if (is.size() != 1)
      throw Error(name() + ": expected rank-1 id sequence, got " + shape_to_string(is));
    s_ = is[0];
    v_ = static_cast<std::size_t>(spec_.vocab_size);
    d_ = static_cast<std::size_t>(spec_.embed_dim);
    out_shape_ = {s_, d_};
    add_param("E", {v_, d_}, false);
  }

  void init_params(RngStream& rng) override {
    init_tensor(params_[0].value, spec_.init, v_, d_, rng);
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    const Tensor& x = *in[0];
    const std::size_t n = x.shape[0];
    ids_.resize(n * s_);
    for (std::size_t i = 0; i < n * s_; ++i) {
      const long id = std::lround(x[i]);
      if (id < 0 || static_cast<std::size_t>(id) >= v_)
        throw Error(name() + ": token id " + std::to_string(id) + " outside vocab of " +
                    std::to_string(v_));
      ids_[i] = static_cast<std::size_t>(id);
    }
    Tensor y = Tensor::zeros({n, s_, d_});
    const double* e = params_[0].value.data.data();
    for (std::size_t i = 0; i < n * s_; ++i) {
      const double* row = e + ids_[i] * d_;
      double* yr = y.data.data() + i * d_;
      for (std::size_t j = 0; j < d_; ++j) yr[j] = row[j];
    }
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    double* de = params_[0].grad.data.data();
    const std::size_t n_ids = ids_.size();
    for (std::size_t i = 0; i < n_ids; ++i) {
      const double* gr = dout.data.data() + i * d_;
      double* row = de + ids_[i] * d_;
      for (std::size_t j = 0; j < d_; ++j) row[j] += gr[j];
    }
    // ids are not differentiable
    Tensor dx = Tensor::zeros({n_ids / s_, s_});
    return {std::move(dx)};
  }

 private:
  std::size_t s_ = 0, v_ = 0, d_ = 0;
  std::vector<std::size_t> ids_;
};

// ---------------------------------------------------------------------------
// LSTM with gate order [i, f, g, o]; kernel [F,4H], recurrent [H,4H],
// bias [4H] with the forget gate initialized to 1.

class LstmLayer : public Layer {
 public:
  LstmLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    const auto& is = in_shapes_[0];
    if (is.size() != 2)
      throw Error(name() + ": expected rank-2 input [t,features], got " + shape_to_string(is));
    t_ = is[0];
    f_ = is[1];
    h_ = static_cast<std::size_t>(spec_.units);
    out_shape_ = spec_.return_sequences ? std::vector<std::size_t>{t_, h_}
                                        : std::vector<std::size_t>{h_};
    add_param("W", {f_, 4 * h_}, false);
    add_param("U", {h_, 4 * h_}, false);
    add_param("b", {4 * h_}, true);
  }

  void init_params(RngStream& rng) override {
    init_tensor(params_[0].value, spec_.init, f_, 4 * h_, rng);
    init_tensor(params_[1].value, spec_.init, h_, 4 * h_, rng);
    for (std::size_t j = h_; j < 2 * h_; ++j) params_[2].value[j] = 1.0;
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    x_ = *in[0];
    n_ = x_.shape[0];
    const std::size_t nh = n_ * h_;
    gates_.assign(t_ * n_ * 4 * h_, 0.0);
    c_.assign(t_ * nh, 0.0);
    tc_.assign(t_ * nh, 0.0);
    hseq_.assign(t_ * nh, 0.0);
    const double* w = params_[0].value.data.data();
    const double* u = params_[1].value.data.data();
    const double* b = params_[2].value.data.data();

    std::vector<double> z(n_ * 4 * h_);
    for (std::size_t t = 0; t < t_; ++t) {
      for (std::size_t i = 0; i < n_; ++i) {
        double* zr = z.data() + i * 4 * h_;
        for (std::size_t j = 0; j < 4 * h_; ++j) zr[j] = b[j];
      }
      // x_t W
      for (std::size_t i = 0; i < n_; ++i) {
        const double* xr = x_.data.data() + (i * t_ + t) * f_;
        matmul_acc(xr, w, z.data() + i * 4 * h_, 1, f_, 4 * h_);
      }
      // h_{t-1} U
      if (t > 0) {
        matmul_acc(hseq_.data() + (t - 1) * nh, u, z.data(), n_, h_, 4 * h_);
      }
      double* gt = gates_.data() + t * n_ * 4 * h_;
      double* ct = c_.data() + t * nh;
      double* tct = tc_.data() + t * nh;
      double* ht = hseq_.data() + t * nh;
      const double* cprev = t > 0 ? c_.data() + (t - 1) * nh : nullptr;
      for (std::size_t i = 0; i < n_; ++i) {
        const double* zr = z.data() + i * 4 * h_;
        double* gr = gt + i * 4 * h_;
        for (std::size_t j = 0; j < h_; ++j) {
          const double ig = 1.0 / (1.0 + std::exp(-zr[j]));
          const double fg = 1.0 / (1.0 + std::exp(-zr[h_ + j]));
          const double gg = std::tanh(zr[2 * h_ + j]);
          const double og = 1.0 / (1.0 + std::exp(-zr[3 * h_ + j]));
          gr[j] = ig;
          gr[h_ + j] = fg;
          gr[2 * h_ + j] = gg;
          gr[3 * h_ + j] = og;
          const double cp = cprev ? cprev[i * h_ + j] : 0.0;
          const double cv = fg * cp + ig * gg;
          ct[i * h_ + j] = cv;
          const double tv = std::tanh(cv);
          tct[i * h_ + j] = tv;
          ht[i * h_ + j] = og * tv;
        }
      }
    }
    if (spec_.return_sequences) {
      Tensor y = Tensor::zeros({n_, t_, h_});
      for (std::size_t t = 0; t < t_; ++t) {
        for (std::size_t i = 0; i < n_; ++i) {
          const double* src = hseq_.data() + t * nh + i * h_;
          double* dst = y.data.data() + (i * t_ + t) * h_;
          for (std::size_t j = 0; j < h_; ++j) dst[j] = src[j];
        }
      }
      return y;
    }
    Tensor y = Tensor::zeros({n_, h_});
    const double* last = hseq_.data() + (t_ - 1) * nh;
    for (std::size_t i = 0; i < n_ * h_; ++i) y[i] = last[i];
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    const std::size_t nh = n_ * h_;
    const double* w = params_[0].value.data.data();
    const double* u = params_[1].value.data.data();
    double* dw = params_[0].grad.data.data();
    double* du = params_[1].grad.data.data();
    double* db = params_[2].grad.data.data();

    Tensor dx = Tensor::zeros(x_.shape);
    std::vector<double> dh_next(nh, 0.0), dc_next(nh, 0.0);
    std::vector<double> dz(n_ * 4 * h_);
    for (std::size_t tt = t_; tt-- > 0;) {
      const double* gt = gates_.data() + tt * n_ * 4 * h_;
      const double* tct = tc_.data() + tt * nh;
      const double* cprev = tt > 0 ? c_.data() + (tt - 1) * nh : nullptr;
      for (std::size_t i = 0; i < n_; ++i) {
        const double* gr = gt + i * 4 * h_;
        double* dzr = dz.data() + i * 4 * h_;
        for (std::size_t j = 0; j < h_; ++j) {
          double dh = dh_next[i * h_ + j];
          if (spec_.return_sequences) {
            dh += dout[(i * t_ + tt) * h_ + j];
          } else if (tt == t_ - 1) {
            dh += dout[i * h_ + j];
          }
          const double ig = gr[j], fg = gr[h_ + j], gg = gr[2 * h_ + j], og = gr[3 * h_ + j];
          const double tv = tct[i * h_ + j];
          const double dc = dh * og * (1.0 - tv * tv) + dc_next[i * h_ + j];
          const double cp = cprev ? cprev[i * h_ + j] : 0.0;
          dzr[j] = dc * gg * ig * (1.0 - ig);                    // input gate pre-act
          dzr[h_ + j] = dc * cp * fg * (1.0 - fg);               // forget gate pre-act
          dzr[2 * h_ + j] = dc * ig * (1.0 - gg * gg);           // candidate pre-act
          dzr[3 * h_ + j] = dh * tv * og * (1.0 - og);           // output gate pre-act
          dc_next[i * h_ + j] = dc * fg;
        }
      }
      // dW += x_tᵀ dz ; db += colsum dz ; dx_t = dz Wᵀ
      for (std::size_t i = 0; i < n_; ++i) {
        const double* xr = x_.data.data() + (i * t_ + tt) * f_;
        const double* dzr = dz.data() + i * 4 * h_;
        for (std::size_t ff = 0; ff < f_; ++ff) {
          const double xv = xr[ff];
          if (xv != 0.0) {
            double* dwr = dw + ff * 4 * h_;
            for (std::size_t j = 0; j < 4 * h_; ++j) dwr[j] += xv * dzr[j];
          }
        }
        for (std::size_t j = 0; j < 4 * h_; ++j) db[j] += dzr[j];
        double* dxr = dx.data.data() + (i * t_ + tt) * f_;
        for (std::size_t ff = 0; ff < f_; ++ff) {
          const double* wr = w + ff * 4 * h_;
          double acc = 0.0;
          for (std::size_t j = 0; j < 4 * h_; ++j) acc += dzr[j] * wr[j];
          dxr[ff] = acc;
        }
      }
      // dU += h_{t-1}ᵀ dz ; dh_next = dz Uᵀ
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      if (tt > 0) {
        const double* hprev = hseq_.data() + (tt - 1) * nh;
        for (std::size_t i = 0; i < n_; ++i) {
          const double* hr = hprev + i * h_;
          const double* dzr = dz.data() + i * 4 * h_;
          for (std::size_t j = 0; j < h_; ++j) {
            const double hv = hr[j];
            if (hv != 0.0) {
              double* dur = du + j * 4 * h_;
              for (std::size_t k = 0; k < 4 * h_; ++k) dur[k] += hv * dzr[k];
            }
            const double* ur = u + j * 4 * h_;
            double acc = 0.0;
            for (std::size_t k = 0; k < 4 * h_; ++k) acc += dzr[k] * ur[k];
            dh_next[i * h_ + j] = acc;
          }
        }
      }
    }
    return {std::move(dx)};
  }

 private:
  std::size_t t_ = 0, f_ = 0, h_ = 0, n_ = 0;
  Tensor x_;
  // time-major caches [t][n][...]
  std::vector<double> gates_, c_, tc_, hseq_;
};

// ---------------------------------------------------------------------------

class ConcatenateLayer : public Layer {
 public:
  ConcatenateLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    if (in_shapes_.size() < 2) throw Error(name() + ": needs at least two inputs");
    const auto& first = in_shapes_[0];
    std::size_t total = 0;
    for (const auto& s : in_shapes_) {
      if (s.size() != first.size())
        throw Error(name() + ": rank mismatch between inputs");
      for (std::size_t d = 0; d + 1 < s.size(); ++d) {
        if (s[d] != first[d]) throw Error(name() + ": leading extent mismatch between inputs");
      }
      total += s.back();
    }
    out_shape_ = first;
    out_shape_.back() = total;
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    widths_.clear();
    std::size_t total = 0;
    for (const Tensor* t : in) {
      widths_.push_back(t->last_extent());
      total += t->last_extent();
    }
    const std::size_t rows = in[0]->numel() / in[0]->last_extent();
    std::vector<std::size_t> oshape = in[0]->shape;
    oshape.back() = total;
    lead_shape_ = in[0]->shape;
    Tensor y = Tensor::zeros(oshape);
    for (std::size_t r = 0; r < rows; ++r) {
      double* yr = y.data.data() + r * total;
      std::size_t off = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t wk = widths_[k];
        const double* xr = in[k]->data.data() + r * wk;
        for (std::size_t j = 0; j < wk; ++j) yr[off + j] = xr[j];
        off += wk;
      }
    }
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    const std::size_t total = dout.last_extent();
    const std::size_t rows = dout.numel() / total;
    std::vector<Tensor> dxs;
    for (std::size_t k = 0; k < widths_.size(); ++k) {
      std::vector<std::size_t> s = lead_shape_;
      s.back() = widths_[k];
      dxs.push_back(Tensor::zeros(s));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = dout.data.data() + r * total;
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths_.size(); ++k) {
        double* dr = dxs[k].data.data() + r * widths_[k];
        for (std::size_t j = 0; j < widths_[k]; ++j) dr[j] = gr[off + j];
        off += widths_[k];
      }
    }
    return dxs;
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> lead_shape_;
};

// ---------------------------------------------------------------------------

class RepeatVectorLayer : public Layer {
 public:
  RepeatVectorLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    const auto& is = in_shapes_[0];
    if (is.size() != 1)
      throw Error(name() + ": expected rank-1 input, got " + shape_to_string(is));
    f_ = is[0];
    k_ = static_cast<std::size_t>(spec_.repeat);
    out_shape_ = {k_, f_};
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    const Tensor& x = *in[0];
    const std::size_t n = x.shape[0];
    n_ = n;
    Tensor y = Tensor::zeros({n, k_, f_});
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = x.data.data() + i * f_;
      for (std::size_t k = 0; k < k_; ++k) {
        double* yr = y.data.data() + (i * k_ + k) * f_;
        for (std::size_t j = 0; j < f_; ++j) yr[j] = xr[j];
      }
    }
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    Tensor dx = Tensor::zeros({n_, f_});
    for (std::size_t i = 0; i < n_; ++i) {
      double* dr = dx.data.data() + i * f_;
      for (std::size_t k = 0; k < k_; ++k) {
        const double* gr = dout.data.data() + (i * k_ + k) * f_;
        for (std::size_t j = 0; j < f_; ++j) dr[j] += gr[j];
      }
    }
    return {std::move(dx)};
  }

 private:
  std::size_t f_ = 0, k_ = 0, n_ = 0;
};

// ---------------------------------------------------------------------------

class ActivationLayer : public Layer {
 public:
  ActivationLayer(LayerSpec spec, std::vector<std::vector<std::size_t>> in)
      : Layer(std::move(spec), std::move(in)) {
    require_inputs(1);
    out_shape_ = in_shapes_[0];
  }

  Tensor forward(const std::vector<const Tensor*>& in, bool, RngStream*) override {
    Tensor y = *in[0];
    apply_activation(spec_.activation, y);
    post_ = y;
    return y;
  }

  std::vector<Tensor> backward(const Tensor& dout) override {
    return {activation_backward(spec_.activation, post_, dout)};
  }

 private:
  Tensor post_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(LayerSpec spec, std::vector<std::vector<std::size_t>> in) {
  switch (spec.kind) {
    case LayerKind::Dense:
    case LayerKind::TimeDistributedDense:
      return std::make_unique<DenseLayer>(std::move(spec), std::move(in));
    case LayerKind::Conv2D:
      return std::make_unique<Conv2DLayer>(std::move(spec), std::move(in));
    case LayerKind::MaxPool2D:
      return std::make_unique<MaxPool2DLayer>(std::move(spec), std::move(in));
    case LayerKind::Flatten:
      return std::make_unique<FlattenLayer>(std::move(spec), std::move(in));
    case LayerKind::Dropout:
      return std::make_unique<DropoutLayer>(std::move(spec), std::move(in));
    case LayerKind::BatchNorm:
      return std::make_unique<BatchNormLayer>(std::move(spec), std::move(in));
    case LayerKind::Embedding:
      return std::make_unique<EmbeddingLayer>(std::move(spec), std::move(in));
    case LayerKind::Lstm:
      return std::make_unique<LstmLayer>(std::move(spec), std::move(in));
    case LayerKind::Concatenate:
      return std::make_unique<ConcatenateLayer>(std::move(spec), std::move(in));
    case LayerKind::RepeatVector:
      return std::make_unique<RepeatVectorLayer>(std::move(spec), std::move(in));
    case LayerKind::Activation:
      return std::make_unique<ActivationLayer>(std::move(spec), std::move(in));
  }
  throw Error("unknown layer kind");
}

}  // namespace d4d
