#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "smartvr/errors.hpp"

namespace smartvr::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<double> values) : shape(std::move(dims)), data(std::move(values)) {
    if (std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()) != data.size())
      throw ShapeError("tensor buffer does not match shape " + shape_string());
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
  }

  bool operator==(const Tensor&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

using ParameterRefs = std::vector<Parameter*>;

enum class Activation { relu, tanh, identity };

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x < 0.0 ? 0.0 : x;  // NaN passes through
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

// Derivative expressed through the activation output.
inline double activation_grad(Activation a, double y) {
  switch (a) {
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline void init_fan_in(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data) v = dist(rng);
}

class DenseLayer {
 public:
  DenseLayer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng, std::string name = "dense")
      : in_(in), out_(out), act_(act) {
    weight_ = {name + ".weight", Tensor({out, in}), Tensor({out, in})};
    bias_ = {name + ".bias", Tensor({out}), Tensor({out})};
    init_fan_in(weight_.value, in, rng);
    init_fan_in(bias_.value, in, rng);
  }

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  Activation activation() const { return act_; }

  // Pure evaluation; leaves the backward cache untouched.
  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != in_)
      throw ShapeError(weight_.name + ": expected input of size " + std::to_string(in_) + ", got " +
                       std::to_string(x.size()));
    std::vector<double> y(out_);
    const double* w = weight_.value.data.data();
    for (std::size_t o = 0; o < out_; ++o) {
      double acc = bias_.value.data[o];
      const double* row = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) acc += row[i] * x[i];
      y[o] = activate(act_, acc);
    }
    return y;
  }

  std::vector<double> forward(std::span<const double> x) {
    output_ = apply(x);
    input_.assign(x.begin(), x.end());
    cached_ = true;
    return output_;
  }

  // Accumulates parameter gradients and returns dL/dx.
  std::vector<double> backward(std::span<const double> dy, bool need_input_grad = true) {
    if (!cached_) throw StateError(weight_.name + ": backward called without a forward cache");
    if (dy.size() != out_) throw ShapeError(weight_.name + ": upstream gradient has wrong size");
    std::vector<double> dx(need_input_grad ? in_ : 0, 0.0);
    const double* w = weight_.value.data.data();
    double* gw = weight_.grad.data.data();
    for (std::size_t o = 0; o < out_; ++o) {
      const double dz = dy[o] * activation_grad(act_, output_[o]);
      if (dz == 0.0) continue;
      bias_.grad.data[o] += dz;
      const double* row = w + o * in_;
      double* grow = gw + o * in_;
      for (std::size_t i = 0; i < in_; ++i) grow[i] += dz * input_[i];
      if (need_input_grad)
        for (std::size_t i = 0; i < in_; ++i) dx[i] += dz * row[i];
    }
    return dx;
  }

  ParameterRefs parameters() { return {&weight_, &bias_}; }

 private:
  std::size_t in_, out_;
  Activation act_;
  Parameter weight_, bias_;
  std::vector<double> input_, output_;
  bool cached_ = false;
};

struct LayerSpec {
  std::size_t out;
  Activation act;
};

class Mlp {
 public:
  Mlp(std::size_t in, std::span<const LayerSpec> layers, std::mt19937_64& rng, const std::string& name = "mlp") {
    std::size_t width = in;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers_.emplace_back(width, layers[i].out, layers[i].act, rng, name + "." + std::to_string(i));
      width = layers[i].out;
    }
  }

  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> h(x.begin(), x.end());
    for (const auto& layer : layers_) h = layer.apply(h);
    return h;
  }

  std::vector<double> forward(std::span<const double> x) {
    std::vector<double> h(x.begin(), x.end());
    for (auto& layer : layers_) h = layer.forward(h);
    return h;
  }

  std::vector<double> backward(std::span<const double> dy, bool need_input_grad = true) {
    std::vector<double> g(dy.begin(), dy.end());
    for (std::size_t l = layers_.size(); l-- > 0;) g = layers_[l].backward(g, need_input_grad || l > 0);
    return g;
  }

  ParameterRefs parameters() {
    ParameterRefs out;
    for (auto& layer : layers_)
      for (auto* p : layer.parameters()) out.push_back(p);
    return out;
  }

 private:
  std::vector<DenseLayer> layers_;
};

// Dilated causal 1-D convolution over a [T, in] sequence. Tap j reads the input
// at t - (k-1-j)*dilation, so the last tap is the current frame; positions
// before the sequence start read zeros, keeping the output length at T.
class CausalConv1d {
 public:
  CausalConv1d(std::size_t in_ch, std::size_t out_ch, std::size_t dilation, std::mt19937_64& rng,
               std::string name = "conv", Activation act = Activation::relu, std::size_t kernel = 3)
      : in_(in_ch), out_(out_ch), k_(kernel), dilation_(dilation), act_(act) {
    if (dilation < 1) throw ConfigError(name + ": dilation must be >= 1");
    weight_ = {name + ".weight", Tensor({out_ch, in_ch, kernel}), Tensor({out_ch, in_ch, kernel})};
    bias_ = {name + ".bias", Tensor({out_ch}), Tensor({out_ch})};
    init_fan_in(weight_.value, in_ch * kernel, rng);
    init_fan_in(bias_.value, in_ch * kernel, rng);
  }

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }
  std::size_t dilation() const { return dilation_; }
  std::size_t left_padding() const { return (k_ - 1) * dilation_; }

  Tensor apply(const Tensor& x) const {
    if (x.shape.size() != 2 || x.shape[1] != in_)
      throw ShapeError(weight_.name + ": expected [T," + std::to_string(in_) + "] input, got " + x.shape_string());
    const std::size_t T = x.shape[0], span = in_ * k_;
    Tensor out({T, out_});
    const double* w = weight_.value.data.data();
    std::vector<double> g(span);
    for (std::size_t t = 0; t < T; ++t) {
      gather(x, t, g);
      double* y = out.data.data() + t * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        const double* wo = w + o * span;
        double acc = 0.0;
        for (std::size_t q = 0; q < span; ++q) acc += wo[q] * g[q];
        y[o] = activate(act_, acc + bias_.value.data[o]);
      }
    }
    return out;
  }

  Tensor forward(const Tensor& x) {
    output_ = apply(x);
    input_ = x;
    cached_ = true;
    return output_;
  }

  Tensor backward(const Tensor& dy, bool need_input_grad = true) {
    if (!cached_) throw StateError(weight_.name + ": backward called without a forward cache");
    if (dy.shape != output_.shape) throw ShapeError(weight_.name + ": upstream gradient has wrong shape");
    const std::size_t T = output_.shape[0], span = in_ * k_;
    Tensor dx;
    if (need_input_grad) dx = Tensor({T, in_});
    const double* w = weight_.value.data.data();
    double* gw = weight_.grad.data.data();
    std::vector<double> dz(out_), g(span), dg(span);
    for (std::size_t t = 0; t < T; ++t) {
      bool any = false;
      for (std::size_t o = 0; o < out_; ++o) {
        dz[o] = dy.data[t * out_ + o] * activation_grad(act_, output_.data[t * out_ + o]);
        bias_.grad.data[o] += dz[o];
        any = any || dz[o] != 0.0;
      }
      if (!any) continue;
      gather(input_, t, g);
      std::fill(dg.begin(), dg.end(), 0.0);
      for (std::size_t o = 0; o < out_; ++o) {
        const double d = dz[o];
        if (d == 0.0) continue;
        const double* wo = w + o * span;
        double* gwo = gw + o * span;
        for (std::size_t q = 0; q < span; ++q) gwo[q] += d * g[q];
        if (need_input_grad)
          for (std::size_t q = 0; q < span; ++q) dg[q] += d * wo[q];
      }
      if (!need_input_grad) continue;
      for (std::size_t j = 0; j < k_; ++j) {
        const std::size_t back = (k_ - 1 - j) * dilation_;
        if (back > t) continue;
        double* dxs = dx.data.data() + (t - back) * in_;
        for (std::size_t i = 0; i < in_; ++i) dxs[i] += dg[i * k_ + j];
      }
    }
    return dx;
  }

  ParameterRefs parameters() { return {&weight_, &bias_}; }

 private:
  // Receptive window of step t laid out like one output row of the weight,
  // g[i*k + j] = x[t - (k-1-j)*dilation][i], zero before the sequence start.
  void gather(const Tensor& x, std::size_t t, std::vector<double>& g) const {
    for (std::size_t j = 0; j < k_; ++j) {
      const std::size_t back = (k_ - 1 - j) * dilation_;
      const double* xs = back > t ? nullptr : x.data.data() + (t - back) * in_;
      for (std::size_t i = 0; i < in_; ++i) g[i * k_ + j] = xs ? xs[i] : 0.0;
    }
  }

  std::size_t in_, out_, k_, dilation_;
  Activation act_;
  Parameter weight_, bias_;
  Tensor input_, output_;
  bool cached_ = false;
};

enum class TcnReadout { last_step, mean };

struct TcnSpec {
  std::size_t in_channels = 51;
  std::vector<std::size_t> channels{32, 32, 64, 64};
  std::vector<std::size_t> dilations{1, 1, 2, 4};
  std::size_t kernel = 3;
  std::size_t head_hidden = 32;
  TcnReadout readout = TcnReadout::last_step;
};

// Causal conv stack -> temporal readout -> dense ReLU -> dense Tanh scalar.
class Tcn {
 public:
  Tcn(const TcnSpec& spec, std::mt19937_64& rng, const std::string& name = "tcn") : spec_(spec) {
    if (spec.channels.size() != spec.dilations.size()) throw ConfigError("tcn: channels/dilations length differ");
    std::size_t width = spec.in_channels;
    for (std::size_t l = 0; l < spec.channels.size(); ++l) {
      convs_.emplace_back(width, spec.channels[l], spec.dilations[l], rng, name + ".conv" + std::to_string(l),
                          Activation::relu, spec.kernel);
      width = spec.channels[l];
    }
    const LayerSpec head[] = {{spec.head_hidden, Activation::relu}, {1, Activation::tanh}};
    head_.emplace_back(width, head, rng, name + ".head");
  }

  const TcnSpec& spec() const { return spec_; }
  std::vector<CausalConv1d>& convs() { return convs_; }

  // Input frames that can influence the final time step.
  std::size_t receptive_field() const {
    std::size_t r = 1;
    for (const auto& c : convs_) r += c.left_padding();
    return r;
  }

  // Full-length feature sequence of the last conv layer.
  Tensor sequence(const Tensor& x) const {
    Tensor h = x;
    for (const auto& conv : convs_) h = conv.apply(h);
    return h;
  }

  double apply(const Tensor& x) const {
    check_input(x);
    return head_.front().apply(readout(sequence(x))).front();
  }

  double forward(const Tensor& x) {
    check_input(x);
    Tensor h = x;
    for (auto& conv : convs_) h = conv.forward(h);
    seq_len_ = h.shape[0];
    return head_.front().forward(readout(h)).front();
  }

  void backward(double dout) {
    const double up[] = {dout};
    const auto dpooled = head_.front().backward(up);
    const std::size_t C = dpooled.size();
    Tensor dh({seq_len_, C});
    if (spec_.readout == TcnReadout::last_step) {
      std::copy(dpooled.begin(), dpooled.end(), dh.data.begin() + static_cast<std::ptrdiff_t>((seq_len_ - 1) * C));
    } else {
      for (std::size_t t = 0; t < seq_len_; ++t)
        for (std::size_t c = 0; c < C; ++c) dh.data[t * C + c] = dpooled[c] / static_cast<double>(seq_len_);
    }
    for (std::size_t l = convs_.size(); l-- > 0;) dh = convs_[l].backward(dh, l > 0);
  }

  ParameterRefs parameters() {
    ParameterRefs out;
    for (auto& c : convs_)
      for (auto* p : c.parameters()) out.push_back(p);
    for (auto* p : head_.front().parameters()) out.push_back(p);
    return out;
  }

 private:
  static void check_input(const Tensor& x) {
    if (x.shape.size() != 2 || x.shape[0] == 0) throw ShapeError("tcn: expected non-empty [T,C] input");
  }

  std::vector<double> readout(const Tensor& h) const {
    const std::size_t T = h.shape[0], C = h.shape[1];
    std::vector<double> pooled(C, 0.0);
    if (spec_.readout == TcnReadout::last_step) {
      std::copy_n(h.data.begin() + static_cast<std::ptrdiff_t>((T - 1) * C), C, pooled.begin());
    } else {
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) pooled[c] += h.data[t * C + c];
      for (auto& v : pooled) v /= static_cast<double>(T);
    }
    return pooled;
  }

  TcnSpec spec_;
  std::vector<CausalConv1d> convs_;
  std::vector<Mlp> head_;  // one element, constructed after the conv stack
  std::size_t seq_len_ = 0;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;
};

// Bias-corrected Adam update using each parameter's accumulated gradient.
inline void adam_step(AdamState& state, const ParameterRefs& params) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape);
      state.v.emplace_back(p->value.shape);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: moment buffers do not match parameter count");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (state.m[k].shape != params[k]->value.shape || params[k]->grad.shape != params[k]->value.shape)
      throw ShapeError("adam: shape mismatch for " + params[k]->name);

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.data;
    const auto& g = params[k]->grad.data;
    auto& m = state.m[k].data;
    auto& v = state.v[k].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      w[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

inline double bce_loss(double p, bool y) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return y ? -std::log(p) : -std::log1p(-p);
}

struct GradCheckEntry {
  std::string parameter;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

// Relative error with a small absolute floor so that entries where both
// gradients vanish count as exact.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  const double diff = std::abs(analytic - numeric);
  return diff == 0.0 ? 0.0 : diff / scale;
}

// Compares analytic gradients (filled by `backward`, which must run forward
// and backward of `loss` on zeroed gradients) against central differences.
// `corrupt` perturbs the analytic side for negative-control runs.
inline GradCheckReport grad_check(const ParameterRefs& params, const std::function<double()>& loss,
                                  const std::function<void()>& backward, double h = 1e-4, bool corrupt = false) {
  for (auto* p : params) p->zero_grad();
  backward();
  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry entry{p->name, 0.0};
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + h;
      const double up = loss();
      p->value.data[i] = saved - h;
      const double down = loss();
      p->value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      double analytic = p->grad.data[i];
      if (corrupt) analytic = analytic * 1.5 + 1e-3;
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic, numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace smartvr::nn
