#include "lifegym/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "lifegym/errors.hpp"
#include "lifegym/tensor_io.hpp"

namespace lifegym::nn {

namespace {

std::string shape_str(const std::vector<int>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
  return out + ")";
}

std::size_t product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

inline int wrap(int i, int n) { return i < 0 ? i + n : (i >= n ? i - n : i); }

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeMismatch(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (product(shape) != data_.size()) {
    throw ShapeMismatch("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int kernel, Padding padding) {
  if (kernel != 1 && kernel != 3) throw ShapeMismatch("conv2d kernel must be 1 or 3");
  LayerSpec s{LayerKind::conv2d};
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.kernel = kernel;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::dense(int in_dim, int out_dim) {
  LayerSpec s{LayerKind::dense};
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  return s;
}

LayerSpec LayerSpec::avg_pool(int factor) {
  if (factor < 1) throw ShapeMismatch("avg_pool factor must be >= 1");
  LayerSpec s{LayerKind::avg_pool};
  s.pool = factor;
  return s;
}

std::vector<int> LayerSpec::weight_shape() const {
  if (kind == LayerKind::conv2d) return {out_ch, in_ch, kernel, kernel};
  if (kind == LayerKind::dense) return {out_dim, in_dim};
  return {};
}

int LayerSpec::fan_in() const {
  if (kind == LayerKind::conv2d) return in_ch * kernel * kernel;
  if (kind == LayerKind::dense) return in_dim;
  return 0;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::tanh: return "tanh";
    case LayerKind::flatten: return "flatten";
    case LayerKind::avg_pool: return "avg_pool";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

// fn(r, sr, c0, sc0, len) for every run of output columns c0..c0+len of row r
// whose sources under the (dy, dx) offset are the contiguous columns sc0.. of row sr.
template <typename Fn>
void for_each_run(int h, int w, int dy, int dx, bool toroidal, Fn&& fn) {
  const int lo = std::max(0, -dx), hi = std::min(w, w - dx);
  for (int r = 0; r < h; ++r) {
    int sr = r + dy;
    if (sr < 0 || sr >= h) {
      if (!toroidal) continue;
      sr = wrap(sr, h);
    }
    if (hi > lo) fn(r, sr, lo, lo + dx, hi - lo);
    if (!toroidal) continue;
    if (lo > 0) fn(r, sr, 0, w - lo, lo);
    if (hi < w) fn(r, sr, hi, 0, w - hi);
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding) {
  require_rank(x, 4, "conv2d");
  const int n = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_ch = weight.dim(0), k = weight.dim(2), pad = k / 2;
  if (weight.dim(1) != in_ch) {
    throw ShapeMismatch("conv2d expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                        std::to_string(in_ch));
  }
  Tensor y({n, out_ch, h, w});
  const bool toroidal = padding == Padding::toroidal;

#pragma omp parallel for schedule(static) collapse(2) if (static_cast<long>(n) * out_ch * h * w * in_ch * k * k > 200000)
  for (int b = 0; b < n; ++b) {
    for (int o = 0; o < out_ch; ++o) {
      double* out = &y.at(b, o, 0, 0);
      std::fill(out, out + static_cast<std::size_t>(h) * w, bias[static_cast<std::size_t>(o)]);
      for (int i = 0; i < in_ch; ++i) {
        const double* in = &x.at(b, i, 0, 0);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wv = weight.at(o, i, ky, kx);
            for_each_run(h, w, ky - pad, kx - pad, toroidal, [&](int r, int sr, int c0, int sc0, int len) {
              const double* src = in + static_cast<std::size_t>(sr) * w + sc0;
              double* dst = out + static_cast<std::size_t>(r) * w + c0;
              for (int j = 0; j < len; ++j) dst[j] += wv * src[j];
            });
          }
        }
      }
    }
  }
  return y;
}

void conv2d_weight_grad(const Tensor& x, const Tensor& dy, Padding padding, Tensor& dweight, Tensor& dbias) {
  const int n = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_ch = dweight.dim(0), k = dweight.dim(2), pad = k / 2;
  const bool toroidal = padding == Padding::toroidal;

#pragma omp parallel for schedule(static) if (static_cast<long>(n) * out_ch * h * w * in_ch * k * k > 200000)
  for (int o = 0; o < out_ch; ++o) {
    for (int b = 0; b < n; ++b) {
      const double* g = &dy.at(b, o, 0, 0);
      double sum = 0.0;
      for (std::size_t p = 0; p < static_cast<std::size_t>(h) * w; ++p) sum += g[p];
      dbias[static_cast<std::size_t>(o)] += sum;
      for (int i = 0; i < in_ch; ++i) {
        const double* in = &x.at(b, i, 0, 0);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for_each_run(h, w, ky - pad, kx - pad, toroidal, [&](int r, int sr, int c0, int sc0, int len) {
              const double* gr = g + static_cast<std::size_t>(r) * w + c0;
              const double* src = in + static_cast<std::size_t>(sr) * w + sc0;
              for (int j = 0; j < len; ++j) acc += gr[j] * src[j];
            });
            dweight.at(o, i, ky, kx) += acc;
          }
        }
      }
    }
  }
}

Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Padding padding,
                       Tensor& dweight, Tensor& dbias) {
  conv2d_weight_grad(x, dy, padding, dweight, dbias);
  const int n = x.dim(0), in_ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int out_ch = weight.dim(0), k = weight.dim(2), pad = k / 2;
  const bool toroidal = padding == Padding::toroidal;
  const bool parallel = static_cast<long>(n) * out_ch * h * w * in_ch * k * k > 200000;

  Tensor dx({n, in_ch, h, w});
#pragma omp parallel for schedule(static) collapse(2) if (parallel)
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < in_ch; ++i) {
      double* dst = &dx.at(b, i, 0, 0);
      for (int o = 0; o < out_ch; ++o) {
        const double* g = &dy.at(b, o, 0, 0);
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wv = weight.at(o, i, ky, kx);
            for_each_run(h, w, ky - pad, kx - pad, toroidal, [&](int r, int sr, int c0, int sc0, int len) {
              const double* gr = g + static_cast<std::size_t>(r) * w + c0;
              double* d = dst + static_cast<std::size_t>(sr) * w + sc0;
              for (int j = 0; j < len; ++j) d[j] += wv * gr[j];
            });
          }
        }
      }
    }
  }
  return dx;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "dense");
  const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeMismatch("dense expects input dim " + std::to_string(weight.dim(1)) + ", got " +
                        std::to_string(in));
  }
  Tensor y({n, out});
  for (int b = 0; b < n; ++b) {
    const double* xi = x.data() + static_cast<std::size_t>(b) * in;
    for (int j = 0; j < out; ++j) {
      const double* wj = weight.data() + static_cast<std::size_t>(j) * in;
      double acc = bias[static_cast<std::size_t>(j)];
      for (int i = 0; i < in; ++i) acc += wj[i] * xi[i];
      y[static_cast<std::size_t>(b) * out + j] = acc;
    }
  }
  return y;
}

Tensor dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor& dweight, Tensor& dbias) {
  const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  Tensor dx({n, in});
  for (int b = 0; b < n; ++b) {
    const double* xi = x.data() + static_cast<std::size_t>(b) * in;
    double* dxi = dx.data() + static_cast<std::size_t>(b) * in;
    for (int j = 0; j < out; ++j) {
      const double g = dy[static_cast<std::size_t>(b) * out + j];
      dbias[static_cast<std::size_t>(j)] += g;
      double* dwj = dweight.data() + static_cast<std::size_t>(j) * in;
      const double* wj = weight.data() + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) {
        dwj[i] += g * xi[i];
        dxi[i] += g * wj[i];
      }
    }
  }
  return dx;
}

Tensor avg_pool_forward(const Tensor& x, int factor) {
  require_rank(x, 4, "avg_pool");
  const int n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeMismatch("avg_pool factor " + std::to_string(factor) + " does not divide " + shape_str(x.shape()));
  }
  const int oh = h / factor, ow = w / factor;
  const double scale = 1.0 / (factor * factor);
  Tensor y({n, ch, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < ch; ++c)
      for (int r = 0; r < oh; ++r)
        for (int q = 0; q < ow; ++q) {
          double acc = 0.0;
          for (int dr = 0; dr < factor; ++dr)
            for (int dq = 0; dq < factor; ++dq) acc += x.at(b, c, r * factor + dr, q * factor + dq);
          y.at(b, c, r, q) = acc * scale;
        }
  return y;
}

Tensor avg_pool_backward(const Tensor& dy, int factor) {
  const int n = dy.dim(0), ch = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  const double scale = 1.0 / (factor * factor);
  Tensor dx({n, ch, oh * factor, ow * factor});
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < ch; ++c)
      for (int r = 0; r < oh * factor; ++r)
        for (int q = 0; q < ow * factor; ++q) dx.at(b, c, r, q) = dy.at(b, c, r / factor, q / factor) * scale;
  return dx;
}

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("mse shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::vector<LayerSpec> layers, std::uint64_t seed) : layers_(std::move(layers)) {
  validate_shapes();
  std::mt19937_64 rng(seed);
  for (const auto& layer : layers_) {
    LayerParams p;
    if (layer.has_params()) {
      const double a = std::sqrt(1.0 / layer.fan_in());
      std::uniform_real_distribution<double> init(-a, a);
      p.weight = Tensor(layer.weight_shape());
      for (auto& v : p.weight.values()) v = init(rng);
      p.bias = Tensor({layer.weight_shape()[0]});
      for (auto& v : p.bias.values()) v = init(rng);
    }
    params_.push_back(std::move(p));
  }
}

Network Network::zeros(std::vector<LayerSpec> layers) {
  Network net;
  net.layers_ = std::move(layers);
  net.validate_shapes();
  for (const auto& layer : net.layers_) {
    LayerParams p;
    if (layer.has_params()) {
      p.weight = Tensor(layer.weight_shape());
      p.bias = Tensor({layer.weight_shape()[0]});
    }
    net.params_.push_back(std::move(p));
  }
  return net;
}

void Network::validate_shapes() const {
  int channels = -1;
  int features = -1;
  for (const auto& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::conv2d:
        if (layer.in_ch < 1 || layer.out_ch < 1) throw ShapeMismatch("conv2d channels must be positive");
        if (channels >= 0 && channels != layer.in_ch) throw ShapeMismatch("conv2d channel chain mismatch");
        channels = layer.out_ch;
        break;
      case LayerKind::dense:
        if (layer.in_dim < 1 || layer.out_dim < 1) throw ShapeMismatch("dense dims must be positive");
        if (features >= 0 && features != layer.in_dim) throw ShapeMismatch("dense dimension chain mismatch");
        features = layer.out_dim;
        break;
      case LayerKind::flatten:
        channels = -1;
        break;
      default:
        break;
    }
  }
}

Tensor Network::forward(const Tensor& x) const {
  std::vector<Tensor> activations;
  return forward(x, activations);
}

Tensor Network::forward(const Tensor& x, std::vector<Tensor>& activations) const {
  if (!x.all_finite()) throw NonFiniteValue("network input contains NaN/Inf");
  activations.clear();
  activations.reserve(layers_.size() + 1);
  activations.push_back(x);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& layer = layers_[li];
    const Tensor& in = activations.back();
    Tensor out;
    switch (layer.kind) {
      case LayerKind::conv2d:
        out = conv2d_forward(in, params_[li].weight, params_[li].bias, layer.padding);
        break;
      case LayerKind::dense:
        out = dense_forward(in, params_[li].weight, params_[li].bias);
        break;
      case LayerKind::relu:
        out = in;
        for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::sigmoid:
        out = in;
        for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
        break;
      case LayerKind::tanh:
        out = in;
        for (auto& v : out.values()) v = std::tanh(v);
        break;
      case LayerKind::flatten:
        out = in.reshaped({in.dim(0), static_cast<int>(in.size() / static_cast<std::size_t>(in.dim(0)))});
        break;
      case LayerKind::avg_pool:
        out = avg_pool_forward(in, layer.pool);
        break;
    }
    activations.push_back(std::move(out));
  }
  if (!activations.back().all_finite()) throw NonFiniteValue("network output contains NaN/Inf");
  return activations.back();
}

std::vector<LayerParams> Network::backward(const std::vector<Tensor>& activations, const Tensor& grad_out,
                                           Tensor* grad_in) const {
  std::vector<LayerParams> grads(layers_.size());
  Tensor g = grad_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const Tensor& in = activations[li];
    const Tensor& out = activations[li + 1];
    switch (layer.kind) {
      case LayerKind::conv2d:
        grads[li].weight = Tensor(layer.weight_shape());
        grads[li].bias = Tensor({layer.out_ch});
        g = conv2d_backward(in, params_[li].weight, g, layer.padding, grads[li].weight, grads[li].bias);
        break;
      case LayerKind::dense:
        grads[li].weight = Tensor(layer.weight_shape());
        grads[li].bias = Tensor({layer.out_dim});
        g = dense_backward(in, params_[li].weight, g, grads[li].weight, grads[li].bias);
        break;
      case LayerKind::relu:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = in[i] > 0.0 ? g[i] : 0.0;
        break;
      case LayerKind::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (1.0 - out[i]);
        break;
      case LayerKind::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - out[i] * out[i];
        break;
      case LayerKind::flatten:
        g = g.reshaped(in.shape());
        break;
      case LayerKind::avg_pool:
        g = avg_pool_backward(g, layer.pool);
        break;
    }
  }
  if (grad_in) *grad_in = std::move(g);
  return grads;
}

double Network::sgd_step(const Tensor& x, const Tensor& target, double lr) {
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  std::vector<Tensor> activations;
  const Tensor y = forward(x, activations);
  const double loss = mse(y, target);
  if (!std::isfinite(loss)) throw NonFiniteValue("loss is not finite");
  Tensor grad(y.shape());
  const double scale = 2.0 / static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) grad[i] = scale * (y[i] - target[i]);
  const auto grads = backward(activations, grad);
  for (const auto& p : grads) {
    if (!p.weight.all_finite() || !p.bias.all_finite()) throw NonFiniteValue("gradient is not finite");
  }
  apply_gradients(grads, lr);
  return loss;
}

void Network::apply_gradients(const std::vector<LayerParams>& grads, double lr) {
  for (std::size_t li = 0; li < params_.size(); ++li) {
    if (!layers_[li].has_params()) continue;
    auto& p = params_[li];
    for (std::size_t i = 0; i < p.weight.size(); ++i) p.weight[i] -= lr * grads[li].weight[i];
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= lr * grads[li].bias[i];
  }
}

std::size_t Network::param_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.weight.size() + p.bias.size();
  return total;
}

std::vector<double> Network::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& p : params_) {
    out.insert(out.end(), p.weight.values().begin(), p.weight.values().end());
    out.insert(out.end(), p.bias.values().begin(), p.bias.values().end());
  }
  return out;
}

void Network::set_flat_params(std::span<const double> values) {
  if (values.size() != param_count()) {
    throw LengthMismatch("expected " + std::to_string(param_count()) + " parameters, got " +
                         std::to_string(values.size()));
  }
  std::size_t k = 0;
  for (auto& p : params_) {
    for (auto& v : p.weight.values()) v = values[k++];
    for (auto& v : p.bias.values()) v = values[k++];
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

LayerKind parse_kind(const std::string& name) {
  for (auto kind : {LayerKind::conv2d, LayerKind::dense, LayerKind::relu, LayerKind::sigmoid, LayerKind::tanh,
                    LayerKind::flatten, LayerKind::avg_pool}) {
    if (to_string(kind) == name) return kind;
  }
  throw IoError("unknown layer kind '" + name + "'");
}

}  // namespace

void save_network(const std::filesystem::path& base, const Network& net) {
  io::Manifest m;
  m.add("format", std::string("lifegym-network"));
  m.add("version", 1);
  for (const auto& layer : net.layers()) {
    std::ostringstream line;
    line << to_string(layer.kind);
    switch (layer.kind) {
      case LayerKind::conv2d:
        line << " " << layer.in_ch << " " << layer.out_ch << " " << layer.kernel << " "
             << (layer.padding == Padding::toroidal ? "toroidal" : "zero");
        break;
      case LayerKind::dense:
        line << " " << layer.in_dim << " " << layer.out_dim;
        break;
      case LayerKind::avg_pool:
        line << " " << layer.pool;
        break;
      default:
        break;
    }
    m.add("layer", line.str());
  }
  m.add("params", static_cast<long long>(net.param_count()));
  m.save(base.string() + ".manifest");
  io::write_f64_le(base.string() + ".bin", net.flat_params());
}

Network load_network(const std::filesystem::path& base) {
  const auto m = io::Manifest::load(base.string() + ".manifest");
  if (m.get("format") != "lifegym-network") throw IoError("not a network manifest");
  std::vector<LayerSpec> layers;
  for (const auto& line : m.all("layer")) {
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    switch (parse_kind(kind)) {
      case LayerKind::conv2d: {
        int ic = 0, oc = 0, k = 0;
        std::string pad;
        in >> ic >> oc >> k >> pad;
        layers.push_back(LayerSpec::conv2d(ic, oc, k, pad == "zero" ? Padding::zero : Padding::toroidal));
        break;
      }
      case LayerKind::dense: {
        int i = 0, o = 0;
        in >> i >> o;
        layers.push_back(LayerSpec::dense(i, o));
        break;
      }
      case LayerKind::avg_pool: {
        int f = 0;
        in >> f;
        layers.push_back(LayerSpec::avg_pool(f));
        break;
      }
      default:
        layers.push_back(LayerSpec{parse_kind(kind)});
    }
  }
  Network net = Network::zeros(std::move(layers));
  net.set_flat_params(io::read_f64_le(base.string() + ".bin"));
  return net;
}

}  // namespace lifegym::nn
