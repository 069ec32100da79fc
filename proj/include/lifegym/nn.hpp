#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lifegym::nn {

/// Dense row-major float64 buffer, shape (n, c, h, w) or (n, d).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  const double& at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  /// Same data, new shape of equal size. Throws ShapeMismatch.
  Tensor reshaped(std::vector<int> shape) const;
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

enum class LayerKind { conv2d, dense, relu, sigmoid, tanh, flatten, avg_pool };
enum class Padding { toroidal, zero };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;  // 1 or 3, stride 1, "same" output size
  Padding padding = Padding::toroidal;
  int in_dim = 0;
  int out_dim = 0;
  int pool = 0;  // avg_pool window and stride

  static LayerSpec conv2d(int in_ch, int out_ch, int kernel, Padding padding = Padding::toroidal);
  static LayerSpec dense(int in_dim, int out_dim);
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec sigmoid() { return {LayerKind::sigmoid}; }
  static LayerSpec tanh() { return {LayerKind::tanh}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec avg_pool(int factor);

  bool has_params() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }
  std::vector<int> weight_shape() const;
  int fan_in() const;

  bool operator==(const LayerSpec&) const = default;
};

std::string to_string(LayerKind kind);

struct LayerParams {
  Tensor weight;  // conv: (out, in, k, k); dense: (out, in)
  Tensor bias;    // (out)

  bool operator==(const LayerParams&) const = default;
};

// Raw kernels. Each parallelises over an outer index whose work is
// independent, so results are identical for any thread count.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding);
/// Accumulates dweight[o,i,ky,kx] += sum_p dy[o,p] * x[i,p+d] and dbias[o] += sum_p dy[o,p].
void conv2d_weight_grad(const Tensor& x, const Tensor& dy, Padding padding, Tensor& dweight, Tensor& dbias);
/// Accumulates parameter gradients into dweight/dbias, returns input gradient.
Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Padding padding,
                       Tensor& dweight, Tensor& dbias);
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor& dweight, Tensor& dbias);
Tensor avg_pool_forward(const Tensor& x, int factor);
Tensor avg_pool_backward(const Tensor& dy, int factor);

/// Mean of squared differences. Throws ShapeMismatch.
double mse(const Tensor& a, const Tensor& b);

/// A sequential chain of layers with owned parameters.
class Network {
 public:
  Network() = default;
  /// Weights and biases ~ U(-a, a), a = sqrt(1 / fan_in). Throws ShapeMismatch on
  /// incompatible neighbouring layers.
  Network(std::vector<LayerSpec> layers, std::uint64_t seed);
  static Network zeros(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<LayerParams>& params() { return params_; }
  const std::vector<LayerParams>& params() const { return params_; }

  /// Throws ShapeMismatch or NonFiniteValue.
  Tensor forward(const Tensor& x) const;
  /// activations[0] = x, activations[i + 1] = output of layer i.
  Tensor forward(const Tensor& x, std::vector<Tensor>& activations) const;
  /// Parameter gradients of a scalar loss given dloss/doutput.
  std::vector<LayerParams> backward(const std::vector<Tensor>& activations, const Tensor& grad_out,
                                    Tensor* grad_in = nullptr) const;

  /// One plain gradient-descent step on MSE(forward(x), target). Returns the
  /// pre-step loss. Throws NonFiniteValue without modifying the weights.
  double sgd_step(const Tensor& x, const Tensor& target, double lr);
  /// Applies params -= lr * grads.
  void apply_gradients(const std::vector<LayerParams>& grads, double lr);

  std::size_t param_count() const;
  std::vector<double> flat_params() const;
  /// Throws LengthMismatch.
  void set_flat_params(std::span<const double> values);

  bool operator==(const Network&) const = default;

 private:
  void validate_shapes() const;

  std::vector<LayerSpec> layers_;
  std::vector<LayerParams> params_;
};

/// Writes `<base>.bin` (little-endian float64 parameters) and
/// `<base>.manifest` (layer list and shapes).
void save_network(const std::filesystem::path& base, const Network& net);
Network load_network(const std::filesystem::path& base);

}  // namespace lifegym::nn
