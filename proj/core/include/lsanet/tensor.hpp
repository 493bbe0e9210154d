#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lsanet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense double-precision tensor with an optional gradient slot.
/// Copies are shallow; the underlying storage is shared.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t ndim() const { return impl_->shape.size(); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  // Lazily allocated, zero-initialized.
  std::vector<double>& grad() const;
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  std::int64_t node_id() const { return impl_ ? impl_->node_id : -1; }
  void set_node_id(std::int64_t id) { impl_->node_id = id; }

  double item() const;  // scalar tensors only

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::int64_t node_id = -1;
  };
  std::shared_ptr<Impl> impl_;
};

/// Reverse-mode tape. One Graph per forward pass; backward() walks the tape
/// once in reverse and accumulates into the grad slots of the tensors that
/// participated. Gradients from multiple consumers sum.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Create a graph output. requires_grad is inherited from the inputs by the
  /// op helpers; leaves are made outside the graph.
  Tensor make(Shape shape, std::vector<double> data, bool requires_grad);

  /// Append a backward closure. Closures run in reverse insertion order,
  /// which is reverse topological order by construction.
  void record(std::function<void()> backward_fn);

  std::size_t tape_size() const { return tape_.size(); }

  // ---- elementwise / arithmetic ----
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softmax(const Tensor& x, std::size_t axis);

  // ---- linear algebra ----
  /// input [N,D] x weight [D,K] + bias [K] -> [N,K]
  Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);
  /// input [N,D] x weight^T with weight [K,D] -> [N,K]; no bias.
  Tensor linear_nt(const Tensor& input, const Tensor& weight);

  // ---- spatial ----
  Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                std::size_t stride, std::size_t padding);
  Tensor maxpool2d(const Tensor& input, std::size_t k, std::size_t stride);
  Tensor global_avg_pool(const Tensor& input);  // [N,C,H,W] -> [N,C]

  // ---- reductions / reshuffles ----
  Tensor sum_all(const Tensor& x);
  Tensor mean_all(const Tensor& x);
  Tensor concat_channels(std::span<const Tensor> xs);  // [N,C_i,H,W] -> [N,sum C_i,H,W]
  Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);  // [N,D]
  Tensor stack_scalars(std::span<const Tensor> xs);  // L scalars -> [L]
  Tensor index(const Tensor& x, std::size_t i);      // 1-D -> scalar
  Tensor detach(const Tensor& x);  // same values, blocks gradient flow

  /// Seeds d(loss)/d(loss)=1 and runs the tape backwards. loss must be scalar.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> tape_;
};

}  // namespace lsanet
