#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dualreal {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when the operands of a primitive do not conform. The message names the
/// primitive and the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GradAccumulator;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives d(loss)/d(this) and pushes contributions into the parents' slots.
  std::function<void(const Node& self, std::span<const double> grad_out, GradAccumulator& acc)>
      backward;
};

}  // namespace detail

/// Handle to a dense row-major array of doubles. Copies share the underlying node.
///
/// Values are fixed once an op produced them. Leaf tensors (parameters) are the one
/// exception: their storage may be rewritten between traces by initializers, the
/// optimizer and checkpoint loading.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor parameter(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  void set_requires_grad(bool on);
  std::span<double> mutable_data();

  /// Deep copy of the value with no autodiff history.
  Tensor detach() const;

  const detail::Node* id() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                               std::function<void(const detail::Node&, std::span<const double>,
                                                  GradAccumulator&)>);
};

/// Gradient buffers produced by one backward pass, keyed by tensor node.
class GradAccumulator {
 public:
  std::vector<double>& slot(const detail::Node* node);
  bool contains(const detail::Node* node) const { return grads_.count(node) != 0; }
  std::span<const double> get(const detail::Node* node) const;

 private:
  std::unordered_map<const detail::Node*, std::vector<double>> grads_;
};

class Gradients {
 public:
  explicit Gradients(GradAccumulator acc) : acc_(std::move(acc)) {}
  bool has(const Tensor& t) const { return acc_.contains(t.id()); }
  /// Gradient of the loss with respect to `t`; zeros when `t` was not reachable.
  Tensor of(const Tensor& t) const;

 private:
  GradAccumulator acc_;
};

/// Builds an op output node. Parents and the backward closure are only retained
/// when at least one parent requires a gradient.
Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(const detail::Node&, std::span<const double>,
                                         GradAccumulator&)>
                          backward);

/// While alive, ops on this thread record no autodiff history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse-mode sweep from a scalar loss.
Gradients backward(const Tensor& loss);

enum class Transpose { none, rhs };

// Primitives. Matrices are rank 2; row vectors are [1, n].
Tensor matmul(const Tensor& a, const Tensor& b, Transpose t = Transpose::none);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// a[m,n] + b where b is [1,n] (added to every row) or [1,1].
Tensor broadcast_add(const Tensor& a, const Tensor& b);
/// a[m,n] * b where b is [1,n] (row-wise) or [1,1].
Tensor broadcast_mul(const Tensor& a, const Tensor& b);
Tensor mean_pool_axis(const Tensor& a, int axis);
Tensor sum(const Tensor& a);
/// Normalizes each row to zero mean / unit variance; no affine parameters.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softmax_axis(const Tensor& a, int axis);
Tensor mse_loss(const Tensor& prediction, const Tensor& target);
Tensor slice_chunk(const Tensor& a, int axis, std::size_t begin, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor reshape(const Tensor& a, Shape shape);

double gelu_value(double x);
double silu_value(double x);

/// Max over coordinates of |autodiff - central difference| / (|central difference| + 1e-12).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                         double h);

}  // namespace dualreal
