#include "dualreal/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace dualreal {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op) + ": shape " + to_string(a) + " " + why);
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) shape_fail(op, a.shape(), "is not rank 2");
}

int normalize_axis(const char* op, const Tensor& a, int axis) {
  if (axis < 0) axis += 2;
  if (axis != 0 && axis != 1) shape_fail(op, a.shape(), "has no axis " + std::to_string(axis));
  return axis;
}

ConstMatMap as_mat(std::span<const double> d, std::size_t r, std::size_t c) {
  return ConstMatMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MatMap as_mat(std::vector<double>& d, std::size_t r, std::size_t c) {
  return MatMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

bool needs(const detail::Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

std::vector<double>& grad_slot(GradAccumulator& acc, const detail::Node& self, std::size_t i) {
  return acc.slot(self.parents[i].get());
}

// Shared shape handling for the two row-broadcasting primitives.
void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  require_matrix(op, a);
  require_matrix(op, b);
  const bool row = b.rows() == 1 && b.cols() == a.cols();
  const bool scalar = b.rows() == 1 && b.cols() == 1;
  if (!row && !scalar) shape_fail(op, a.shape(), b.shape());
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> data, bool grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor: zero extent in shape " + to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = grad;
  return n;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  return Tensor(new_node(std::move(shape), std::move(data), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  return Tensor(new_node(std::move(shape), std::move(data), true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::scalar(double value) { return constant({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> data) {
  const auto n = data.size();
  return constant({1, n}, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
  if (rank() != 2) shape_fail("rows", shape(), "is not rank 2");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) shape_fail("cols", shape(), "is not rank 2");
  return shape()[1];
}

std::span<const double> Tensor::data() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->value;
}

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

double Tensor::item() const {
  if (numel() != 1) shape_fail("item", shape(), "is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("tensor: requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw std::logic_error("tensor: only leaf tensors are writable");
  return node_->value;
}

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

// ---------------------------------------------------------------------------
// Autodiff

std::vector<double>& GradAccumulator::slot(const detail::Node* node) {
  auto it = grads_.find(node);
  if (it == grads_.end()) {
    it = grads_.emplace(node, std::vector<double>(node->value.size(), 0.0)).first;
  }
  return it->second;
}

std::span<const double> GradAccumulator::get(const detail::Node* node) const {
  auto it = grads_.find(node);
  if (it == grads_.end()) return {};
  return it->second;
}

Tensor Gradients::of(const Tensor& t) const {
  auto g = acc_.get(t.id());
  if (g.empty()) return Tensor::zeros(t.shape());
  return Tensor::constant(t.shape(), std::vector<double>(g.begin(), g.end()));
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_op_result(
    Shape shape, std::vector<double> value, std::vector<Tensor> parents,
    std::function<void(const detail::Node&, std::span<const double>, GradAccumulator&)> backward) {
  auto node = new_node(std::move(shape), std::move(value), false);
  bool any = false;
  if (g_grad_enabled)
    for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Gradients backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  GradAccumulator acc;
  if (!loss.requires_grad()) return Gradients(std::move(acc));

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<const detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<const detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.id(), 0);
  seen.insert(loss.id());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  acc.slot(loss.id())[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const detail::Node* node = *it;
    if (!node->backward) continue;
    // Copy: the closure may insert new slots and rehash the map.
    const std::vector<double> g = acc.slot(node);
    node->backward(*node, g, acc);
  }
  return Gradients(std::move(acc));
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b, Transpose t) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const bool tb = t == Transpose::rhs;
  const std::size_t m = a.rows(), k = a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  const std::size_t n = tb ? b.rows() : b.cols();
  if (k != kb) shape_fail("matmul", a.shape(), b.shape());

  std::vector<double> out(m * n);
  auto om = as_mat(out, m, n);
  auto am = as_mat(a.data(), m, k);
  auto bm = as_mat(b.data(), b.rows(), b.cols());
  if (tb) {
    om.noalias() = am * bm.transpose();
  } else {
    om.noalias() = am * bm;
  }
  return make_op_result({m, n}, std::move(out), {a, b},
                        [m, k, n, tb](const detail::Node& self, std::span<const double> g,
                                      GradAccumulator& acc) {
                          auto gm = as_mat(g, m, n);
                          const auto& av = self.parents[0]->value;
                          const auto& bv = self.parents[1]->value;
                          auto am = as_mat(av, m, k);
                          if (needs(self, 0)) {
                            auto& ga = grad_slot(acc, self, 0);
                            auto gam = as_mat(ga, m, k);
                            if (tb) {
                              gam.noalias() += gm * as_mat(bv, n, k);
                            } else {
                              gam.noalias() += gm * as_mat(bv, k, n).transpose();
                            }
                          }
                          if (needs(self, 1)) {
                            auto& gb = grad_slot(acc, self, 1);
                            if (tb) {
                              as_mat(gb, n, k).noalias() += gm.transpose() * am;
                            } else {
                              as_mat(gb, k, n).noalias() += am.transpose() * gm;
                            }
                          }
                        });
}

namespace {

template <class Fwd>
Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
                          double sign_b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [sign_b](const detail::Node& self, std::span<const double> g,
                                 GradAccumulator& acc) {
                          if (needs(self, 0)) {
                            auto& ga = grad_slot(acc, self, 0);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (needs(self, 1)) {
                            auto& gb = grad_slot(acc, self, 1);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign_b * g[i];
                          }
                        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary("add", a, b, [](double x, double y) { return x + y; }, 1.0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary("sub", a, b, [](double x, double y) { return x - y; }, -1.0);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [](const detail::Node& self, std::span<const double> g,
                           GradAccumulator& acc) {
                          const auto& av = self.parents[0]->value;
                          const auto& bv = self.parents[1]->value;
                          if (needs(self, 0)) {
                            auto& ga = grad_slot(acc, self, 0);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                          }
                          if (needs(self, 1)) {
                            auto& gb = grad_slot(acc, self, 1);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                          }
                        });
}

Tensor scale(const Tensor& a, double s) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  return make_op_result(a.shape(), std::move(out), {a},
                        [s](const detail::Node& self, std::span<const double> g,
                            GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                        });
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
  return make_op_result(a.shape(), std::move(out), {a},
                        [](const detail::Node& self, std::span<const double> g,
                           GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        });
}

Tensor broadcast_add(const Tensor& a, const Tensor& b) {
  check_broadcast("broadcast_add", a, b);
  const std::size_t m = a.rows(), n = a.cols();
  const bool scalar = b.cols() == 1 && n != 1;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] + bv[scalar ? 0 : c];
  }
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [m, n, scalar](const detail::Node& self, std::span<const double> g,
                                       GradAccumulator& acc) {
                          if (needs(self, 0)) {
                            auto& ga = grad_slot(acc, self, 0);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (needs(self, 1)) {
                            auto& gb = grad_slot(acc, self, 1);
                            for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < n; ++c) {
                                gb[scalar ? 0 : c] += g[r * n + c];
                              }
                            }
                          }
                        });
}

Tensor broadcast_mul(const Tensor& a, const Tensor& b) {
  check_broadcast("broadcast_mul", a, b);
  const std::size_t m = a.rows(), n = a.cols();
  const bool scalar = b.cols() == 1 && n != 1;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = av[r * n + c] * bv[scalar ? 0 : c];
  }
  return make_op_result(a.shape(), std::move(out), {a, b},
                        [m, n, scalar](const detail::Node& self, std::span<const double> g,
                                       GradAccumulator& acc) {
                          const auto& av = self.parents[0]->value;
                          const auto& bv = self.parents[1]->value;
                          if (needs(self, 0)) {
                            auto& ga = grad_slot(acc, self, 0);
                            for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < n; ++c) {
                                ga[r * n + c] += g[r * n + c] * bv[scalar ? 0 : c];
                              }
                            }
                          }
                          if (needs(self, 1)) {
                            auto& gb = grad_slot(acc, self, 1);
                            for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < n; ++c) {
                                gb[scalar ? 0 : c] += g[r * n + c] * av[r * n + c];
                              }
                            }
                          }
                        });
}

Tensor mean_pool_axis(const Tensor& a, int axis) {
  require_matrix("mean_pool_axis", a);
  axis = normalize_axis("mean_pool_axis", a, axis);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  if (axis == 0) {
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) out[c] += av[r * n + c];
    }
    for (auto& v : out) v /= static_cast<double>(m);
    return make_op_result({1, n}, std::move(out), {a},
                          [m, n](const detail::Node& self, std::span<const double> g,
                                 GradAccumulator& acc) {
                            auto& ga = grad_slot(acc, self, 0);
                            const double inv = 1.0 / static_cast<double>(m);
                            for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c] * inv;
                            }
                          });
  }
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r] += av[r * n + c];
    out[r] /= static_cast<double>(n);
  }
  return make_op_result({m, 1}, std::move(out), {a},
                        [m, n](const detail::Node& self, std::span<const double> g,
                               GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          const double inv = 1.0 / static_cast<double>(n);
                          for (std::size_t r = 0; r < m; ++r) {
                            for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r] * inv;
                          }
                        });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op_result({1, 1}, {s}, {a},
                        [](const detail::Node& self, std::span<const double> g,
                           GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          for (auto& v : ga) v += g[0];
                        });
}

Tensor layer_norm(const Tensor& a, double eps) {
  require_matrix("layer_norm", a);
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.data();
  std::vector<double> out(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = av.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += x[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = (x[c] - mean) * inv;
  }
  auto normalized = out;
  return make_op_result(
      a.shape(), std::move(out), {a},
      [m, n, inv_std = std::move(inv_std), y = std::move(normalized)](
          const detail::Node& self, std::span<const double> g, GradAccumulator& acc) {
        auto& ga = grad_slot(acc, self, 0);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_g = 0.0, mean_gy = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            mean_g += g[r * n + c];
            mean_gy += g[r * n + c] * y[r * n + c];
          }
          mean_g /= static_cast<double>(n);
          mean_gy /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            ga[r * n + c] += inv_std[r] * (g[r * n + c] - mean_g - y[r * n + c] * mean_gy);
          }
        }
      });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double silu_value(double x) { return x / (1.0 + std::exp(-x)); }

namespace {

template <class Fwd, class Deriv>
Tensor elementwise_unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_op_result(a.shape(), std::move(out), {a},
                        [deriv](const detail::Node& self, std::span<const double> g,
                                GradAccumulator& acc) {
                          const auto& av = self.parents[0]->value;
                          auto& ga = grad_slot(acc, self, 0);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(av[i]);
                        });
}

}  // namespace

Tensor gelu(const Tensor& a) {
  return elementwise_unary(a, gelu_value, [](double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
           x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
  });
}

Tensor silu(const Tensor& a) {
  return elementwise_unary(a, silu_value, [](double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
  });
}

Tensor softmax_axis(const Tensor& a, int axis) {
  require_matrix("softmax_axis", a);
  axis = normalize_axis("softmax_axis", a, axis);
  const std::size_t m = a.rows(), n = a.cols();
  // Lines along the softmax axis: `count` lines of `len` entries separated by `stride`.
  const std::size_t count = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t stride = axis == 1 ? 1 : n;
  const std::size_t step = axis == 1 ? n : 1;
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t l = 0; l < count; ++l) {
    const std::size_t base = l * step;
    double mx = av[base];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, av[base + j * stride]);
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double e = std::exp(av[base + j * stride] - mx);
      out[base + j * stride] = e;
      z += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[base + j * stride] /= z;
  }
  auto probs = out;
  return make_op_result(a.shape(), std::move(out), {a},
                        [count, len, stride, step, p = std::move(probs)](
                            const detail::Node& self, std::span<const double> g,
                            GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          for (std::size_t l = 0; l < count; ++l) {
                            const std::size_t base = l * step;
                            double dot = 0.0;
                            for (std::size_t j = 0; j < len; ++j) {
                              const auto i = base + j * stride;
                              dot += g[i] * p[i];
                            }
                            for (std::size_t j = 0; j < len; ++j) {
                              const auto i = base + j * stride;
                              ga[i] += p[i] * (g[i] - dot);
                            }
                          }
                        });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    shape_fail("mse_loss", prediction.shape(), target.shape());
  }
  const auto pv = prediction.data();
  const auto tv = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  const double count = static_cast<double>(pv.size());
  return make_op_result({1, 1}, {s / count}, {prediction, target},
                        [count](const detail::Node& self, std::span<const double> g,
                                GradAccumulator& acc) {
                          const auto& pv = self.parents[0]->value;
                          const auto& tv = self.parents[1]->value;
                          const double k = 2.0 * g[0] / count;
                          if (needs(self, 0)) {
                            auto& gp = grad_slot(acc, self, 0);
                            for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += k * (pv[i] - tv[i]);
                          }
                          if (needs(self, 1)) {
                            auto& gt = grad_slot(acc, self, 1);
                            for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= k * (pv[i] - tv[i]);
                          }
                        });
}

Tensor slice_chunk(const Tensor& a, int axis, std::size_t begin, std::size_t length) {
  require_matrix("slice_chunk", a);
  axis = normalize_axis("slice_chunk", a, axis);
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (length == 0 || begin + length > extent) {
    shape_fail("slice_chunk", a.shape(),
               "cannot provide [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                   ") on axis " + std::to_string(axis));
  }
  const auto av = a.data();
  if (axis == 0) {
    std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin * n),
                            av.begin() + static_cast<std::ptrdiff_t>((begin + length) * n));
    return make_op_result({length, n}, std::move(out), {a},
                          [begin, n](const detail::Node& self, std::span<const double> g,
                                     GradAccumulator& acc) {
                            auto& ga = grad_slot(acc, self, 0);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
                          });
  }
  std::vector<double> out(m * length);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * n + begin), length,
                out.begin() + static_cast<std::ptrdiff_t>(r * length));
  }
  return make_op_result({m, length}, std::move(out), {a},
                        [m, n, begin, length](const detail::Node& self, std::span<const double> g,
                                              GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          for (std::size_t r = 0; r < m; ++r) {
                            for (std::size_t c = 0; c < length; ++c) {
                              ga[r * n + begin + c] += g[r * length + c];
                            }
                          }
                        });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) require_matrix("concat", p);
  axis = normalize_axis("concat", parts[0], axis);
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if ((axis == 0 ? p.cols() : p.rows()) != fixed) shape_fail("concat", parts[0].shape(), p.shape());
    total += axis == 0 ? p.rows() : p.cols();
  }
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  if (axis == 0) {
    std::vector<double> out;
    out.reserve(total * fixed);
    for (const auto& p : parts) {
      offsets.push_back(out.size());
      widths.push_back(p.numel());
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_op_result({total, fixed}, std::move(out), parts,
                          [offsets, widths](const detail::Node& self, std::span<const double> g,
                                            GradAccumulator& acc) {
                            for (std::size_t k = 0; k < offsets.size(); ++k) {
                              if (!needs(self, k)) continue;
                              auto& gk = grad_slot(acc, self, k);
                              for (std::size_t i = 0; i < widths[k]; ++i) gk[i] += g[offsets[k] + i];
                            }
                          });
  }
  const std::size_t m = fixed;
  std::vector<double> out(m * total);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const auto pv = p.data();
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + col));
    }
    offsets.push_back(col);
    widths.push_back(w);
    col += w;
  }
  return make_op_result({m, total}, std::move(out), parts,
                        [m, total, offsets, widths](const detail::Node& self,
                                                    std::span<const double> g,
                                                    GradAccumulator& acc) {
                          for (std::size_t k = 0; k < offsets.size(); ++k) {
                            if (!needs(self, k)) continue;
                            auto& gk = grad_slot(acc, self, k);
                            const std::size_t w = widths[k];
                            for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < w; ++c) {
                                gk[r * w + c] += g[r * total + offsets[k] + c];
                              }
                            }
                          }
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result(std::move(shape), std::move(out), {a},
                        [](const detail::Node& self, std::span<const double> g,
                           GradAccumulator& acc) {
                          auto& ga = grad_slot(acc, self, 0);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        });
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                         double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  const std::vector<double> x0(point.data().begin(), point.data().end());
  auto leaf = Tensor::parameter(point.shape(), x0);
  const auto grads = backward(fn(leaf));
  const auto analytic = grads.of(leaf);

  double worst = 0.0;
  std::vector<double> x = x0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = x0[i] + h;
    const double fp = fn(Tensor::constant(point.shape(), x)).item();
    x[i] = x0[i] - h;
    const double fm = fn(Tensor::constant(point.shape(), x)).item();
    x[i] = x0[i];
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dualreal
