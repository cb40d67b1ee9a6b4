#pragma once

// Dense f64 tensors with reverse-mode automatic differentiation.
// The tape is dynamic: every op records a backward closure on the result
// node; backward() topologically sorts the reachable graph and runs the
// closures once, then frees them (no higher-order derivatives).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tg2g {

using Shape = std::vector<std::size_t>;

struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};
struct value_error : std::runtime_error {
  explicit value_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct TensorNode {
  std::vector<double> data;
  Shape shape;
  std::vector<double> grad;  // sized on demand, same length as data
  bool requires_grad = false;
  bool consumed = false;  // backward already ran through this node
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(std::vector<double> data, Shape shape, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw shape_error("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::TensorNode>();
    n->data = std::move(data);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> d(numel(shape), 0.0);
    return from(std::move(d), std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::vector<double> d(numel(shape), v);
    return from(std::move(d), std::move(shape), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({v}, Shape{1}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  double item() const {
    if (size() != 1) throw shape_error("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }
  double operator()(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw value_error("grad not populated");
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  // A detached copy sharing nothing with the tape.
  Tensor detach() const { return from(node_->data, node_->shape, false); }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_result(std::vector<double> data, Shape shape,
                               std::vector<Tensor> parents,
                               std::function<void(detail::TensorNode&)> backward_fn);
};

inline Tensor make_op_result(std::vector<double> data, Shape shape,
                             std::vector<Tensor> parents,
                             std::function<void(detail::TensorNode&)> backward_fn) {
  auto n = std::make_shared<detail::TensorNode>();
  n->data = std::move(data);
  n->shape = std::move(shape);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw value_error(std::string("non-finite input to ") + op);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

// dst[i] += src[i]
inline void axpy(std::vector<double>& dst, const std::vector<double>& src, double a = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

// C (m x n) += A (m x k) * B (k x n), row-major, ikj order
inline void matmul_acc(const double* a, const double* b, double* c, std::size_t m,
                       std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C (m x n) += A^T where A is (k x m), times B (k x n)
inline void matmul_at_b_acc(const double* a, const double* b, double* c, std::size_t k,
                            std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

// C (m x n) += A (m x k) * B^T where B is (n x k)
inline void matmul_a_bt_acc(const double* a, const double* b, double* c, std::size_t m,
                            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_finite(a, "matmul");
  detail::check_finite(b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  detail::matmul_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  return make_op_result(std::move(out), {m, n}, {a, b}, [an, bn, m, k, n](detail::TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      detail::matmul_a_bt_acc(self.grad.data(), bn->data.data(), an->grad.data(), m, n, k);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::matmul_at_b_acc(an->data.data(), self.grad.data(), bn->grad.data(), m, k, n);
    }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_finite(a, "add");
  detail::check_finite(b, "add");
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_op_result(std::move(out), a.shape(), {a, b}, [an, bn](detail::TensorNode& self) {
    if (an->requires_grad) { an->ensure_grad(); detail::axpy(an->grad, self.grad); }
    if (bn->requires_grad) { bn->ensure_grad(); detail::axpy(bn->grad, self.grad); }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_finite(a, "sub");
  detail::check_finite(b, "sub");
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_op_result(std::move(out), a.shape(), {a, b}, [an, bn](detail::TensorNode& self) {
    if (an->requires_grad) { an->ensure_grad(); detail::axpy(an->grad, self.grad); }
    if (bn->requires_grad) { bn->ensure_grad(); detail::axpy(bn->grad, self.grad, -1.0); }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_finite(a, "mul");
  detail::check_finite(b, "mul");
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_op_result(std::move(out), a.shape(), {a, b}, [an, bn](detail::TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->data[i];
    }
  });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_finite(a, "div");
  detail::check_finite(b, "div");
  detail::check_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_op_result(std::move(out), a.shape(), {a, b}, [an, bn](detail::TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        bn->grad[i] -= self.grad[i] * an->data[i] / (bn->data[i] * bn->data[i]);
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  detail::check_finite(a, "scale");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.data()[i];
  auto an = a.node();
  return make_op_result(std::move(out), a.shape(), {a}, [an, c](detail::TensorNode& self) {
    an->ensure_grad();
    detail::axpy(an->grad, self.grad, c);
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  detail::check_finite(a, "add_scalar");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  auto an = a.node();
  return make_op_result(std::move(out), a.shape(), {a}, [an](detail::TensorNode& self) {
    an->ensure_grad();
    detail::axpy(an->grad, self.grad);
  });
}

namespace detail {

template <class F, class DF>
Tensor unary_op(const Tensor& a, const char* name, F f, DF df) {
  check_finite(a, name);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  auto an = a.node();
  auto out_copy = out;  // many derivatives are cheapest in terms of the output
  return make_op_result(std::move(out), a.shape(), {a},
                        [an, df, y = std::move(out_copy)](TensorNode& self) {
                          an->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            an->grad[i] += self.grad[i] * df(an->data[i], y[i]);
                        });
}

}  // namespace detail

inline Tensor tanh_t(const Tensor& a) {
  return detail::unary_op(a, "tanh", [](double x) { return std::tanh(x); },
                          [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor elu(const Tensor& a, double alpha = 1.0) {
  return detail::unary_op(
      a, "elu", [alpha](double x) { return x > 0.0 ? x : alpha * (std::exp(x) - 1.0); },
      [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary_op(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                          [](double, double y) { return y * (1.0 - y); });
}

inline Tensor exp_t(const Tensor& a) {
  return detail::unary_op(a, "exp", [](double x) { return std::exp(x); },
                          [](double, double y) { return y; });
}

inline Tensor log_t(const Tensor& a) {
  return detail::unary_op(a, "log", [](double x) { return std::log(x); },
                          [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary_op(a, "square", [](double x) { return x * x; },
                          [](double x, double) { return 2.0 * x; });
}

// log(1 + e^x), overflow-safe
inline Tensor softplus(const Tensor& a) {
  return detail::unary_op(
      a, "softplus",
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Tensor sum(const Tensor& a) {
  detail::check_finite(a, "sum");
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  auto an = a.node();
  return make_op_result({s}, {1}, {a}, [an](detail::TensorNode& self) {
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  detail::check_finite(a, "mean");
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0) * inv;
  auto an = a.node();
  return make_op_result({s}, {1}, {a}, [an, inv](detail::TensorNode& self) {
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0] * inv;
  });
}

// Row sums of an (m x n) matrix, result shape (m x 1).
inline Tensor sum_rows(const Tensor& a) {
  detail::check_finite(a, "sum_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.data()[i * n + j];
  auto an = a.node();
  return make_op_result(std::move(out), {m, 1}, {a}, [an, m, n](detail::TensorNode& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[i];
  });
}

// Broadcast a length-n row vector over the rows of an (m x n) matrix.
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  detail::check_finite(a, "add_rowvec");
  detail::check_finite(v, "add_rowvec");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.size() != n)
    throw shape_error("add_rowvec: vector " + shape_str(v.shape()) + " vs matrix " +
                      shape_str(a.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + v.data()[j];
  auto an = a.node(), vn = v.node();
  return make_op_result(std::move(out), a.shape(), {a, v}, [an, vn, m, n](detail::TensorNode& self) {
    if (an->requires_grad) { an->ensure_grad(); detail::axpy(an->grad, self.grad); }
    if (vn->requires_grad) {
      vn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) vn->grad[j] += self.grad[i * n + j];
    }
  });
}

inline Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  detail::check_finite(a, "mul_rowvec");
  detail::check_finite(v, "mul_rowvec");
  const std::size_t m = a.rows(), n = a.cols();
  if (v.size() != n)
    throw shape_error("mul_rowvec: vector " + shape_str(v.shape()) + " vs matrix " +
                      shape_str(a.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] * v.data()[j];
  auto an = a.node(), vn = v.node();
  return make_op_result(std::move(out), a.shape(), {a, v}, [an, vn, m, n](detail::TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[i * n + j] * vn->data[j];
    }
    if (vn->requires_grad) {
      vn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) vn->grad[j] += self.grad[i * n + j] * an->data[i * n + j];
    }
  });
}

// Row-wise softmax with the usual max-shift for stability.
inline Tensor softmax_rows(const Tensor& a) {
  detail::check_finite(a, "softmax");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (out[i * n + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
  }
  auto an = a.node();
  auto y = out;
  return make_op_result(std::move(out), a.shape(), {a},
                        [an, m, n, y = std::move(y)](detail::TensorNode& self) {
                          an->ensure_grad();
                          for (std::size_t i = 0; i < m; ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < n; ++j)
                              dot += self.grad[i * n + j] * y[i * n + j];
                            for (std::size_t j = 0; j < n; ++j)
                              an->grad[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
                          }
                        });
}

// Row-wise layer normalization with population variance; no affine terms
// (compose with mul_rowvec/add_rowvec for gain and bias).
inline Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5) {
  detail::check_finite(a, "layer_norm");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (x[j] - mu) * inv_std[i];
  }
  auto an = a.node();
  auto y = out;
  return make_op_result(
      std::move(out), a.shape(), {a},
      [an, m, n, y = std::move(y), inv_std = std::move(inv_std)](detail::TensorNode& self) {
        an->ensure_grad();
        const double invn = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_g = 0.0, mean_gy = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            mean_g += self.grad[i * n + j];
            mean_gy += self.grad[i * n + j] * y[i * n + j];
          }
          mean_g *= invn;
          mean_gy *= invn;
          for (std::size_t j = 0; j < n; ++j)
            an->grad[i * n + j] +=
                inv_std[i] * (self.grad[i * n + j] - mean_g - y[i * n + j] * mean_gy);
        }
      });
}

// Vertical concatenation (stacked rows); operands must share column count.
inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  detail::check_finite(a, "concat");
  detail::check_finite(b, "concat");
  if (a.cols() != b.cols())
    throw shape_error("concat: column mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  const std::size_t n = a.cols(), ma = a.rows(), mb = b.rows();
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  auto an = a.node(), bn = b.node();
  return make_op_result(std::move(out), {ma + mb, n}, {a, b},
                        [an, bn, na = ma * n](detail::TensorNode& self) {
                          if (an->requires_grad) {
                            an->ensure_grad();
                            for (std::size_t i = 0; i < na; ++i) an->grad[i] += self.grad[i];
                          }
                          if (bn->requires_grad) {
                            bn->ensure_grad();
                            for (std::size_t i = 0; i < bn->data.size(); ++i)
                              bn->grad[i] += self.grad[na + i];
                          }
                        });
}

// Reinterpret the (row-major contiguous) data under a new shape.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw shape_error("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto an = a.node();
  std::vector<double> out = a.data();
  return make_op_result(std::move(out), std::move(shape), {a}, [an](detail::TensorNode& self) {
    an->ensure_grad();
    detail::axpy(an->grad, self.grad);
  });
}

// Select rows of a by index; backward scatter-adds.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  detail::check_finite(a, "gather_rows");
  const std::size_t n = a.cols();
  std::vector<double> out(idx.size() * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) throw shape_error("gather_rows: index out of range");
    std::copy_n(a.data().data() + idx[i] * n, n, out.data() + i * n);
  }
  auto an = a.node();
  return make_op_result(std::move(out), {idx.size(), n}, {a},
                        [an, idx, n](detail::TensorNode& self) {
                          an->ensure_grad();
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < n; ++j)
                              an->grad[idx[i] * n + j] += self.grad[i * n + j];
                        });
}

// Scaled dot-product attention applied independently to consecutive row
// blocks of size `block` (one block per sequence). Q, K, V are
// (num_blocks*block x d). Returns softmax(QK^T/sqrt(d)) V per block; the
// row-stochastic weights are written to *weights_out when given.
inline Tensor block_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              std::size_t block, std::vector<double>* weights_out = nullptr) {
  detail::check_finite(q, "attention");
  detail::check_finite(k, "attention");
  detail::check_finite(v, "attention");
  detail::check_same_shape(q, k, "attention");
  detail::check_same_shape(q, v, "attention");
  const std::size_t rows = q.rows(), d = q.cols();
  if (block == 0 || rows % block != 0)
    throw shape_error("attention: row count " + std::to_string(rows) +
                      " not a multiple of block " + std::to_string(block));
  const std::size_t nb = rows / block;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> attn(nb * block * block, 0.0);
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    const double* qb = q.data().data() + b * block * d;
    const double* kb = k.data().data() + b * block * d;
    const double* vb = v.data().data() + b * block * d;
    double* ab = attn.data() + b * block * block;
    detail::matmul_a_bt_acc(qb, kb, ab, block, d, block);
    for (std::size_t i = 0; i < block; ++i) {
      double* row = ab + i * block;
      double mx = row[0] * inv_sqrt_d;
      for (std::size_t j = 0; j < block; ++j) mx = std::max(mx, row[j] * inv_sqrt_d);
      double s = 0.0;
      for (std::size_t j = 0; j < block; ++j) s += (row[j] = std::exp(row[j] * inv_sqrt_d - mx));
      for (std::size_t j = 0; j < block; ++j) row[j] /= s;
    }
    detail::matmul_acc(ab, vb, out.data() + b * block * d, block, block, d);
  }
  if (weights_out) *weights_out = attn;
  auto qn = q.node(), kn = k.node(), vn = v.node();
  return make_op_result(
      std::move(out), q.shape(), {q, k, v},
      [qn, kn, vn, nb, block, d, inv_sqrt_d, attn = std::move(attn)](detail::TensorNode& self) {
        if (qn->requires_grad) qn->ensure_grad();
        if (kn->requires_grad) kn->ensure_grad();
        if (vn->requires_grad) vn->ensure_grad();
        std::vector<double> d_attn(block * block);
        std::vector<double> d_scores(block * block);
        for (std::size_t b = 0; b < nb; ++b) {
          const double* ab = attn.data() + b * block * block;
          const double* qb = qn->data.data() + b * block * d;
          const double* kb = kn->data.data() + b * block * d;
          const double* vb = vn->data.data() + b * block * d;
          const double* gb = self.grad.data() + b * block * d;
          if (vn->requires_grad)
            detail::matmul_at_b_acc(ab, gb, vn->grad.data() + b * block * d, block, block, d);
          if (!qn->requires_grad && !kn->requires_grad) continue;
          std::fill(d_attn.begin(), d_attn.end(), 0.0);
          detail::matmul_a_bt_acc(gb, vb, d_attn.data(), block, d, block);
          for (std::size_t i = 0; i < block; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < block; ++j) dot += d_attn[i * block + j] * ab[i * block + j];
            for (std::size_t j = 0; j < block; ++j)
              d_scores[i * block + j] =
                  ab[i * block + j] * (d_attn[i * block + j] - dot) * inv_sqrt_d;
          }
          if (qn->requires_grad)
            detail::matmul_acc(d_scores.data(), kb, qn->grad.data() + b * block * d, block, block, d);
          if (kn->requires_grad)
            detail::matmul_at_b_acc(d_scores.data(), qb, kn->grad.data() + b * block * d, block,
                                    block, d);
        }
      });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw shape_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (root->consumed) throw value_error("backward: tape already consumed");
  if (!std::isfinite(root->data[0])) throw value_error("backward: non-finite loss");

  // iterative post-order DFS; order holds shared ownership so freeing one
  // node's closure cannot destroy another before its turn
  using NodePtr = std::shared_ptr<detail::TensorNode>;
  std::vector<NodePtr> order;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{root, 0}};
  std::vector<detail::TensorNode*> visited;
  while (!stack.empty()) {
    auto node = stack.back().first;
    auto& child = stack.back().second;
    if (child == 0) {
      if (node->consumed || std::find(visited.begin(), visited.end(), node.get()) != visited.end()) {
        stack.pop_back();
        continue;
      }
      visited.push_back(node.get());
    }
    if (child < node->parents.size()) {
      NodePtr next = node->parents[child];
      ++child;
      bool seen = std::find(visited.begin(), visited.end(), next.get()) != visited.end();
      if (!seen && !next->consumed) stack.push_back({std::move(next), 0});
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
      node->backward_fn = nullptr;  // free the tape
      node->parents.clear();
    }
    node->consumed = true;
  }
  for (const auto& node : order)
    for (double g : node->grad)
      if (!std::isfinite(g)) throw value_error("backward: non-finite gradient");
}

}  // namespace tg2g
