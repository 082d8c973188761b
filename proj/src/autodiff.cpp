// Copyright 2026 The PVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace pvae::ad {
namespace {

thread_local bool g_grad_enabled = true;

// C (m x n) += A (m x k) . B (k x n). Each output element is summed over
// k in a fixed order, independent of m, so a row's result never depends on
// how many other rows share the call.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

// C (m x k) += G (m x n) . B^T where B is (k x n).
void gemm_nt_acc(const double* g, const double* b, double* c, std::size_t m,
                 std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// C (k x n) += A^T . G where A is (m x k) and G is (m x n).
void gemm_tn_acc(const double* a, const double* g, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += s * gi[j];
    }
  }
}

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor");
  }
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (!a.defined() || a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix");
  }
}

// Builds the output node and wires history only when it is needed.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const auto& p) { return p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  auto pa = a.node_ptr();
  return make_result(a.shape(), std::move(out), {pa},
                     [pa, deriv](Node& self) {
                       if (!pa->requires_grad) return;
                       auto& g = pa->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += self.grad[i] * deriv(pa->data[i], self.data[i]);
                       }
                     });
}

}  // namespace

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): not a matrix");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): not a matrix");
  return shape()[1];
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item(): tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

Tensor Tensor::detach() const {
  return from(shape(), node_->data, false);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    for (auto* p : {pa.get(), pb.get()}) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->data[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->data[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.at(i) == 0.0) throw std::domain_error("div: division by zero");
    out[i] = a.at(i) / b.at(i);
  }
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb->data[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad[i] * self.data[i] / pb->data[i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) {
      throw std::domain_error("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v >= 0.0)) throw std::domain_error("sqrt: negative input");
  }
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto pa = a.node_ptr();
  return make_result({}, {total}, {pa}, [pa](Node& self) {
    auto& g = pa->ensure_grad();
    for (auto& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw std::invalid_argument("matmul: inner dimensions " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result({m, n}, std::move(out), {pa, pb},
                     [pa, pb, m, k, n](Node& self) {
                       if (pa->requires_grad) {
                         gemm_nt_acc(self.grad.data(), pb->data.data(),
                                     pa->ensure_grad().data(), m, n, k);
                       }
                       if (pb->requires_grad) {
                         gemm_tn_acc(pa->data.data(), self.grad.data(),
                                     pb->ensure_grad().data(), m, k, n);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i * n + j);
  }
  auto pa = a.node_ptr();
  return make_result({n, m}, std::move(out), {pa}, [pa, m, n](Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor outer_product(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) {
    throw std::invalid_argument("outer_product: expected vectors");
  }
  const std::size_t n = a.size(), m = b.size();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = a.at(i) * b.at(j);
  }
  auto pa = a.node_ptr(), pb = b.node_ptr();
  return make_result({n, m}, std::move(out), {pa, pb},
                     [pa, pb, n, m](Node& self) {
                       if (pa->requires_grad) {
                         auto& g = pa->ensure_grad();
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) {
                             g[i] += self.grad[i * m + j] * pb->data[j];
                           }
                         }
                       }
                       if (pb->requires_grad) {
                         auto& g = pb->ensure_grad();
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) {
                             g[j] += self.grad[i * m + j] * pa->data[i];
                           }
                         }
                       }
                     });
}

Tensor add_bias(const Tensor& matrix, const Tensor& row) {
  require_rank2(matrix, "add_bias");
  const std::size_t m = matrix.rows(), n = matrix.cols();
  if (row.rank() != 1 || row.size() != n) {
    throw std::invalid_argument("add_bias: bias of shape " +
                                shape_str(row.shape()) + " for matrix " +
                                shape_str(matrix.shape()));
  }
  std::vector<double> out(matrix.data().begin(), matrix.data().end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += row.at(j);
  }
  auto pm = matrix.node_ptr(), pr = row.node_ptr();
  return make_result({m, n}, std::move(out), {pm, pr},
                     [pm, pr, m, n](Node& self) {
                       if (pm->requires_grad) {
                         auto& g = pm->ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i];
                         }
                       }
                       if (pr->requires_grad) {
                         auto& g = pr->ensure_grad();
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) {
                             g[j] += self.grad[i * n + j];
                           }
                         }
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(p, "concat");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if ((axis == 0 ? p.cols() : p.rows()) != fixed) {
      throw std::invalid_argument("concat: incompatible shapes");
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t out_rows = axis == 0 ? total : fixed;
  const std::size_t out_cols = axis == 0 ? fixed : total;
  std::vector<double> out(out_rows * out_cols);
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    nodes.push_back(p.node_ptr());
    offsets.push_back(offset);
    const std::size_t r = p.rows(), c = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t oi = axis == 0 ? offset + i : i;
        const std::size_t oj = axis == 0 ? j : offset + j;
        out[oi * out_cols + oj] = p.at(i * c + j);
      }
    }
    offset += axis == 0 ? r : c;
  }
  auto inputs = nodes;
  return make_result(
      {out_rows, out_cols}, std::move(out), std::move(inputs),
      [nodes, offsets, axis, out_cols](Node& self) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          Node& p = *nodes[k];
          if (!p.requires_grad) continue;
          auto& g = p.ensure_grad();
          const std::size_t r = p.shape[0], c = p.shape[1];
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t oi = axis == 0 ? offsets[k] + i : i;
              const std::size_t oj = axis == 0 ? j : offsets[k] + j;
              g[i * c + j] += self.grad[oi * out_cols + oj];
            }
          }
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  require_rank2(a, "slice");
  if (axis > 1) throw std::invalid_argument("slice: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if (begin >= end || end > extent) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") out of bounds for " +
                                shape_str(a.shape()));
  }
  const std::size_t out_r = axis == 0 ? end - begin : r;
  const std::size_t out_c = axis == 0 ? c : end - begin;
  std::vector<double> out(out_r * out_c);
  for (std::size_t i = 0; i < out_r; ++i) {
    for (std::size_t j = 0; j < out_c; ++j) {
      const std::size_t si = axis == 0 ? begin + i : i;
      const std::size_t sj = axis == 0 ? j : begin + j;
      out[i * out_c + j] = a.at(si * c + sj);
    }
  }
  auto pa = a.node_ptr();
  return make_result({out_r, out_c}, std::move(out), {pa},
                     [pa, axis, begin, c, out_r, out_c](Node& self) {
                       auto& g = pa->ensure_grad();
                       for (std::size_t i = 0; i < out_r; ++i) {
                         for (std::size_t j = 0; j < out_c; ++j) {
                           const std::size_t si = axis == 0 ? begin + i : i;
                           const std::size_t sj = axis == 0 ? j : begin + j;
                           g[si * c + sj] += self.grad[i * out_c + j];
                         }
                       }
                     });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }

  for (Node* node : order) {
    if (node->is_leaf()) {
      for (double g : node->grad) {
        if (!std::isfinite(g)) {
          throw NumericError("backward: non-finite gradient at a leaf");
        }
      }
    } else {
      node->backward_fn = nullptr;
      node->parents.clear();
      if (node != root) node->grad.clear();
    }
  }
}

namespace {

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step, double tol,
                           double floor) {
  Tensor leaf = Tensor::from(x.shape(),
                             std::vector<double>(x.data().begin(), x.data().end()),
                             true);
  std::vector<Tensor> params{leaf};
  return grad_check_params([&] { return f(leaf); }, params, step, tol, floor);
}

GradCheckReport grad_check_params(const std::function<Tensor()>& f,
                                  std::span<Tensor> params, double step,
                                  double tol, double floor) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = f();
  backward(loss);

  GradCheckReport report;
  report.passed = true;
  std::size_t flat = 0;
  NoGradGuard no_grad;
  for (auto& p : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) {
      std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    }
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = f().item();
      values[i] = saved - step;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = rel_error(analytic[i], numeric, floor);
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = err;
        report.worst_index = flat;
        report.analytic_at_worst = analytic[i];
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < tol;
  return report;
}

}  // namespace pvae::ad
