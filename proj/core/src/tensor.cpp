// Copyright 2026  The mmtsd Authors
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

#include "mmtsd/tensor.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace mmtsd {

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor make_op(Mat value, std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents)
    if (p->requires_grad) any = true;
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return Tensor(node);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InputError(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor Tensor::constant(Mat v) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(v);
  return Tensor(node);
}

Tensor Tensor::param(Mat v) {
  auto node = std::make_shared<TensorNode>();
  node->value = std::move(v);
  node->requires_grad = true;
  return Tensor(node);
}

const Mat& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad_alloc = false;
  node_->grad.resize(0, 0);
}

double Tensor::scalar() const {
  if (rows() != 1 || cols() != 1) throw InputError("scalar(): tensor is not 1x1");
  return node_->value(0, 0);
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw InputError("backward: loss must be 1x1");
  auto root = loss.node();
  if (!root->requires_grad) return;

  // iterative post-order DFS; reverse of it is a valid topological order
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// --- ops ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw InputError("matmul: inner dimensions differ");
  Mat v = a.value() * b.value();
  return make_op(std::move(v), {a.node(), b.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    auto& B = *out.parents[1];
    if (A.requires_grad) {
      A.ensure_grad();
      A.grad.noalias() += out.grad * B.value.transpose();
    }
    if (B.requires_grad) {
      B.ensure_grad();
      B.grad.noalias() += A.value.transpose() * out.grad;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a.node(), b.node()}, [](TensorNode& out) {
    for (int i = 0; i < 2; ++i) {
      auto& P = *out.parents[i];
      if (P.requires_grad) {
        P.ensure_grad();
        P.grad += out.grad;
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a.node(), b.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    auto& B = *out.parents[1];
    if (A.requires_grad) {
      A.ensure_grad();
      A.grad += out.grad;
    }
    if (B.requires_grad) {
      B.ensure_grad();
      B.grad -= out.grad;
    }
  });
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw InputError("add_rowvec: bias must be 1 x cols");
  Mat v = a.value();
  v.rowwise() += Eigen::RowVectorXd(row.value().row(0));
  return make_op(std::move(v), {a.node(), row.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    auto& R = *out.parents[1];
    if (A.requires_grad) {
      A.ensure_grad();
      A.grad += out.grad;
    }
    if (R.requires_grad) {
      R.ensure_grad();
      R.grad += out.grad.colwise().sum();
    }
  });
}

Tensor add_const(const Tensor& a, const Mat& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols())
    throw InputError("add_const: shape mismatch");
  return make_op(a.value() + c, {a.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad += out.grad;
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_op(a.value() * s, {a.node()}, [s](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad += out.grad * s;
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a.node(), b.node()},
                 [](TensorNode& out) {
                   auto& A = *out.parents[0];
                   auto& B = *out.parents[1];
                   if (A.requires_grad) {
                     A.ensure_grad();
                     A.grad += out.grad.cwiseProduct(B.value);
                   }
                   if (B.requires_grad) {
                     B.ensure_grad();
                     B.grad += out.grad.cwiseProduct(A.value);
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  return make_op(a.value().transpose(), {a.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad += out.grad.transpose();
  });
}

Tensor relu(const Tensor& a) {
  return make_op(a.value().cwiseMax(0.0), {a.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad += out.grad.cwiseProduct(
        (A.value.array() > 0.0).cast<double>().matrix());
  });
}

Tensor gelu(const Tensor& a) {
  const Mat& x = a.value();
  Mat v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double xi = x(i);
    v(i) = 0.5 * xi * (1.0 + std::erf(xi * M_SQRT1_2));
  }
  return make_op(std::move(v), {a.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    const Mat& x = A.value;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double xi = x(i);
      double cdf = 0.5 * (1.0 + std::erf(xi * M_SQRT1_2));
      double pdf = std::exp(-0.5 * xi * xi) / std::sqrt(2.0 * M_PI);
      A.grad(i) += out.grad(i) * (cdf + xi * pdf);
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  const Mat& x = a.value();
  Mat v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double xi = x(i);
    v(i) = xi >= 0.0 ? 1.0 / (1.0 + std::exp(-xi))
                     : std::exp(xi) / (1.0 + std::exp(xi));
  }
  return make_op(std::move(v), {a.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad += out.grad.cwiseProduct(
        out.value.cwiseProduct(Mat::Ones(out.value.rows(), out.value.cols()) -
                               out.value));
  });
}

namespace {

Tensor softmax_impl(const Tensor& a, const Mat* add_mask) {
  const Mat& x = a.value();
  if (add_mask && (add_mask->rows() != x.rows() || add_mask->cols() != x.cols()))
    throw InputError("softmax: mask shape mismatch");
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = kNegInf;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (add_mask && (*add_mask)(r, c) == kNegInf) continue;
      mx = std::max(mx, x(r, c));
    }
    if (mx == kNegInf)
      throw InputError("softmax: row with no allowed entries");
    double sum = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double e = (add_mask && (*add_mask)(r, c) == kNegInf)
                     ? 0.0
                     : std::exp(x(r, c) - mx);
      y(r, c) = e;
      sum += e;
    }
    y.row(r) /= sum;
  }
  return make_op(std::move(y), {a.node()}, [](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    const Mat& y = out.value;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = out.grad.row(r).dot(y.row(r));
      A.grad.row(r) +=
          y.row(r).cwiseProduct(out.grad.row(r) -
                                Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
  });
}

}  // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_impl(a, nullptr); }

Tensor softmax_rows_masked(const Tensor& a, const Mat& add_mask) {
  return softmax_impl(a, &add_mask);
}

Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      double eps) {
  const Mat& v = x.value();
  const Eigen::Index n = v.rows(), c = v.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
    throw InputError("layernorm: gain/bias must be 1 x cols");
  Mat xhat(n, c);
  Vec w(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mu = v.row(r).mean();
    double var = (v.row(r).array() - mu).square().mean();
    w[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * w[r];
  }
  Mat y = xhat;
  y.array().rowwise() *= gain.value().row(0).array();
  y.rowwise() += Eigen::RowVectorXd(bias.value().row(0));
  return make_op(std::move(y), {x.node(), gain.node(), bias.node()},
                 [xhat = std::move(xhat), w = std::move(w)](TensorNode& out) {
                   auto& X = *out.parents[0];
                   auto& G = *out.parents[1];
                   auto& B = *out.parents[2];
                   const Eigen::Index c = out.value.cols();
                   if (G.requires_grad) {
                     G.ensure_grad();
                     G.grad += out.grad.cwiseProduct(xhat).colwise().sum();
                   }
                   if (B.requires_grad) {
                     B.ensure_grad();
                     B.grad += out.grad.colwise().sum();
                   }
                   if (X.requires_grad) {
                     X.ensure_grad();
                     for (Eigen::Index r = 0; r < out.value.rows(); ++r) {
                       Eigen::RowVectorXd dxhat =
                           out.grad.row(r).cwiseProduct(G.value.row(0));
                       double m1 = dxhat.mean();
                       double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                       X.grad.row(r) +=
                           w[r] * (dxhat.array() - m1 -
                                   xhat.row(r).array() * m2)
                                      .matrix();
                     }
                     (void)c;
                   }
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_rows: empty input");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw InputError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  std::vector<NodePtr> nodes;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    nodes.push_back(p.node());
  }
  return make_op(std::move(v), std::move(nodes), [](TensorNode& out) {
    Eigen::Index r = 0;
    for (auto& pp : out.parents) {
      if (pp->requires_grad) {
        pp->ensure_grad();
        pp->grad += out.grad.middleRows(r, pp->value.rows());
      }
      r += pp->value.rows();
    }
  });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  const Mat& t = table.value();
  Mat v(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows())
      throw InputError("gather_rows: row index out of range");
    v.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  return make_op(std::move(v), {table.node()}, [ids](TensorNode& out) {
    auto& T = *out.parents[0];
    T.ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      T.grad.row(ids[i]) += out.grad.row(static_cast<Eigen::Index>(i));
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index r0, Eigen::Index n) {
  if (r0 < 0 || n < 0 || r0 + n > a.rows())
    throw InputError("slice_rows: out of range");
  return make_op(a.value().middleRows(r0, n), {a.node()},
                 [r0, n](TensorNode& out) {
                   auto& A = *out.parents[0];
                   A.ensure_grad();
                   A.grad.middleRows(r0, n) += out.grad;
                 });
}

Tensor slice_cols(const Tensor& a, Eigen::Index c0, Eigen::Index n) {
  if (c0 < 0 || n < 0 || c0 + n > a.cols())
    throw InputError("slice_cols: out of range");
  return make_op(a.value().middleCols(c0, n), {a.node()},
                 [c0, n](TensorNode& out) {
                   auto& A = *out.parents[0];
                   A.ensure_grad();
                   A.grad.middleCols(c0, n) += out.grad;
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_cols: empty input");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw InputError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<NodePtr> nodes;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    nodes.push_back(p.node());
  }
  return make_op(std::move(v), std::move(nodes), [](TensorNode& out) {
    Eigen::Index c = 0;
    for (auto& pp : out.parents) {
      if (pp->requires_grad) {
        pp->ensure_grad();
        pp->grad += out.grad.middleCols(c, pp->value.cols());
      }
      c += pp->value.cols();
    }
  });
}

Tensor mean_rows(const Tensor& a) {
  const Eigen::Index n = a.rows();
  Mat v = a.value().colwise().mean();
  return make_op(std::move(v), {a.node()}, [n](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad += (out.grad / static_cast<double>(n)).replicate(n, 1);
  });
}

Tensor std_rows(const Tensor& a) {
  const Mat& x = a.value();
  const Eigen::Index n = x.rows(), c = x.cols();
  if (n < 1) throw InputError("std_rows: empty input");
  Mat dev(n, c);
  Mat s(1, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    double mn = x.col(j).minCoeff(), mx = x.col(j).maxCoeff();
    double mu = x.col(j).mean();
    dev.col(j) = x.col(j).array() - mu;
    s(0, j) = (mn == mx) ? 0.0 : std::sqrt(dev.col(j).squaredNorm() /
                                           static_cast<double>(n));
  }
  Mat value = s;  // copy before the lambda below moves `s`
  return make_op(std::move(value), {a.node()},
                 [dev = std::move(dev), s = std::move(s), n](TensorNode& out) {
                   auto& A = *out.parents[0];
                   A.ensure_grad();
                   for (Eigen::Index j = 0; j < out.value.cols(); ++j) {
                     double sj = s(0, j);
                     if (sj <= 1e-12) continue;  // flat point, subgradient 0
                     A.grad.col(j) +=
                         (out.grad(0, j) / (static_cast<double>(n) * sj)) *
                         dev.col(j);
                   }
                 });
}

Tensor mean_all(const Tensor& a) {
  const Eigen::Index n = a.rows() * a.cols();
  Mat v(1, 1);
  v(0, 0) = a.value().mean();
  return make_op(std::move(v), {a.node()}, [n](TensorNode& out) {
    auto& A = *out.parents[0];
    A.ensure_grad();
    A.grad.array() += out.grad(0, 0) / static_cast<double>(n);
  });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const double keep = 1.0 - rate;
  Mat mask(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      mask(r, c) = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  Mat value = a.value().cwiseProduct(mask);  // before the lambda moves `mask`
  return make_op(std::move(value), {a.node()},
                 [mask = std::move(mask)](TensorNode& out) {
                   auto& A = *out.parents[0];
                   A.ensure_grad();
                   A.grad += out.grad.cwiseProduct(mask);
                 });
}

Tensor bce_mean(const Tensor& probs, const Mat& targets, double eps) {
  const Mat& p = probs.value();
  if (p.rows() != targets.rows() || p.cols() != targets.cols())
    throw InputError("bce_mean: prediction/target length mismatch");
  const double n = static_cast<double>(p.rows() * p.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double pc = std::min(std::max(p(i), eps), 1.0 - eps);
    double y = targets(i);
    loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  Mat v(1, 1);
  v(0, 0) = loss / n;
  return make_op(std::move(v), {probs.node()},
                 [targets, eps, n](TensorNode& out) {
                   auto& P = *out.parents[0];
                   P.ensure_grad();
                   const Mat& p = P.value;
                   const double g = out.grad(0, 0) / n;
                   for (Eigen::Index i = 0; i < p.size(); ++i) {
                     if (p(i) < eps || p(i) > 1.0 - eps) continue;  // clamped flat
                     double y = targets(i);
                     P.grad(i) += g * (p(i) - y) / (p(i) * (1.0 - p(i)));
                   }
                 });
}

Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
  const Mat& x = logits.value();
  if (static_cast<std::size_t>(x.rows()) != labels.size())
    throw InputError("softmax_ce: label count mismatch");
  const Eigen::Index n = x.rows();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= x.cols()) throw InputError("softmax_ce: label out of range");
    double mx = x.row(r).maxCoeff();
    double lse = std::log((x.row(r).array() - mx).exp().sum()) + mx;
    loss += lse - x(r, y);
  }
  Mat v(1, 1);
  v(0, 0) = loss / static_cast<double>(n);
  return make_op(std::move(v), {logits.node()}, [labels, n](TensorNode& out) {
    auto& L = *out.parents[0];
    L.ensure_grad();
    const Mat& x = L.value;
    const double g = out.grad(0, 0) / static_cast<double>(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      double mx = x.row(r).maxCoeff();
      Eigen::RowVectorXd e = (x.row(r).array() - mx).exp();
      e /= e.sum();
      e(labels[static_cast<std::size_t>(r)]) -= 1.0;
      L.grad.row(r) += g * e;
    }
  });
}

Tensor mse_mean(const Tensor& pred, const Mat& target) {
  const Mat& p = pred.value();
  if (p.rows() != target.rows() || p.cols() != target.cols())
    throw InputError("mse_mean: shape mismatch");
  const double n = static_cast<double>(p.rows());
  Mat v(1, 1);
  v(0, 0) = (p - target).squaredNorm() / n;  // mean over rows of ||diff||^2
  return make_op(std::move(v), {pred.node()}, [target, n](TensorNode& out) {
    auto& P = *out.parents[0];
    P.ensure_grad();
    P.grad += (out.grad(0, 0) * 2.0 / n) * (P.value - target);
  });
}

}  // namespace mmtsd
