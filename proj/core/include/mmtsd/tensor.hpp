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

#ifndef MMTSD_TENSOR_HPP
#define MMTSD_TENSOR_HPP

#include <functional>
#include <memory>
#include <vector>

#include "mmtsd/common.hpp"
#include "mmtsd/rng.hpp"

namespace mmtsd {

// Reverse-mode autodiff over Eigen double matrices. Graphs are built
// define-by-run; backward() walks the tape in reverse topological order.
// Single-threaded by contract, which keeps every run bit-reproducible.

namespace detail {

struct TensorNode {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (!grad_alloc) {
      grad = Mat::Zero(value.rows(), value.cols());
      grad_alloc = true;
    }
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  // Leaf without gradient tracking.
  static Tensor constant(Mat v);
  // Leaf with gradient tracking (a trainable parameter).
  static Tensor param(Mat v);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad();
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Runs reverse-mode accumulation from a 1x1 loss tensor.
void backward(const Tensor& loss);

// --- graph operations -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // broadcast 1xC over rows
Tensor add_const(const Tensor& a, const Mat& c);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor sigmoid(const Tensor& a);

// Row softmax with optional additive mask (0 = allowed, -inf = blocked).
Tensor softmax_rows(const Tensor& a);
Tensor softmax_rows_masked(const Tensor& a, const Mat& add_mask);

// Per-row layer normalization with 1xC gain/bias parameters.
Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      double eps = 1e-5);

Tensor concat_rows(const std::vector<Tensor>& parts);
// Row gather (embedding lookup); backward scatter-adds into the table rows.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor slice_rows(const Tensor& a, Eigen::Index r0, Eigen::Index n);
Tensor slice_cols(const Tensor& a, Eigen::Index c0, Eigen::Index n);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor mean_rows(const Tensor& a);  // 1xC column means
// 1xC per-column standard deviation (population). Exact zero for constant
// columns; backward uses a clamped denominator so the zero case stays finite.
Tensor std_rows(const Tensor& a);

Tensor mean_all(const Tensor& a);  // 1x1

// Inverted dropout; scales kept entries by 1/(1-rate). Train-mode only.
Tensor dropout(const Tensor& a, double rate, Rng& rng);

// mean over rows of the frame-averaged binary cross-entropy, with
// probabilities clamped to [eps, 1-eps].
Tensor bce_mean(const Tensor& probs, const Mat& targets, double eps = 1e-7);

// mean over rows of softmax cross-entropy against integer class labels.
Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels);

Tensor mse_mean(const Tensor& pred, const Mat& target);

}  // namespace mmtsd

#endif  // MMTSD_TENSOR_HPP
