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

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mmtsd/lora.hpp"
#include "mmtsd/nn.hpp"
#include "mmtsd/rng.hpp"
#include "mmtsd/tensor.hpp"
#include "testutil.hpp"

using namespace mmtsd;

namespace {

// FD pass over every trainable parameter in the store.  The 1e-4 floor
// absorbs central-difference roundoff (~1e-12) on parameters whose true
// gradient is exactly zero, e.g. key-projection biases: softmax is
// shift-invariant per row, so a key bias cannot influence the output.
void fd_check_store(ParamStore& ps, const std::function<Tensor()>& make_loss,
                    double tol = 1e-6) {
  ps.zero_grads();
  backward(make_loss());
  for (auto& [name, p] : ps.all()) {
    if (!p.requires_grad()) continue;
    Mat analytic = p.grad();
    Mat numeric = testutil::numeric_grad(
        p.mutable_value(), [&] { return make_loss().scalar(); });
    INFO("parameter ", name);
    CHECK(testutil::max_rel_err(analytic, numeric, /*floor=*/1e-4) < tol);
  }
}

}  // namespace

TEST_CASE("ParamStore bookkeeping: add, lookup, trainability, checksums") {
  Rng rng(201);
  ParamStore ps;
  ps.add("a/w", rng.normal_mat(2, 3));
  ps.add("a/b", rng.normal_mat(1, 3));
  ps.add("b/w", rng.normal_mat(2, 2));

  CHECK(ps.size() == 3);
  CHECK(ps.has("a/w"));
  CHECK_FALSE(ps.has("c"));
  CHECK_THROWS_AS(ps.add("a/w", Mat::Zero(1, 1)), ConfigError);
  CHECK_THROWS_AS(ps.at("nope"), LookupError);

  ps.set_trainable("a/", false);
  CHECK_FALSE(ps.at("a/w").requires_grad());
  CHECK_FALSE(ps.at("a/b").requires_grad());
  CHECK(ps.at("b/w").requires_grad());
  ps.set_trainable("", true);
  CHECK(ps.at("a/w").requires_grad());

  const std::uint64_t full = ps.checksum();
  const std::uint64_t a_only = ps.checksum("a/");
  CHECK(full == ps.checksum());        // stable
  CHECK(a_only == ps.checksum("a/"));  // stable under prefix
  CHECK(full != a_only);

  ps.at("b/w").mutable_value()(0, 0) += 1.0;
  CHECK(full != ps.checksum());          // value change is detected
  CHECK(a_only == ps.checksum("a/"));    // untouched prefix unchanged
}

TEST_CASE("linear layer computes x W^T + b and backpropagates") {
  Rng rng(202);
  ParamStore ps;
  nn::init_linear(ps, "fc", 4, 3, rng);
  Tensor x = Tensor::param(rng.normal_mat(5, 4));

  Tensor y = nn::linear(ps, "fc", x);
  Mat expect = x.value() * ps.at("fc/w").value().transpose();
  expect.rowwise() += Eigen::RowVectorXd(ps.at("fc/b").value().row(0));
  CHECK((y.value() - expect).cwiseAbs().maxCoeff() < 1e-14);

  Tensor w = Tensor::constant(rng.normal_mat(5, 3));
  fd_check_store(ps, [&] { return mean_all(hadamard(nn::linear(ps, "fc", x), w)); });

  ParamStore nobias;
  nn::init_linear(nobias, "fc", 4, 3, rng, /*bias=*/false);
  CHECK_FALSE(nobias.has("fc/b"));
  CHECK(nn::linear(nobias, "fc", x).cols() == 3);
}

TEST_CASE("multi-head attention: oracle for one head, FD for parameters") {
  Rng rng(203);
  const int n = 4, d = 6;
  ParamStore ps;
  nn::init_mha(ps, "attn", d, rng);
  Tensor x = Tensor::param(rng.normal_mat(n, d));

  nn::AttnOpts opts;
  opts.heads = 1;
  Tensor out = nn::mha(ps, "attn", x, x, opts);
  CHECK(out.rows() == n);
  CHECK(out.cols() == d);

  // single-head oracle computed with plain Eigen
  auto lin = [&](const std::string& p, const Mat& in) {
    Mat y = in * ps.at(p + "/w").value().transpose();
    y.rowwise() += Eigen::RowVectorXd(ps.at(p + "/b").value().row(0));
    return y;
  };
  Mat q = lin("attn/wq", x.value());
  Mat k = lin("attn/wk", x.value());
  Mat v = lin("attn/wv", x.value());
  Mat scores = q * k.transpose() / std::sqrt(static_cast<double>(d));
  Mat probs(n, n);
  for (int r = 0; r < n; ++r) {
    Eigen::RowVectorXd e =
        (scores.row(r).array() - scores.row(r).maxCoeff()).exp();
    probs.row(r) = e / e.sum();
  }
  Mat expect = lin("attn/wo", probs * v);
  CHECK((out.value() - expect).cwiseAbs().maxCoeff() < 1e-12);

  nn::AttnOpts multi;
  multi.heads = 2;
  Tensor w = Tensor::constant(rng.normal_mat(n, d));
  fd_check_store(ps, [&] {
    return mean_all(hadamard(nn::mha(ps, "attn", x, x, multi), w));
  });

  nn::AttnOpts bad;
  bad.heads = 4;  // 4 does not divide 6
  CHECK_THROWS_AS(nn::mha(ps, "attn", x, x, bad), ConfigError);

  nn::AttnOpts drop;
  drop.heads = 2;
  drop.dropout = 0.5;  // no rng supplied
  CHECK_THROWS_AS(nn::mha(ps, "attn", x, x, drop), ConfigError);
}

TEST_CASE("masked self-attention keeps singleton rows bitwise independent") {
  const double ninf = -std::numeric_limits<double>::infinity();
  Rng rng(204);
  const int p = 4, d = 8;
  ParamStore ps;
  nn::init_mha(ps, "attn", d, rng);

  // groups [1, 2, 1]: rows 0 and 3 are singletons
  Mat mask = Mat::Constant(p, p, ninf);
  mask(0, 0) = 0.0;
  mask.block(1, 1, 2, 2).setZero();
  mask(3, 3) = 0.0;

  Mat base = rng.normal_mat(p, d);
  Mat altered = base;
  altered.row(1) = rng.normal_mat(1, d);
  altered.row(2) = rng.normal_mat(1, d);

  nn::AttnOpts opts;
  opts.heads = 2;
  opts.mask = &mask;
  Mat out1 = nn::mha(ps, "attn", Tensor::constant(base),
                     Tensor::constant(base), opts).value();
  Mat out2 = nn::mha(ps, "attn", Tensor::constant(altered),
                     Tensor::constant(altered), opts).value();

  // bitwise equality on the untouched singleton row 0
  for (int j = 0; j < d; ++j) CHECK(out1(0, j) == out2(0, j));
  // the 2-block rows see the replacement
  CHECK((out1.row(1) - out2.row(1)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("encoder and decoder layers: shapes, FD gradients") {
  Rng rng(205);
  const int t = 5, p = 3, d = 8, ff = 16;
  ParamStore ps;
  nn::init_encoder_layer(ps, "enc", d, ff, rng);
  nn::init_decoder_layer(ps, "dec", d, ff, rng);

  Tensor frames = Tensor::param(rng.normal_mat(t, d));
  Tensor prompts = Tensor::param(rng.normal_mat(p, d));

  nn::AttnOpts opts;
  opts.heads = 2;
  Tensor enc = nn::encoder_layer(ps, "enc", frames, opts);
  CHECK(enc.rows() == t);
  CHECK(enc.cols() == d);

  Mat mask = Mat::Zero(p, p);  // all-allowed self-attention
  nn::AttnOpts self_opts;
  self_opts.heads = 2;
  self_opts.mask = &mask;
  Tensor dec = nn::decoder_layer(ps, "dec", prompts, enc, self_opts, opts);
  CHECK(dec.rows() == p);
  CHECK(dec.cols() == d);

  Tensor w = Tensor::constant(rng.normal_mat(p, d));
  fd_check_store(ps, [&] {
    Tensor e = nn::encoder_layer(ps, "enc", frames, opts);
    Tensor dd = nn::decoder_layer(ps, "dec", prompts, e, self_opts, opts);
    return mean_all(hadamard(dd, w));
  });
}

TEST_CASE("sinusoidal position table") {
  Mat pos = nn::sinusoidal_positions(4, 6);
  CHECK(pos.rows() == 4);
  CHECK(pos.cols() == 6);
  // position 0: sin(0)=0 on even columns, cos(0)=1 on odd columns
  for (int j = 0; j < 6; j += 2) CHECK(pos(0, j) == 0.0);
  for (int j = 1; j < 6; j += 2) CHECK(pos(0, j) == 1.0);
  CHECK(pos(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pos(1, 1) == doctest::Approx(std::cos(1.0)));
  CHECK(pos(2, 2) == doctest::Approx(std::sin(2.0 / std::pow(10000.0, 2.0 / 6.0))));
  CHECK(pos.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("lora: zero-init B makes the adapter an exact no-op") {
  Rng rng(206);
  ParamStore ps;
  nn::init_linear(ps, "fc", 6, 4, rng);
  LoraAdapter ad = make_lora(ps, "fc_lora", 6, 4, 2, 8.0, rng);
  CHECK(ad.B.value().cwiseAbs().maxCoeff() == 0.0);

  Tensor x = Tensor::constant(rng.normal_mat(3, 6));
  Mat plain = nn::linear(ps, "fc", x).value();
  Mat adapted = lora_linear_rows(ps, "fc", x, ad).value();
  for (Eigen::Index i = 0; i < plain.size(); ++i)
    CHECK(plain(i) == adapted(i));  // bitwise

  // column convention too
  Tensor xc = Tensor::constant(rng.normal_mat(6, 5));
  Tensor w = Tensor::constant(rng.normal_mat(4, 6));
  Mat basec = (w.value() * xc.value());
  Mat lorac = lora_forward(xc, w, ad).value();
  for (Eigen::Index i = 0; i < basec.size(); ++i) CHECK(basec(i) == lorac(i));
}

TEST_CASE("lora: alpha=0 scale law and dense-merge equivalence") {
  Rng rng(207);
  ParamStore ps;
  LoraAdapter ad = make_lora(ps, "l", 5, 4, 2, 8.0, rng);
  ad.B.mutable_value() = rng.normal_mat(4, 2);  // pretend it trained

  Tensor w = Tensor::constant(rng.normal_mat(4, 5));
  Tensor x = Tensor::constant(rng.normal_mat(5, 7));

  LoraAdapter zero_alpha = ad;
  zero_alpha.alpha = 0.0;
  Mat base = w.value() * x.value();
  Mat out0 = lora_forward(x, w, zero_alpha).value();
  CHECK((out0 - base).cwiseAbs().maxCoeff() == 0.0);

  // dense merge oracle: forward(merged) == lora_forward within 1e-6 relative
  Mat merged = lora_merge(w.value(), ad);
  Mat dense = merged * x.value();
  Mat low = lora_forward(x, w, ad).value();
  CHECK(testutil::max_rel_err(dense, low) < 1e-6);

  // merging twice adds exactly one more (alpha/r) B A term
  Mat twice = lora_merge(merged, ad);
  Mat delta = ad.scaling() * (ad.B.value() * ad.A.value());
  CHECK(((twice - merged) - delta).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(lora_forward(Tensor::constant(Mat::Zero(3, 3)), w, ad),
                  ConfigError);
  CHECK_THROWS_AS(make_lora(ps, "bad", 5, 4, 0, 8.0, rng), ConfigError);
}

TEST_CASE("lora parameters receive gradients through attention") {
  Rng rng(208);
  const int n = 3, d = 8;
  ParamStore base;
  nn::init_mha(base, "attn", d, rng);
  base.set_trainable("", false);  // frozen base

  ParamStore adapters;
  LoraAdapter lq = make_lora(adapters, "q", d, d, 2, 8.0, rng);
  LoraAdapter lv = make_lora(adapters, "v", d, d, 2, 8.0, rng);
  // nudge B off zero so A also gets signal
  lq.B.mutable_value() = 0.1 * rng.normal_mat(d, 2);
  lv.B.mutable_value() = 0.1 * rng.normal_mat(d, 2);

  Tensor x = Tensor::constant(rng.normal_mat(n, d));
  Tensor w = Tensor::constant(rng.normal_mat(n, d));
  nn::AttnOpts opts;
  opts.heads = 2;
  opts.lora_q = &lq;
  opts.lora_v = &lv;

  const std::uint64_t base_sum = base.checksum();
  fd_check_store(adapters, [&] {
    return mean_all(hadamard(nn::mha(base, "attn", x, x, opts), w));
  });
  CHECK(base.checksum() == base_sum);  // frozen base untouched

  // frozen base receives no gradient allocation at all
  backward(mean_all(hadamard(nn::mha(base, "attn", x, x, opts), w)));
  CHECK(base.at("attn/wq/w").grad().cwiseAbs().maxCoeff() == 0.0);
}
