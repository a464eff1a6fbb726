// Copyright 2026 The Infomax3D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "infomax3d/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace infomax3d::ad {

// ---------------------------------------------------------------------------
// ParamStore

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.contains(name) || buffers_.contains(name)) {
    throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
  }
  Tensor grad(init.rows(), init.cols());
  auto [it, _] = params_.emplace(name, Parameter{std::move(init), std::move(grad)});
  return it->second;
}

Tensor& ParamStore::add_buffer(const std::string& name, Tensor init) {
  if (params_.contains(name) || buffers_.contains(name)) {
    throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
  }
  return buffers_.emplace(name, std::move(init)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  }
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::out_of_range("ParamStore: no parameter '" + name + "'");
  }
  return it->second;
}

Tensor& ParamStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) {
    throw std::out_of_range("ParamStore: no buffer '" + name + "'");
  }
  return it->second;
}

const Tensor& ParamStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) {
    throw std::out_of_range("ParamStore: no buffer '" + name + "'");
  }
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) {
    n += p.value.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) {
    p.grad.fill(0.0);
  }
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return {this, it->second};
  }
  nodes_.push_back(Node{p.value, {}, nullptr, true, &p});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape() != this) {
      throw std::invalid_argument("Tape::record: operand belongs to a different tape");
    }
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : nullptr, needs, nullptr});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) {
    return;
  }
  if (!g.same_shape(n.value)) {
    throw std::logic_error("Tape::accumulate: gradient shape " + g.shape_str() + " does not match value " +
                           n.value.shape_str());
  }
  if (n.grad.empty() && !g.empty()) {
    n.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    n.grad[i] += g[i];
  }
}

void Tape::backward(const Var& scalar_output) {
  if (consumed_) {
    throw std::logic_error("Tape::backward: tape already consumed; build a new tape for another pass");
  }
  if (scalar_output.tape() != this) {
    throw std::invalid_argument("Tape::backward: output belongs to a different tape");
  }
  const Node& out = nodes_[scalar_output.id()];
  if (out.value.size() != 1) {
    throw std::invalid_argument("Tape::backward: output must be a scalar, got " + out.value.shape_str());
  }
  consumed_ = true;
  if (!out.requires_grad) {
    return;
  }
  nodes_[scalar_output.id()].grad = Tensor(1, 1, 1.0);
  for (std::size_t i = scalar_output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) {
      continue;
    }
    if (n.backward) {
      n.backward(*this, n.grad);
    }
    if (n.sink != nullptr) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) {
        n.sink->grad[k] += n.grad[k];
      }
    }
  }
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) {
    // Node did not receive any gradient; materialise zeros lazily.
    auto& mutable_node = const_cast<Node&>(n);
    mutable_node.grad  = Tensor(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) {
    throw std::invalid_argument("op applied to an unbound Var");
  }
  return *a.tape();
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b, bool allow_row, bool allow_col) {
  if (a.same_shape(b)) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (allow_row && b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (allow_col && b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  shape_error(op, a, b);
}

double b_at(const Tensor& b, Broadcast kind, std::size_t r, std::size_t c) {
  switch (kind) {
    case Broadcast::kSame: return b(r, c);
    case Broadcast::kRow: return b(0, c);
    case Broadcast::kCol: return b(r, 0);
    case Broadcast::kScalar: return b[0];
  }
  return 0.0;
}

// Reduces a full-size gradient to the shape of a broadcast operand.
Tensor reduce_to(const Tensor& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame: return g;
    case Broadcast::kRow: {
      Tensor out(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out(0, c) += g(r, c);
      return out;
    }
    case Broadcast::kCol: {
      Tensor out(g.rows(), 1);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out(r, 0) += g(r, c);
      return out;
    }
    case Broadcast::kScalar: {
      double s = 0.0;
      for (double v : g.data()) s += v;
      return Tensor::scalar(s);
    }
  }
  return {};
}

template <typename Fn, typename Deriv>
Var unary(const Var& x, Fn fn, Deriv deriv) {
  Tape&         t  = tape_of(x);
  const Tensor& xv = x.value();
  Tensor        out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = fn(xv[i]);
  }
  const Var parents[] = {x};
  return t.record(std::move(out), parents, [x, deriv](Tape& tape, const Tensor& g) {
    const Tensor& xv2 = x.value();
    Tensor        dx(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] = g[i] * deriv(xv2[i]);
    }
    tape.accumulate(x, dx);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double stable_softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

kernels::Segments whole(std::size_t rows) {
  const std::size_t bounds[] = {0, rows};
  return kernels::Segments::contiguous(bounds);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  if (a.cols() != b.rows()) {
    shape_error("matmul", a.value(), b.value());
  }
  const Var parents[] = {a, b};
  return t.record(kernels::matmul(a.value(), b.value()), parents, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, kernels::matmul_nt(g, b.value()));
    if (tape.requires_grad(b)) tape.accumulate(b, kernels::matmul_tn(a.value(), g));
  });
}

namespace {

Var add_sub(const Var& a, const Var& b, double sign, const char* op) {
  Tape&         t    = tape_of(a);
  const Tensor& av   = a.value();
  const Tensor& bv   = b.value();
  const auto    kind = classify(op, av, bv, true, false);
  Tensor        out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) + sign * b_at(bv, kind, r, c);
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b, kind, sign](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    if (tape.requires_grad(b)) {
      Tensor gb = reduce_to(g, kind);
      if (sign != 1.0) {
        for (auto& v : gb.data()) v *= sign;
      }
      tape.accumulate(b, gb);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_sub(a, b, 1.0, "add"); }
Var sub(const Var& a, const Var& b) { return add_sub(a, b, -1.0, "sub"); }

Var mul(const Var& a, const Var& b) {
  Tape&         t    = tape_of(a);
  const Tensor& av   = a.value();
  const Tensor& bv   = b.value();
  const auto    kind = classify("mul", av, bv, false, true);
  Tensor        out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) * b_at(bv, kind, r, c);
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b, kind](Tape& tape, const Tensor& g) {
    const Tensor& av2 = a.value();
    const Tensor& bv2 = b.value();
    if (tape.requires_grad(a)) {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) = g(r, c) * b_at(bv2, kind, r, c);
      tape.accumulate(a, ga);
    }
    if (tape.requires_grad(b)) {
      Tensor full(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) full[i] = g[i] * av2[i];
      tape.accumulate(b, reduce_to(full, kind));
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double) { return s; });
}

Var transpose(const Var& a) {
  Tape&     t         = tape_of(a);
  const Var parents[] = {a};
  return t.record(infomax3d::transpose(a.value()), parents,
                  [a](Tape& tape, const Tensor& g) { tape.accumulate(a, infomax3d::transpose(g)); });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(a);
  if (rows * cols != a.value().size()) {
    throw std::invalid_argument("reshape: cannot view " + a.value().shape_str() + " as [" + std::to_string(rows) + "x" +
                                std::to_string(cols) + "]");
  }
  const Tensor& v         = a.value();
  const Var     parents[] = {a};
  return t.record(Tensor(rows, cols, std::vector<double>(v.data().begin(), v.data().end())), parents,
                  [a](Tape& tape, const Tensor& g) {
                    tape.accumulate(a, Tensor(a.rows(), a.cols(), std::vector<double>(g.data().begin(), g.data().end())));
                  });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no operands");
  }
  Tape&               t = tape_of(parts.front());
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) {
      shape_error("concat_cols", parts.front().value(), p.value());
    }
    values.push_back(p.value());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(hconcat(values), parts, [ps](Tape& tape, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      const std::size_t w = p.cols();
      if (tape.requires_grad(p)) {
        Tensor gp(g.rows(), w);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) = g(r, off + c);
        tape.accumulate(p, gp);
      }
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_rows: no operands");
  }
  Tape&       t     = tape_of(parts.front());
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) {
      shape_error("concat_rows", parts.front().value(), p.value());
    }
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * parts.front().cols());
  for (const auto& p : parts) {
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(Tensor(total, parts.front().cols(), std::move(data)), parts, [ps](Tape& tape, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      const std::size_t n = p.value().size();
      if (tape.requires_grad(p)) {
        std::vector<double> chunk(g.data().begin() + static_cast<std::ptrdiff_t>(off),
                                  g.data().begin() + static_cast<std::ptrdiff_t>(off + n));
        tape.accumulate(p, Tensor(p.rows(), p.cols(), std::move(chunk)));
      }
      off += n;
    }
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> index) {
  Tape&                    t = tape_of(x);
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor                   out = kernels::gather_rows(x.value(), idx);
  const Var                parents[] = {x};
  return t.record(std::move(out), parents, [x, idx = std::move(idx)](Tape& tape, const Tensor& g) {
    const auto inverse = kernels::Segments::from_keys(idx, x.rows());
    tape.accumulate(x, kernels::scatter_add_rows(g, inverse, x.rows()));
  });
}

Var relu(const Var& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double v) {
    const double s = stable_sigmoid(v);
    return s * (1.0 - s);
  });
}

Var softplus(const Var& x) { return unary(x, stable_softplus, stable_sigmoid); }

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var reciprocal(const Var& x) {
  return unary(x, [](double v) { return 1.0 / v; }, [](double v) { return -1.0 / (v * v); });
}

Var sum_all(const Var& x) {
  Tape&  t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const Var parents[] = {x};
  return t.record(Tensor::scalar(s), parents, [x](Tape& tape, const Tensor& g) {
    tape.accumulate(x, Tensor(x.rows(), x.cols(), g[0]));
  });
}

Var mean_all(const Var& x) {
  const auto n = static_cast<double>(x.value().size());
  if (n == 0) {
    throw std::invalid_argument("mean_all: empty tensor");
  }
  return scale(sum_all(x), 1.0 / n);
}

Var row_sum(const Var& x) {
  Tape&         t  = tape_of(x);
  const Tensor& xv = x.value();
  Tensor        out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (double v : xv.row_span(r)) out(r, 0) += v;
  const Var parents[] = {x};
  return t.record(std::move(out), parents, [x](Tape& tape, const Tensor& g) {
    Tensor gx(x.rows(), x.cols());
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) = g(r, 0);
    tape.accumulate(x, gx);
  });
}

Var l2_norm_rows(const Var& x) {
  Tape&         t  = tape_of(x);
  const Tensor& xv = x.value();
  Tensor        out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row_span(r)) s += v * v;
    out(r, 0) = std::sqrt(s);
  }
  const Var parents[] = {x};
  Tensor    norms     = out;
  return t.record(std::move(out), parents, [x, norms = std::move(norms)](Tape& tape, const Tensor& g) {
    const Tensor& xv2 = x.value();
    Tensor        gx(xv2.rows(), xv2.cols());
    for (std::size_t r = 0; r < xv2.rows(); ++r) {
      if (norms(r, 0) == 0.0) continue;
      for (std::size_t c = 0; c < xv2.cols(); ++c) gx(r, c) = g(r, 0) * xv2(r, c) / norms(r, 0);
    }
    tape.accumulate(x, gx);
  });
}

Var normalize_rows(const Var& x) {
  Tape&         t  = tape_of(x);
  const Tensor& xv = x.value();
  Tensor        y(xv.rows(), xv.cols());
  Tensor        norms(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row_span(r)) s += v * v;
    const double n = std::sqrt(s);
    if (n == 0.0) {
      throw std::invalid_argument("normalize_rows: row " + std::to_string(r) +
                                  " is the zero vector; cosine similarity is undefined");
    }
    norms(r, 0) = n;
    for (std::size_t c = 0; c < xv.cols(); ++c) y(r, c) = xv(r, c) / n;
  }
  const Var parents[] = {x};
  Tensor    yv        = y;
  return t.record(std::move(y), parents, [x, yv = std::move(yv), norms = std::move(norms)](Tape& tape, const Tensor& g) {
    Tensor gx(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * yv(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, c) = (g(r, c) - yv(r, c) * dot) / norms(r, 0);
    }
    tape.accumulate(x, gx);
  });
}

Var segment_sum(const Var& x, const kernels::Segments& seg) {
  Tape&     t           = tape_of(x);
  const Var parents[]   = {x};
  return t.record(kernels::segment_sum(x.value(), seg), parents, [x, seg](Tape& tape, const Tensor& g) {
    Tensor gx(x.rows(), x.cols());
    for (std::size_t s = 0; s < seg.count(); ++s)
      for (std::size_t m : seg[s])
        for (std::size_t c = 0; c < gx.cols(); ++c) gx(m, c) += g(s, c);
    tape.accumulate(x, gx);
  });
}

Var segment_mean(const Var& x, const kernels::Segments& seg) {
  Tape&  t   = tape_of(x);
  Tensor out = kernels::segment_sum(x.value(), seg);
  for (std::size_t s = 0; s < seg.count(); ++s) {
    const auto len = static_cast<double>(seg.length(s));
    if (len == 0) continue;
    for (auto& v : out.row_span(s)) v /= len;
  }
  const Var parents[] = {x};
  return t.record(std::move(out), parents, [x, seg](Tape& tape, const Tensor& g) {
    Tensor gx(x.rows(), x.cols());
    for (std::size_t s = 0; s < seg.count(); ++s) {
      const auto len = static_cast<double>(seg.length(s));
      for (std::size_t m : seg[s])
        for (std::size_t c = 0; c < gx.cols(); ++c) gx(m, c) += g(s, c) / len;
    }
    tape.accumulate(x, gx);
  });
}

namespace {

Var segment_extreme(const Var& x, const kernels::Segments& seg, bool is_max) {
  Tape&                    t = tape_of(x);
  std::vector<std::size_t> arg;
  Tensor out = is_max ? kernels::segment_max(x.value(), seg, arg) : kernels::segment_min(x.value(), seg, arg);
  const Var parents[] = {x};
  return t.record(std::move(out), parents, [x, arg = std::move(arg)](Tape& tape, const Tensor& g) {
    Tensor gx(x.rows(), x.cols());
    for (std::size_t s = 0; s < g.rows(); ++s)
      for (std::size_t c = 0; c < g.cols(); ++c) {
        const std::size_t m = arg[s * g.cols() + c];
        if (m < gx.rows()) gx(m, c) += g(s, c);
      }
    tape.accumulate(x, gx);
  });
}

}  // namespace

Var segment_max(const Var& x, const kernels::Segments& seg) { return segment_extreme(x, seg, true); }
Var segment_min(const Var& x, const kernels::Segments& seg) { return segment_extreme(x, seg, false); }

Var segment_std(const Var& x, const kernels::Segments& seg, double eps) {
  Tape&         t  = tape_of(x);
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols();
  Tensor        out(seg.count(), cols);
  Tensor        mean(seg.count(), cols);
  Tensor        root(seg.count(), cols);
  const double  sqrt_eps = std::sqrt(eps);
  std::vector<double> scratch;
  for (std::size_t s = 0; s < seg.count(); ++s) {
    const auto members = seg[s];
    if (members.empty()) continue;
    const auto len = static_cast<double>(members.size());
    scratch.resize(members.size());
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t m = 0; m < members.size(); ++m) scratch[m] = xv(members[m], c);
      const double mu = kernels::order_independent_sum(scratch) / len;
      for (std::size_t m = 0; m < members.size(); ++m) {
        const double d = xv(members[m], c) - mu;
        scratch[m]     = d * d;
      }
      const double var = kernels::order_independent_sum(scratch) / len;
      mean(s, c)       = mu;
      root(s, c)       = std::sqrt(var + eps);
      out(s, c)        = root(s, c) - sqrt_eps;
    }
  }
  const Var parents[] = {x};
  return t.record(std::move(out), parents,
                  [x, seg, mean = std::move(mean), root = std::move(root)](Tape& tape, const Tensor& g) {
                    const Tensor& xv2 = x.value();
                    Tensor        gx(xv2.rows(), xv2.cols());
                    for (std::size_t s = 0; s < seg.count(); ++s) {
                      const auto len = static_cast<double>(seg.length(s));
                      for (std::size_t m : seg[s])
                        for (std::size_t c = 0; c < gx.cols(); ++c)
                          gx(m, c) += g(s, c) * (xv2(m, c) - mean(s, c)) / (len * root(s, c));
                    }
                    tape.accumulate(x, gx);
                  });
}

Var reduce_mean(const Var& x) { return segment_mean(x, whole(x.rows())); }
Var reduce_max(const Var& x) { return segment_max(x, whole(x.rows())); }
Var reduce_min(const Var& x) { return segment_min(x, whole(x.rows())); }
Var reduce_std(const Var& x) { return segment_std(x, whole(x.rows())); }

Var masked_logsumexp_rows(const Var& x, const Tensor& mask) {
  Tape&         t  = tape_of(x);
  const Tensor& xv = x.value();
  if (!xv.same_shape(mask)) {
    shape_error("masked_logsumexp_rows", xv, mask);
  }
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double m     = -std::numeric_limits<double>::infinity();
    bool   found = false;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      if (mask(r, c) != 0.0) {
        m     = std::max(m, xv(r, c));
        found = true;
      }
    }
    if (!found) {
      throw std::invalid_argument("masked_logsumexp_rows: row " + std::to_string(r) + " has an empty mask");
    }
    double s = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      if (mask(r, c) != 0.0) s += std::exp(xv(r, c) - m);
    }
    out(r, 0) = m + std::log(s);
  }
  const Var parents[] = {x};
  Tensor    lse       = out;
  return t.record(std::move(out), parents, [x, mask, lse = std::move(lse)](Tape& tape, const Tensor& g) {
    const Tensor& xv2 = x.value();
    Tensor        gx(xv2.rows(), xv2.cols());
    for (std::size_t r = 0; r < xv2.rows(); ++r)
      for (std::size_t c = 0; c < xv2.cols(); ++c)
        if (mask(r, c) != 0.0) gx(r, c) = g(r, 0) * std::exp(xv2(r, c) - lse(r, 0));
    tape.accumulate(x, gx);
  });
}

Var dropout(const Var& x, double p, Rng& rng, bool train) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!train || p == 0.0) {
    return x;
  }
  Tape&                                  t = tape_of(x);
  std::bernoulli_distribution            keep(1.0 - p);
  Tensor                                 m(x.rows(), x.cols());
  for (auto& v : m.data()) v = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, t.constant(std::move(m)));
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormState& state, bool train) {
  Tape&             t    = tape_of(x);
  const Tensor&     xv   = x.value();
  const std::size_t n    = xv.rows();
  const std::size_t cols = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || !gamma.value().same_shape(beta.value())) {
    shape_error("batch_norm", xv, gamma.value());
  }
  if (state.running_mean == nullptr || state.running_var == nullptr || state.running_mean->cols() != cols ||
      state.running_var->cols() != cols) {
    throw std::invalid_argument("batch_norm: running statistics missing or mis-shaped for " + xv.shape_str());
  }
  Tensor mean(1, cols);
  Tensor var(1, cols);
  if (train) {
    if (n == 0) {
      throw std::invalid_argument("batch_norm: empty batch in training mode");
    }
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cols; ++c) mean(0, c) += xv(r, c);
    for (std::size_t c = 0; c < cols; ++c) mean(0, c) /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = xv(r, c) - mean(0, c);
        var(0, c) += d * d;
      }
    for (std::size_t c = 0; c < cols; ++c) var(0, c) /= static_cast<double>(n);
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (std::size_t c = 0; c < cols; ++c) {
      (*state.running_mean)(0, c) = (1.0 - state.momentum) * (*state.running_mean)(0, c) + state.momentum * mean(0, c);
      (*state.running_var)(0, c) =
          (1.0 - state.momentum) * (*state.running_var)(0, c) + state.momentum * var(0, c) * unbias;
    }
  } else {
    mean = *state.running_mean;
    var  = *state.running_var;
  }

  Tensor inv_std(1, cols);
  for (std::size_t c = 0; c < cols; ++c) inv_std(0, c) = 1.0 / std::sqrt(var(0, c) + state.eps);
  Tensor xhat(n, cols);
  Tensor out(n, cols);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (xv(r, c) - mean(0, c)) * inv_std(0, c);
      out(r, c)  = gamma.value()(0, c) * xhat(r, c) + beta.value()(0, c);
    }

  const Var parents[] = {x, gamma, beta};
  return t.record(std::move(out), parents,
                  [x, gamma, beta, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape&         tape,
                                                                                               const Tensor& g) {
                    const std::size_t rows = g.rows();
                    const std::size_t cols = g.cols();
                    Tensor            gsum(1, cols);
                    Tensor            gxhat_sum(1, cols);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) {
                        gsum(0, c) += g(r, c);
                        gxhat_sum(0, c) += g(r, c) * xhat(r, c);
                      }
                    tape.accumulate(beta, gsum);
                    tape.accumulate(gamma, gxhat_sum);
                    if (!tape.requires_grad(x)) return;
                    const Tensor& gm = gamma.value();
                    Tensor        gx(rows, cols);
                    if (train) {
                      const auto nn = static_cast<double>(rows);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c)
                          gx(r, c) = gm(0, c) * inv_std(0, c) / nn *
                                     (nn * g(r, c) - gsum(0, c) - xhat(r, c) * gxhat_sum(0, c));
                    } else {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gx(r, c) = g(r, c) * gm(0, c) * inv_std(0, c);
                    }
                    tape.accumulate(x, gx);
                  });
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult check_gradients(const LossBuilder& f, ParamStore& params, const GradCheckOptions& opts) {
  params.zero_grad();
  double loss_scale = 1.0;
  {
    Tape tape;
    Var  loss  = f(tape, params);
    loss_scale = std::max(1.0, std::abs(loss.value().item()));
    tape.backward(loss);
  }

  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<Coord> all;
  for (const auto& [name, p] : params.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) all.push_back({name, i});
  }
  Rng rng(opts.seed);
  if (all.size() > opts.samples) {
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(opts.samples);
  }

  auto evaluate = [&]() {
    Tape tape;
    return f(tape, params).value().item();
  };

  GradCheckResult result;
  for (const auto& [name, index] : all) {
    Parameter&   p        = params.at(name);
    const double analytic = p.grad[index];
    const double saved    = p.value[index];
    p.value[index]        = saved + opts.h;
    const double fp       = evaluate();
    p.value[index]        = saved - opts.h;
    const double fm       = evaluate();
    p.value[index]        = saved;
    const double numeric  = (fp - fm) / (2.0 * opts.h);
    const double denom    = std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor * loss_scale});
    const double rel      = std::abs(analytic - numeric) / denom;
    if (result.checked == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param   = name + "[" + std::to_string(index) + "]";
    }
    ++result.checked;
  }
  return result;
}

}  // namespace infomax3d::ad
