// include/xpn/autograd.hpp

// Copyright 2026  The xpn Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef XPN_AUTOGRAD_HPP_
#define XPN_AUTOGRAD_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xpn/tensor.hpp"

namespace xpn {

// A learned tensor with its gradient accumulator. Parameters live outside any
// tape; a tape borrows them for one forward/backward pass.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the record
// list is topologically sorted by construction; backward walks it once in
// reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Record {
    std::string_view op;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    bool leaf = false;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor t);
  // Leaf that receives a gradient readable through grad().
  Var leaf(Tensor t);
  // Leaf bound to a parameter. Binding the same parameter twice returns the
  // same node so its contributions are summed.
  Var param(const Parameter& p);

  // Appends an op node. `fn` is dropped when no input needs a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const;
  const Tensor& value(Var v) const { return value(v.id); }
  bool requires_grad(std::size_t id) const { return records_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }

  // Gradient of node `v`, or nullptr if backward never reached it.
  const Tensor* grad(Var v) const;
  // Gradient accumulator for node `id`, zero-allocated on first use.
  Tensor& grad_slot(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 and propagates. Leaf gradients accumulate
  // across repeated calls; intermediate gradients are reset each call.
  void backward(Var loss);

  // Gradient held by the leaf bound to `p`, or nullptr when `p` was not used
  // or received no gradient.
  const Tensor* param_grad(const Parameter& p) const;
  // Adds the tape's gradients into Parameter::grad for each listed parameter.
  void accumulate_param_grads(std::span<Parameter* const> params) const;

  std::size_t size() const { return records_.size(); }
  const Record& record_at(std::size_t i) const { return records_[i]; }

 private:
  struct Node {
    Tensor value;
    const Parameter* param = nullptr;
    Tensor grad;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(std::string_view op, Tensor value, std::vector<std::size_t> inputs, bool requires_grad,
           bool leaf, BackwardFn fn, const Parameter* param);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<Record> records_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---- ops ------------------------------------------------------------------
// All ops take Vars from the same tape. Binary elementwise ops accept either
// equal shapes or a row vector (1 x d or d) broadcast onto an L x d left side.

Var matmul(Var a, Var b);     // A[m x k] B[k x n]
Var matmul_nt(Var a, Var b);  // A[m x k] B[n x k]^T
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var affine(Var a, double alpha, double beta);  // alpha * a + beta
Var relu(Var a);
Var sigmoid(Var a);

enum class Elementwise { kRelu, kSigmoid, kAdd, kMul, kSub, kScale };
// Dispatching form of the elementwise family; `b` is required for binary
// kinds and `c` is the factor for kScale.
Var elementwise(Elementwise kind, Var a, const Var* b = nullptr, double c = 1.0);

Var layer_norm(Var x, Var gamma, Var beta, double eps);

// Row-wise x / (sum(x) + eps) over column blocks (empty = whole row).
Var psi_row_normalize(Var m, double eps, std::span<const std::size_t> blocks = {});
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

// Multiplies by a constant tensor of the same shape (masking).
Var mul_const(Var a, const Tensor& c);

Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);

// out[i * times + k] = a[i]
Var repeat_interleave_rows(Var a, std::size_t times);
// out[l * rows + r] = a[r]
Var tile_rows(Var a, std::size_t times);
// out[t] = w[ids[t]]
Var gather_rows(Var w, std::span<const int> ids);
// out[t] = a[rows[t]][cols[t]] as a length-n vector.
Var pick(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols);

Var sum(Var a);  // scalar [1]

}  // namespace xpn

#endif  // XPN_AUTOGRAD_HPP_
