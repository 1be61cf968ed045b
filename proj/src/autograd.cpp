// src/autograd.cpp

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

#include "xpn/autograd.hpp"

#include <cmath>

#include "xpn/kernels.hpp"

namespace xpn {

const Tensor& Var::value() const { return tape->value(id); }

// ---- tape -------------------------------------------------------------------

Var Tape::push(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
               bool requires_grad, bool leaf, BackwardFn fn, const Parameter* param) {
  Node n;
  n.value = std::move(value);
  n.param = param;
  if (requires_grad && !leaf) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  records_.push_back(Record{op, std::move(inputs), requires_grad, leaf});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor t) { return push("constant", std::move(t), {}, false, true, {}, nullptr); }

Var Tape::leaf(Tensor t) { return push("leaf", std::move(t), {}, grad_enabled_, true, {}, nullptr); }

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Var v = push("param", Tensor{}, {}, grad_enabled_, true, {}, &p);
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(fn));
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  bool rg = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw Error("op '" + std::string(op) + "' mixes tapes");
    ids.push_back(v.id);
    rg = rg || records_[v.id].requires_grad;
  }
  return push(op, std::move(value), std::move(ids), rg && grad_enabled_, false, std::move(fn), nullptr);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? &n.grad : nullptr;
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  if (value(loss.id).size() != 1)
    throw DimensionError("backward: loss must be scalar, got " + shape_str(value(loss.id).shape()));
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!records_[i].leaf && nodes_[i].has_grad) {
      nodes_[i].has_grad = false;
      nodes_[i].grad = Tensor{};
    }
  }
  if (!records_[loss.id].requires_grad) return;
  grad_slot(loss.id)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

const Tensor* Tape::param_grad(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::accumulate_param_grads(std::span<Parameter* const> params) const {
  for (Parameter* p : params) {
    const Tensor* g = param_grad(*p);
    if (!g) continue;
    if (p->grad.size() != g->size()) p->grad = Tensor(p->value.shape());
    for (std::size_t i = 0; i < g->size(); ++i) p->grad[i] += (*g)[i];
  }
}

// ---- helpers ----------------------------------------------------------------

namespace {

enum class Bcast { kNone, kRow };

Bcast check_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::kNone;
  const bool b_row = (b.rank() == 1 || (b.rank() == 2 && b.rows() == 1));
  if (b_row && a.rank() >= 2 && b.cols() == a.cols()) return Bcast::kRow;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

void add_into(Tensor& dst, const Tensor& src, double c = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

}  // namespace

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw DimensionError("matmul: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  kernels::GemmDims d{A.rows(), A.cols(), B.cols()};
  Tensor C({d.m, d.n});
  kernels::gemm_nn(d, A.data(), B.data(), C.data());
  return a.tape->record("matmul", std::move(C), {a, b}, [a, b, d](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    if (t.requires_grad(a))  // dA = dC B^T
      kernels::gemm_nt({d.m, d.n, d.k}, dC.data(), t.value(b).data(), t.grad_slot(a.id).data(), true);
    if (t.requires_grad(b))  // dB = A^T dC
      kernels::gemm_tn({d.k, d.m, d.n}, t.value(a).data(), dC.data(), t.grad_slot(b.id).data(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.cols())
    throw DimensionError("matmul_nt: " + shape_str(A.shape()) + " x " + shape_str(B.shape()) + "^T");
  kernels::GemmDims d{A.rows(), A.cols(), B.rows()};
  Tensor C({d.m, d.n});
  kernels::gemm_nt(d, A.data(), B.data(), C.data());
  return a.tape->record("matmul_nt", std::move(C), {a, b}, [a, b, d](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    if (t.requires_grad(a))  // dA = dC B
      kernels::gemm_nn({d.m, d.n, d.k}, dC.data(), t.value(b).data(), t.grad_slot(a.id).data(), true);
    if (t.requires_grad(b))  // dB = dC^T A
      kernels::gemm_tn({d.n, d.m, d.k}, dC.data(), t.value(a).data(), t.grad_slot(b.id).data(), true);
  });
}

Var transpose(Var a) {
  return a.tape->record("transpose", a.value().transposed(), {a}, [a](Tape& t, std::size_t self) {
    add_into(t.grad_slot(a.id), t.grad(Var{&t, self})->transposed());
  });
}

// ---- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Bcast bc = check_binary("add", A, B);
  Tensor C = A;
  const std::size_t d = A.cols();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += bc == Bcast::kRow ? B[i % d] : B[i];
  return a.tape->record("add", std::move(C), {a, b}, [a, b, bc, d](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    if (t.requires_grad(a)) add_into(t.grad_slot(a.id), dC);
    if (t.requires_grad(b)) {
      Tensor& dB = t.grad_slot(b.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dB[bc == Bcast::kRow ? i % d : i] += dC[i];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Bcast bc = check_binary("sub", A, B);
  Tensor C = A;
  const std::size_t d = A.cols();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= bc == Bcast::kRow ? B[i % d] : B[i];
  return a.tape->record("sub", std::move(C), {a, b}, [a, b, bc, d](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    if (t.requires_grad(a)) add_into(t.grad_slot(a.id), dC);
    if (t.requires_grad(b)) {
      Tensor& dB = t.grad_slot(b.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dB[bc == Bcast::kRow ? i % d : i] -= dC[i];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Bcast bc = check_binary("mul", A, B);
  Tensor C = A;
  const std::size_t d = A.cols();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= bc == Bcast::kRow ? B[i % d] : B[i];
  return a.tape->record("mul", std::move(C), {a, b}, [a, b, bc, d](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& dA = t.grad_slot(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * (bc == Bcast::kRow ? B[i % d] : B[i]);
    }
    if (t.requires_grad(b)) {
      Tensor& dB = t.grad_slot(b.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dB[bc == Bcast::kRow ? i % d : i] += dC[i] * A[i];
    }
  });
}

Var affine(Var a, double alpha, double beta) {
  Tensor C = a.value();
  for (auto& v : C.data()) v = alpha * v + beta;
  return a.tape->record("affine", std::move(C), {a}, [a, alpha](Tape& t, std::size_t self) {
    add_into(t.grad_slot(a.id), *t.grad(Var{&t, self}), alpha);
  });
}

Var scale(Var a, double c) {
  Tensor C = a.value();
  for (auto& v : C.data()) v *= c;
  return a.tape->record("scale", std::move(C), {a}, [a, c](Tape& t, std::size_t self) {
    add_into(t.grad_slot(a.id), *t.grad(Var{&t, self}), c);
  });
}

Var relu(Var a) {
  Tensor C = a.value();
  for (auto& v : C.data()) v = v > 0.0 ? v : 0.0;
  return a.tape->record("relu", std::move(C), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    const Tensor& A = t.value(a);
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < dC.size(); ++i)
      if (A[i] > 0.0) dA[i] += dC[i];
  });
}

Var sigmoid(Var a) {
  Tensor C = a.value();
  for (auto& v : C.data()) v = 1.0 / (1.0 + std::exp(-v));
  return a.tape->record("sigmoid", std::move(C), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& dC = *t.grad(Var{&t, self});
    const Tensor& S = t.value(self);
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i] * S[i] * (1.0 - S[i]);
  });
}

Var elementwise(Elementwise kind, Var a, const Var* b, double c) {
  auto need_b = [&]() -> Var {
    if (!b) throw ConfigError("elementwise: binary kind requires a second operand");
    return *b;
  };
  switch (kind) {
    case Elementwise::kRelu: return relu(a);
    case Elementwise::kSigmoid: return sigmoid(a);
    case Elementwise::kAdd: return add(a, need_b());
    case Elementwise::kMul: return mul(a, need_b());
    case Elementwise::kSub: return sub(a, need_b());
    case Elementwise::kScale: return scale(a, c);
  }
  throw ConfigError("elementwise: unknown kind");
}

// ---- normalizations ---------------------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& X = x.value();
  const Tensor& G = gamma.value();
  const Tensor& B = beta.value();
  const std::size_t L = X.rows(), d = X.cols();
  if (d == 0 || G.size() != d || B.size() != d)
    throw DimensionError("layer_norm: input " + shape_str(X.shape()) + " gamma " +
                         shape_str(G.shape()) + " beta " + shape_str(B.shape()));
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  Tensor Y(X.shape());
  Tensor xhat(X.shape());
  std::vector<double> inv_std(L);
  for (std::size_t i = 0; i < L; ++i) {
    auto r = X.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat.at(i, j) = (r[j] - mean) * inv_std[i];
      Y.at(i, j) = G[j] * xhat.at(i, j) + B[j];
    }
  }
  return x.tape->record(
      "layer_norm", std::move(Y), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), L, d](Tape& t, std::size_t self) {
        const Tensor& dY = *t.grad(Var{&t, self});
        const Tensor& G = t.value(gamma);
        if (t.requires_grad(gamma)) {
          Tensor& dG = t.grad_slot(gamma.id);
          for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < d; ++j) dG[j] += dY.at(i, j) * xhat.at(i, j);
        }
        if (t.requires_grad(beta)) {
          Tensor& dB = t.grad_slot(beta.id);
          for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < d; ++j) dB[j] += dY.at(i, j);
        }
        if (t.requires_grad(x)) {
          Tensor& dX = t.grad_slot(x.id);
          std::vector<double> g(d);
          for (std::size_t i = 0; i < L; ++i) {
            double mg = 0.0, mgx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              g[j] = dY.at(i, j) * G[j];
              mg += g[j];
              mgx += g[j] * xhat.at(i, j);
            }
            mg /= static_cast<double>(d);
            mgx /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j)
              dX.at(i, j) += inv_std[i] * (g[j] - mg - xhat.at(i, j) * mgx);
          }
        }
      });
}

Var psi_row_normalize(Var m, double eps, std::span<const std::size_t> blocks) {
  if (!(eps > 0.0)) throw ConfigError("psi_row_normalize: eps must be positive");
  const Tensor& M = m.value();
  const std::size_t R = M.rows(), C = M.cols();
  std::vector<std::size_t> bl(blocks.begin(), blocks.end());
  std::size_t total = 0;
  for (auto w : bl) {
    if (w == 0) throw ConfigError("psi_row_normalize: zero-width block");
    total += w;
  }
  if (!bl.empty() && total != C)
    throw DimensionError("psi_row_normalize: blocks sum to " + std::to_string(total) + ", row has " +
                         std::to_string(C));
  if (bl.empty()) bl.push_back(C);
  Tensor out(M.shape());
  kernels::psi_rows(R, C, bl, eps, M.data(), out.data());
  return m.tape->record("psi", std::move(out), {m}, [m, eps, bl, R, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    const Tensor& M = t.value(m);
    const Tensor& O = t.value(self);
    Tensor& dM = t.grad_slot(m.id);
    for (std::size_t i = 0; i < R; ++i) {
      std::size_t off = i * C;
      for (auto w : bl) {
        double s = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          s += M[off + j];
          dot += dO[off + j] * O[off + j];
        }
        const double inv = 1.0 / (s + eps);
        for (std::size_t j = 0; j < w; ++j) dM[off + j] += (dO[off + j] - dot) * inv;
        off += w;
      }
    }
  });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  kernels::softmax_rows(A.rows(), A.cols(), A.data(), out.data());
  return a.tape->record("softmax", std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    const Tensor& O = t.value(self);
    Tensor& dA = t.grad_slot(a.id);
    const std::size_t R = O.rows(), C = O.cols();
    for (std::size_t i = 0; i < R; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < C; ++j) dot += dO.at(i, j) * O.at(i, j);
      for (std::size_t j = 0; j < C; ++j) dA.at(i, j) += O.at(i, j) * (dO.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t R = A.rows(), C = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < R; ++i) {
    auto r = A.row(i);
    double mx = r[0];
    for (double v : r) mx = v > mx ? v : mx;
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < C; ++j) out.at(i, j) = r[j] - lse;
  }
  return a.tape->record("log_softmax", std::move(out), {a}, [a, R, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    const Tensor& O = t.value(self);
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < R; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < C; ++j) s += dO.at(i, j);
      for (std::size_t j = 0; j < C; ++j) dA.at(i, j) += dO.at(i, j) - std::exp(O.at(i, j)) * s;
    }
  });
}

Var mul_const(Var a, const Tensor& c) {
  const Tensor& A = a.value();
  if (!A.same_shape(c))
    throw DimensionError("mul_const: " + shape_str(A.shape()) + " vs " + shape_str(c.shape()));
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return a.tape->record("mul_const", std::move(out), {a}, [a, c](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < dO.size(); ++i) dA[i] += dO[i] * c[i];
  });
}

// ---- reshaping --------------------------------------------------------------

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  const std::size_t C = A.cols();
  if (A.rank() != 2 || begin + count > A.rows() || count == 0)
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") of " + shape_str(A.shape()));
  Tensor out({count, C});
  std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(begin * C), count * C, out.data().begin());
  return a.tape->record("slice_rows", std::move(out), {a}, [a, begin, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < dO.size(); ++i) dA[begin * C + i] += dO[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  const std::size_t R = A.rows(), C = A.cols();
  if (A.rank() != 2 || begin + count > C || count == 0)
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") of " + shape_str(A.shape()));
  Tensor out({R, count});
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = A.at(i, begin + j);
  return a.tape->record("slice_cols", std::move(out), {a}, [a, begin, count, R, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < count; ++j) dA[i * C + begin + j] += dO[i * count + j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t R = parts.front().rows();
  std::size_t C = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.rows() != R) throw DimensionError("concat_cols: row mismatch");
    C += p.cols();
  }
  Tensor out({R, C});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < P.cols(); ++j) out.at(i, off + j) = P.at(i, j);
    off += P.cols();
  }
  return parts.front().tape->record("concat_cols", std::move(out), parts, [parts, R, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t w = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor& dP = t.grad_slot(p.id);
        for (std::size_t i = 0; i < R; ++i)
          for (std::size_t j = 0; j < w; ++j) dP[i * w + j] += dO[i * C + off + j];
      }
      off += w;
    }
  });
}

Var repeat_interleave_rows(Var a, std::size_t times) {
  const Tensor& A = a.value();
  const std::size_t R = A.rows(), C = A.cols();
  if (times == 0) throw DimensionError("repeat_interleave_rows: zero repeats");
  Tensor out({R * times, C});
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t k = 0; k < times; ++k)
      for (std::size_t j = 0; j < C; ++j) out.at(i * times + k, j) = A.at(i, j);
  return a.tape->record("repeat_interleave_rows", std::move(out), {a}, [a, times, R, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t k = 0; k < times; ++k)
        for (std::size_t j = 0; j < C; ++j) dA[i * C + j] += dO[(i * times + k) * C + j];
  });
}

Var tile_rows(Var a, std::size_t times) {
  const Tensor& A = a.value();
  const std::size_t R = A.rows(), C = A.cols();
  if (times == 0) throw DimensionError("tile_rows: zero repeats");
  Tensor out({R * times, C});
  for (std::size_t l = 0; l < times; ++l)
    std::copy(A.data().begin(), A.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(l * R * C));
  return a.tape->record("tile_rows", std::move(out), {a}, [a, times, R, C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t l = 0; l < times; ++l)
      for (std::size_t i = 0; i < R * C; ++i) dA[i] += dO[l * R * C + i];
  });
}

Var gather_rows(Var w, std::span<const int> ids) {
  const Tensor& W = w.value();
  const std::size_t V = W.rows(), C = W.cols();
  Tensor out({ids.size(), C});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= V)
      throw DimensionError("gather_rows: id " + std::to_string(ids[t]) + " outside [0, " +
                           std::to_string(V) + ")");
    auto src = W.row(static_cast<std::size_t>(ids[t]));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return w.tape->record("gather_rows", std::move(out), {w}, [w, idv = std::move(idv), C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dW = t.grad_slot(w.id);
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t j = 0; j < C; ++j) dW[static_cast<std::size_t>(idv[r]) * C + j] += dO[r * C + j];
  });
}

Var pick(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  const Tensor& A = a.value();
  if (rows.size() != cols.size() || rows.empty()) throw DimensionError("pick: index lists differ or empty");
  Tensor out({rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows() || cols[i] >= A.cols()) throw DimensionError("pick: index out of range");
    out[i] = A.at(rows[i], cols[i]);
  }
  std::vector<std::size_t> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
  const std::size_t C = A.cols();
  return a.tape->record("pick", std::move(out), {a}, [a, r = std::move(r), c = std::move(c), C](Tape& t, std::size_t self) {
    const Tensor& dO = *t.grad(Var{&t, self});
    Tensor& dA = t.grad_slot(a.id);
    for (std::size_t i = 0; i < r.size(); ++i) dA[r[i] * C + c[i]] += dO[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record("sum", Tensor({1}, s), {a}, [a](Tape& t, std::size_t self) {
    const double g = (*t.grad(Var{&t, self}))[0];
    Tensor& dA = t.grad_slot(a.id);
    for (auto& v : dA.data()) v += g;
  });
}

}  // namespace xpn
