#include "mret/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mret {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  value.round_to_precision();
  if (!value.all_finite()) throw NumericsError("non-finite constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value, std::string param_id) {
  value.round_to_precision();
  if (!value.all_finite()) throw NumericsError("non-finite parameter " + param_id);
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, grad_enabled_, std::move(param_id)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  value.round_to_precision();
  if (!value.all_finite()) throw NumericsError("non-finite output in op " + std::string(op));
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw NumericsError("op " + node.op + " mixes values from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  node.requires_grad = node.requires_grad && grad_enabled_;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradMap Tape::backward(const Var& loss) {
  if (nodes_.empty()) throw NumericsError("backward on an empty tape");
  if (!loss.valid()) throw NumericsError("backward on an unrecorded loss");
  if (&loss.tape() != this) throw NumericsError("loss belongs to a different tape");
  if (loss.value().size() != 1)
    throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(loss.shape(), 1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads[i].empty() || !node.backward) continue;
    grads[i].round_to_precision();
    std::vector<Tensor*> input_grads(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      input_grads[k] = &grads[in];
    }
    node.backward(grads[i], input_grads);
  }

  GradMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (node.param_id.empty() || !node.requires_grad) continue;
    Tensor g = grads[i].empty() ? Tensor(node.value.shape(), 0.0) : grads[i];
    g.round_to_precision();
    auto [it, inserted] = out.emplace(node.param_id, g);
    if (!inserted) {
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return out;
}

namespace ops {

namespace {

void require_rank(const Var& a, std::size_t rank, std::string_view op) {
  if (a.value().rank() != rank)
    throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
}

void require_same_shape(const Var& a, const Var& b, std::string_view op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Row count / row length for ops acting on the last axis.
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t) {
  std::size_t cols = t.shape().back();
  return {t.size() / cols, cols};
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw ShapeError("matmul inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Tensor out(Shape{m, n}, 0.0);
  gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  Tape* tape = &a.tape();
  std::size_t ia = a.id(), ib = b.id();
  return tape->record("matmul", std::move(out), {a, b},
                      [tape, ia, ib, m, k, n](const Tensor& g, std::vector<Tensor*>& gi) {
                        const Tensor& av = tape->value(ia);
                        const Tensor& bv = tape->value(ib);
                        // dA = G * B^T ; dB = A^T * G
                        if (gi[0]) gemm_nt(g.data().data(), bv.data().data(), gi[0]->data().data(), m, n, k);
                        if (gi[1]) gemm_tn(av.data().data(), g.data().data(), gi[1]->data().data(), m, k, n);
                      });
}

Var matmul_bt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_bt");
  require_rank(b, 2, "matmul_bt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k)
    throw ShapeError("matmul_bt inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  Tensor out(Shape{m, n}, 0.0);
  gemm_nt(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  Tape* tape = &a.tape();
  std::size_t ia = a.id(), ib = b.id();
  return tape->record("matmul_bt", std::move(out), {a, b},
                      [tape, ia, ib, m, k, n](const Tensor& g, std::vector<Tensor*>& gi) {
                        const Tensor& av = tape->value(ia);
                        const Tensor& bv = tape->value(ib);
                        // C = A B^T: dA = G * B ; dB = G^T * A
                        if (gi[0]) gemm_nn(g.data().data(), bv.data().data(), gi[0]->data().data(), m, n, k);
                        if (gi[1]) gemm_tn(g.data().data(), av.data().data(), gi[1]->data().data(), m, n, k);
                      });
}

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return a.tape().record("add", std::move(out), {a, b},
                           [](const Tensor& g, std::vector<Tensor*>& gi) {
                             for (auto* t : gi)
                               if (t)
                                 for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
                           });
  }
  if (bv.rank() == 1 && bv.dim(0) == av.shape().back()) {
    auto [rows, cols] = rows_cols(av);
    Tensor out = av;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
    return a.tape().record("add", std::move(out), {a, b},
                           [rows, cols](const Tensor& g, std::vector<Tensor*>& gi) {
                             if (gi[0])
                               for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                             if (gi[1])
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < cols; ++c) (*gi[1])[c] += g[r * cols + c];
                           });
  }
  throw ShapeError("add shape mismatch " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b},
                         [](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (gi[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                           if (gi[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                         });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tape* tape = &a.tape();
  std::size_t ia = a.id(), ib = b.id();
  return tape->record("mul", std::move(out), {a, b},
                      [tape, ia, ib](const Tensor& g, std::vector<Tensor*>& gi) {
                        const Tensor& av = tape->value(ia);
                        const Tensor& bv = tape->value(ib);
                        if (gi[0])
                          for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
                        if (gi[1])
                          for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
                      });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.tape().record("scale", std::move(out), {a},
                         [s](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (gi[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += s * g[i];
                         });
}

Var gelu(const Var& a) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Tensor out = a.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  Tape* tape = &a.tape();
  std::size_t ia = a.id();
  return tape->record("gelu", std::move(out), {a},
                      [tape, ia, inv_sqrt2](const Tensor& g, std::vector<Tensor*>& gi) {
                        if (!gi[0]) return;
                        const Tensor& x = tape->value(ia);
                        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
                          double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
                          (*gi[0])[i] += g[i] * (cdf + x[i] * pdf);
                        }
                      });
}

Var softmax(const Var& a) {
  Tensor out = a.value();
  auto [rows, cols] = rows_cols(out);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  Tape* tape = &a.tape();
  // record() appends, so the output lands at the current end of the tape.
  const std::size_t iy = tape->size();
  return tape->record("softmax", std::move(out), {a},
                      [tape, iy, rows, cols](const Tensor& g, std::vector<Tensor*>& gi) {
                        if (!gi[0]) return;
                        const Tensor& y = tape->value(iy);
                        for (std::size_t r = 0; r < rows; ++r) {
                          double dot = 0.0;
                          for (std::size_t c = 0; c < cols; ++c)
                            dot += g[r * cols + c] * y[r * cols + c];
                          for (std::size_t c = 0; c < cols; ++c) {
                            std::size_t i = r * cols + c;
                            (*gi[0])[i] += y[i] * (g[i] - dot);
                          }
                        }
                      });
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta) {
  const Tensor& xv = x.value();
  auto [rows, cols] = rows_cols(xv);
  if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols})
    throw ShapeError("layernorm affine parameters must have shape [" + std::to_string(cols) +
                     "], got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape(), 0.0);
  // Normalized values and inverse std per row, kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(cols);
    double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      double h = (row[c] - mu) * is;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = gv[c] * h + bv[c];
    }
  }
  Tape* tape = &x.tape();
  std::size_t ig = gamma.id();
  return tape->record(
      "layernorm", std::move(out), {x, gamma, beta},
      [tape, ig, xhat, inv_std, rows, cols](const Tensor& g, std::vector<Tensor*>& gi) {
        const Tensor& gv = tape->value(ig);
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* h = xhat->data() + r * cols;
          const double* gr = g.data().data() + r * cols;
          if (gi[1])
            for (std::size_t c = 0; c < cols; ++c) (*gi[1])[c] += gr[c] * h[c];
          if (gi[2])
            for (std::size_t c = 0; c < cols; ++c) (*gi[2])[c] += gr[c];
          if (gi[0]) {
            double mean_g = 0.0, mean_gh = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              double gg = gr[c] * gv[c];
              mean_g += gg;
              mean_gh += gg * h[c];
            }
            mean_g /= n;
            mean_gh /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              double gg = gr[c] * gv[c];
              (*gi[0])[r * cols + c] += (*inv_std)[r] * (gg - mean_g - h[c] * mean_gh);
            }
          }
        }
      });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a},
                         [](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (gi[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                         });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const Tensor& av = a.value();
  Tensor out(Shape{n, m}, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape().record("transpose", std::move(out), {a},
                         [m, n](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (!gi[0]) return;
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) (*gi[0])[i * n + j] += g[j * m + i];
                         });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  if (axis > 1) throw ShapeError("concat axis must be 0 or 1");
  for (const auto& p : parts) require_rank(p, 2, "concat");
  const std::size_t other = 1 - axis;
  const std::size_t fixed = parts[0].shape()[other];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape()[other] != fixed)
      throw ShapeError("concat shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    extents.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Shape shape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  Tensor out(shape, 0.0);
  const std::size_t out_cols = shape[1];
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    const std::size_t rows = v.dim(0), cols = v.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        std::size_t orow = axis == 0 ? r + offset : r;
        std::size_t ocol = axis == 1 ? c + offset : c;
        out[orow * out_cols + ocol] = v[r * cols + c];
      }
    offset += extents[k];
  }
  return parts[0].tape().record(
      "concat", std::move(out), parts,
      [axis, extents, fixed, out_cols](const Tensor& g, std::vector<Tensor*>& gi) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < gi.size(); ++k) {
          const std::size_t rows = axis == 0 ? extents[k] : fixed;
          const std::size_t cols = axis == 1 ? extents[k] : fixed;
          if (gi[k]) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c) {
                std::size_t orow = axis == 0 ? r + offset : r;
                std::size_t ocol = axis == 1 ? c + offset : c;
                (*gi[k])[r * cols + c] += g[orow * out_cols + ocol];
              }
          }
          offset += extents[k];
        }
      });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice");
  if (axis > 1) throw ShapeError("slice axis must be 0 or 1");
  if (begin >= end || end > a.shape()[axis])
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(a.shape()) + " on axis " + std::to_string(axis));
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const std::size_t len = end - begin;
  Shape shape = axis == 0 ? Shape{len, cols} : Shape{rows, len};
  Tensor out(shape, 0.0);
  const Tensor& av = a.value();
  const std::size_t out_cols = shape[1];
  for (std::size_t r = 0; r < shape[0]; ++r)
    for (std::size_t c = 0; c < out_cols; ++c) {
      std::size_t sr = axis == 0 ? r + begin : r;
      std::size_t sc = axis == 1 ? c + begin : c;
      out[r * out_cols + c] = av[sr * cols + sc];
    }
  return a.tape().record("slice", std::move(out), {a},
                         [axis, begin, shape, cols, out_cols](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (!gi[0]) return;
                           for (std::size_t r = 0; r < shape[0]; ++r)
                             for (std::size_t c = 0; c < out_cols; ++c) {
                               std::size_t sr = axis == 0 ? r + begin : r;
                               std::size_t sc = axis == 1 ? c + begin : c;
                               (*gi[0])[sr * cols + sc] += g[r * out_cols + c];
                             }
                         });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a},
                         [](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (!gi[0]) return;
                           for (double& v : gi[0]->data()) v += g[0];
                         });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("mean", Tensor::scalar(s / n), {a},
                         [n](const Tensor& g, std::vector<Tensor*>& gi) {
                           if (!gi[0]) return;
                           for (double& v : gi[0]->data()) v += g[0] / n;
                         });
}

}  // namespace ops

Var forward_op(std::string_view name, const std::vector<Var>& inputs, const nlohmann::json& attrs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n)
      throw NumericsError("op " + std::string(name) + " expects " + std::to_string(n) +
                          " inputs, got " + std::to_string(inputs.size()));
  };
  if (name == "matmul") { arity(2); return ops::matmul(inputs[0], inputs[1]); }
  if (name == "matmul_bt") { arity(2); return ops::matmul_bt(inputs[0], inputs[1]); }
  if (name == "add") { arity(2); return ops::add(inputs[0], inputs[1]); }
  if (name == "sub") { arity(2); return ops::sub(inputs[0], inputs[1]); }
  if (name == "mul") { arity(2); return ops::mul(inputs[0], inputs[1]); }
  if (name == "scale") { arity(1); return ops::scale(inputs[0], attrs.at("factor").get<double>()); }
  if (name == "gelu") { arity(1); return ops::gelu(inputs[0]); }
  if (name == "softmax") { arity(1); return ops::softmax(inputs[0]); }
  if (name == "layernorm") { arity(3); return ops::layernorm(inputs[0], inputs[1], inputs[2]); }
  if (name == "reshape") { arity(1); return ops::reshape(inputs[0], attrs.at("shape").get<Shape>()); }
  if (name == "transpose") { arity(1); return ops::transpose(inputs[0]); }
  if (name == "concat") return ops::concat(inputs, attrs.value("axis", std::size_t{0}));
  if (name == "slice") {
    arity(1);
    return ops::slice(inputs[0], attrs.at("axis").get<std::size_t>(), attrs.at("begin").get<std::size_t>(),
                      attrs.at("end").get<std::size_t>());
  }
  if (name == "sum") { arity(1); return ops::sum(inputs[0]); }
  if (name == "mean") { arity(1); return ops::mean(inputs[0]); }
  throw NumericsError("unsupported op " + std::string(name));
}

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  if (precision() != Precision::f64) throw NumericsError("grad_check requires f64 precision");

  Tensor analytic;
  {
    Tape tape;
    Var xv = tape.parameter(x, "x");
    Var loss = f(tape, xv);
    analytic = tape.backward(loss).at("x");
  }

  auto eval = [&](const Tensor& at) {
    Tape tape(false);
    double v = f(tape, tape.constant(at)).value().item();
    if (!std::isfinite(v)) throw NumericsError("non-finite evaluation in grad_check");
    return v;
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = eval(probe);
    probe[i] = orig - eps;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace mret
