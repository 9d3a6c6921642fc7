#pragma once

// Differentiable operations over Graph nodes.
//
// Shapes are checked eagerly and reported with both operands. Forward
// kernels are written so that every output row depends only on the matching
// input rows, which makes a record's prediction independent of the batch it
// is evaluated in.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <unsupported/Eigen/SpecialFunctions>

#include "rct/graph.hpp"

namespace rct {

// Row offsets delimiting consecutive sequences in a stacked token matrix:
// sequence b occupies rows [offsets[b], offsets[b+1]).
using Segments = std::vector<Index>;

namespace detail {

inline void require(bool ok, const char* op, const std::string& a, const std::string& b) {
  if (!ok) throw ShapeError(std::string(op) + ": incompatible shapes " + a + " and " + b);
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require(a.cols() == b.rows(), "matmul", shape_string(a.value()), shape_string(b.value()));
  // Coefficient-wise product: each output row is accumulated in a fixed order
  // regardless of how many rows are stacked.
  Tensor<T> out = a.value().lazyProduct(b.value());
  return a.graph().record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Graph<T>& g, std::size_t self) {
    const Tensor<T>& d = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, d * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * d);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape_string(a.value()),
                  shape_string(b.value()));
  Tensor<T> out = a.value() + b.value();
  return a.graph().record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Graph<T>& g, std::size_t self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, g.grad(self));
  });
}

// a (n x m) + row (1 x m) broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row", shape_string(a.value()),
                  shape_string(row.value()));
  Tensor<T> out = a.value().rowwise() + row.value().row(0);
  return a.graph().record(std::move(out), {a, row}, [ia = a.id(), ir = row.id()](Graph<T>& g, std::size_t self) {
    g.accumulate(ia, g.grad(self));
    if (g.requires_grad(ir)) g.accumulate(ir, g.grad(self).colwise().sum());
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value() * factor;
  return a.graph().record(std::move(out), {a}, [ia = a.id(), factor](Graph<T>& g, std::size_t self) {
    g.accumulate(ia, g.grad(self) * factor);
  });
}

// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", shape_string(a.value()),
                  shape_string(b.value()));
  Tensor<T> out = a.value().cwiseProduct(b.value());
  return a.graph().record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Graph<T>& g, std::size_t self) {
    const Tensor<T>& d = g.grad(self);
    if (g.requires_grad(ia)) g.accumulate(ia, d.cwiseProduct(g.value(ib)));
    if (g.requires_grad(ib)) g.accumulate(ib, d.cwiseProduct(g.value(ia)));
  });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows", shape_string(parts.front().value()), shape_string(p.value()));
    rows += p.rows();
  }
  Tensor<T> out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(r);
    r += p.rows();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts.front().graph().record(std::move(out), inputs, [ids, offsets](Graph<T>& g, std::size_t self) {
    const Tensor<T>& d = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) g.accumulate(ids[k], d.middleRows(offsets[k], g.value(ids[k]).rows()));
    }
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols", shape_string(parts.front().value()), shape_string(p.value()));
    cols += p.cols();
  }
  Tensor<T> out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(c);
    c += p.cols();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts.front().graph().record(std::move(out), inputs, [ids, offsets](Graph<T>& g, std::size_t self) {
    const Tensor<T>& d = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) g.accumulate(ids[k], d.middleCols(offsets[k], g.value(ids[k]).cols()));
    }
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of bounds for " + shape_string(a.value()));
  }
  Tensor<T> out = a.value().middleRows(begin, count);
  return a.graph().record(std::move(out), {a}, [ia = a.id(), begin, count](Graph<T>& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    g.grad_buffer(ia).middleRows(begin, count) += g.grad(self);
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, Index begin, Index count) {
  if (begin < 0 || count <= 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of bounds for " + shape_string(a.value()));
  }
  Tensor<T> out = a.value().middleCols(begin, count);
  return a.graph().record(std::move(out), {a}, [ia = a.id(), begin, count](Graph<T>& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    g.grad_buffer(ia).middleCols(begin, count) += g.grad(self);
  });
}

// Row-major reinterpretation; element order is unchanged.
template <typename T>
Var<T> reshape(Var<T> a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.value()) + " as " + shape_string(rows, cols));
  }
  Tensor<T> out = Eigen::Map<const Tensor<T>>(a.value().data(), rows, cols);
  const Index r0 = a.rows(), c0 = a.cols();
  return a.graph().record(std::move(out), {a}, [ia = a.id(), r0, c0](Graph<T>& g, std::size_t self) {
    g.accumulate(ia, Eigen::Map<const Tensor<T>>(g.grad(self).data(), r0, c0));
  });
}

// axis 0 averages over rows (-> 1 x cols); axis 1 over columns (-> rows x 1).
template <typename T>
Var<T> mean(Var<T> a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("mean: axis must be 0 or 1");
  if (axis == 0) {
    const T inv = T(1) / static_cast<T>(a.rows());
    Tensor<T> out = a.value().colwise().sum() * inv;
    return a.graph().record(std::move(out), {a}, [ia = a.id(), inv](Graph<T>& g, std::size_t self) {
      const Index n = g.value(ia).rows();
      g.accumulate(ia, (g.grad(self) * inv).replicate(n, 1));
    });
  }
  const T inv = T(1) / static_cast<T>(a.cols());
  Tensor<T> out = a.value().rowwise().sum() * inv;
  return a.graph().record(std::move(out), {a}, [ia = a.id(), inv](Graph<T>& g, std::size_t self) {
    const Index n = g.value(ia).cols();
    g.accumulate(ia, (g.grad(self) * inv).replicate(1, n));
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Tensor<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph().record(std::move(out), {a}, [ia = a.id()](Graph<T>& g, std::size_t self) {
    const Tensor<T>& v = g.value(ia);
    g.accumulate(ia, Tensor<T>::Constant(v.rows(), v.cols(), g.grad(self)(0, 0)));
  });
}

// Max-subtracted softmax of each row (in place on the given block).
template <typename T, typename Block>
void softmax_rows_inplace(Block&& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Tensor<T> out = a.value();
  softmax_rows_inplace<T>(out);
  return a.graph().record(std::move(out), {a}, [ia = a.id()](Graph<T>& g, std::size_t self) {
    const Tensor<T>& y = g.value(self);
    const Tensor<T>& d = g.grad(self);
    Tensor<T> dx = y.cwiseProduct(d);
    for (Index i = 0; i < dx.rows(); ++i) {
      const T dot = dx.row(i).sum();
      dx.row(i) -= dot * y.row(i);
    }
    g.accumulate(ia, dx);
  });
}

// Per-row (x - mean) / sqrt(var + eps) * gain + bias with population variance.
template <typename T>
Var<T> layer_norm_rows(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  detail::require(gain.rows() == 1 && gain.cols() == x.cols(), "layer_norm", shape_string(x.value()),
                  shape_string(gain.value()));
  detail::require(bias.rows() == 1 && bias.cols() == x.cols(), "layer_norm", shape_string(x.value()),
                  shape_string(bias.value()));
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  const Tensor<T>& xv = x.value();
  const Index n = xv.cols();
  auto xhat = std::make_shared<Tensor<T>>(xv.rows(), n);
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(xv.rows()));
  Tensor<T> out(xv.rows(), n);
  const auto g_row = gain.value().row(0);
  const auto b_row = bias.value().row(0);
  for (Index i = 0; i < xv.rows(); ++i) {
    const T mu = xv.row(i).sum() / static_cast<T>(n);
    const T var = (xv.row(i).array() - mu).square().sum() / static_cast<T>(n);
    const T r = T(1) / std::sqrt(var + eps);
    (*rstd)[static_cast<std::size_t>(i)] = r;
    xhat->row(i) = (xv.row(i).array() - mu) * r;
    out.row(i) = xhat->row(i).cwiseProduct(g_row) + b_row;
  }
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [ix = x.id(), ig = gain.id(), ib = bias.id(), xhat, rstd](Graph<T>& g, std::size_t self) {
        const Tensor<T>& d = g.grad(self);
        if (g.requires_grad(ig)) g.accumulate(ig, d.cwiseProduct(*xhat).colwise().sum());
        if (g.requires_grad(ib)) g.accumulate(ib, d.colwise().sum());
        if (!g.requires_grad(ix)) return;
        const auto gr = g.value(ig).row(0);
        const Index n = d.cols();
        Tensor<T> dx(d.rows(), n);
        for (Index i = 0; i < d.rows(); ++i) {
          const auto dxhat = d.row(i).cwiseProduct(gr);
          const T m1 = dxhat.sum() / static_cast<T>(n);
          const T m2 = dxhat.cwiseProduct(xhat->row(i)).sum() / static_cast<T>(n);
          dx.row(i) = (*rstd)[static_cast<std::size_t>(i)] * (dxhat.array() - m1 - xhat->row(i).array() * m2).matrix();
        }
        g.accumulate(ix, dx);
      });
}

// Gaussian error linear unit, exact erf form: x * Phi(x).
template <typename T>
Var<T> gelu(Var<T> a) {
  auto cdf = std::make_shared<Tensor<T>>(
      (T(0.5) * (T(1) + (a.value().array() * T(M_SQRT1_2)).erf())).matrix());
  Tensor<T> out = a.value().cwiseProduct(*cdf);
  return a.graph().record(std::move(out), {a}, [ia = a.id(), cdf](Graph<T>& g, std::size_t self) {
    const auto x = g.value(ia).array();
    const T inv_sqrt_2pi = T(0.5 * M_2_SQRTPI * M_SQRT1_2);
    const Tensor<T> slope = (cdf->array() + x * (T(-0.5) * x.square()).exp() * inv_sqrt_2pi).matrix();
    g.accumulate(ia, g.grad(self).cwiseProduct(slope));
  });
}

// Mean of each segment's rows -> (segments x cols).
template <typename T>
Var<T> segment_mean(Var<T> a, const Segments& segments) {
  if (segments.size() < 2 || segments.front() != 0 || segments.back() != a.rows()) {
    throw ShapeError("segment_mean: segments do not cover " + shape_string(a.value()));
  }
  const Index b = static_cast<Index>(segments.size()) - 1;
  Tensor<T> out(b, a.cols());
  for (Index s = 0; s < b; ++s) {
    const Index len = segments[s + 1] - segments[s];
    if (len <= 0) throw ShapeError("segment_mean: empty segment " + std::to_string(s));
    out.row(s) = a.value().middleRows(segments[s], len).colwise().sum() / static_cast<T>(len);
  }
  return a.graph().record(std::move(out), {a}, [ia = a.id(), segments](Graph<T>& g, std::size_t self) {
    if (!g.requires_grad(ia)) return;
    Tensor<T>& dx = g.grad_buffer(ia);
    const Tensor<T>& d = g.grad(self);
    for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
      const Index len = segments[s + 1] - segments[s];
      const auto row = (d.row(static_cast<Index>(s)) / static_cast<T>(len)).eval();
      for (Index r = segments[s]; r < segments[s + 1]; ++r) dx.row(r) += row;
    }
  });
}

// Mean absolute error between an (n x 1) prediction column and constant
// targets. The subgradient of |x| at 0 is taken as 0.
template <typename T>
Var<T> l1_loss(Var<T> pred, const Tensor<T>& target) {
  detail::require(pred.rows() == target.rows() && pred.cols() == target.cols() && pred.rows() >= 1, "l1_loss",
                  shape_string(pred.value()), shape_string(target));
  const Index n = pred.value().size();
  Tensor<T> out(1, 1);
  out(0, 0) = (pred.value() - target).cwiseAbs().sum() / static_cast<T>(n);
  auto sign = std::make_shared<Tensor<T>>((pred.value() - target).unaryExpr([](T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
  }));
  return pred.graph().record(std::move(out), {pred}, [ip = pred.id(), sign, n](Graph<T>& g, std::size_t self) {
    g.accumulate(ip, *sign * (g.grad(self)(0, 0) / static_cast<T>(n)));
  });
}

// One term of a sparse row combination: out[out_row] += coef * sources[source][source_row].
template <typename T>
struct RowTerm {
  std::uint32_t out_row;
  std::uint32_t source;
  std::uint32_t source_row;
  T coef;
};

// Builds an (rows x cols) tensor whose rows are sparse linear combinations of
// rows of the source tensors. Embedding lookups, continuous embeddings and
// per-entry reductions are all expressed this way; gradients reach exactly the
// source rows that were referenced.
template <typename T>
Var<T> combine_rows(std::span<const Var<T>> sources, std::vector<RowTerm<T>> terms, Index rows, Index cols) {
  if (sources.empty()) throw ShapeError("combine_rows: no sources");
  Tensor<T> out = Tensor<T>::Zero(rows, cols);
  for (const auto& t : terms) {
    if (t.source >= sources.size()) throw ShapeError("combine_rows: source index out of range");
    const Tensor<T>& src = sources[t.source].value();
    if (src.cols() != cols || static_cast<Index>(t.source_row) >= src.rows() || static_cast<Index>(t.out_row) >= rows) {
      throw ShapeError("combine_rows: term references row " + std::to_string(t.source_row) + " of " +
                       shape_string(src) + " into " + shape_string(rows, cols));
    }
    out.row(t.out_row) += t.coef * src.row(t.source_row);
  }
  std::vector<Var<T>> inputs(sources.begin(), sources.end());
  std::vector<std::size_t> ids;
  for (const auto& s : sources) ids.push_back(s.id());
  auto shared_terms = std::make_shared<std::vector<RowTerm<T>>>(std::move(terms));
  return sources.front().graph().record(std::move(out), inputs, [ids, shared_terms](Graph<T>& g, std::size_t self) {
    const Tensor<T>& d = g.grad(self);
    for (const auto& t : *shared_terms) {
      const std::size_t id = ids[t.source];
      if (!g.requires_grad(id)) continue;
      g.grad_buffer(id).row(t.source_row) += t.coef * d.row(t.out_row);
    }
  });
}

// Inverted dropout; identity when rate is 0.
template <typename T>
Var<T> dropout(Var<T> a, T rate, std::mt19937_64& rng) {
  if (rate <= T(0)) return a;
  if (rate >= T(1)) throw std::invalid_argument("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T s = T(1) / (T(1) - rate);
  auto mask = std::make_shared<Tensor<T>>(a.rows(), a.cols());
  for (Index i = 0; i < mask->size(); ++i) mask->data()[i] = keep(rng) ? s : T(0);
  Tensor<T> out = a.value().cwiseProduct(*mask);
  return a.graph().record(std::move(out), {a}, [ia = a.id(), mask](Graph<T>& g, std::size_t self) {
    g.accumulate(ia, g.grad(self).cwiseProduct(*mask));
  });
}

// Row-stochastic attention matrices of one forward call, ordered
// [segment][head].
template <typename T>
struct AttentionProbs {
  Index heads = 0;
  std::vector<Tensor<T>> maps;
  const Tensor<T>& at(std::size_t segment, std::size_t head) const {
    return maps[segment * static_cast<std::size_t>(heads) + head];
  }
};

// Scaled dot-product self-attention within each segment, for `heads` column
// blocks of width d / heads:
//   a_ij = softmax_j(q_i . k_j / sqrt(d_head)),  o_i = sum_j a_ij v_j.
// q, k, v are (tokens x d); the result concatenates the heads' outputs.
template <typename T>
Var<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v, const Segments& segments, Index heads,
                            AttentionProbs<T>* capture = nullptr) {
  detail::require(q.rows() == k.rows() && q.cols() == k.cols(), "attention", shape_string(q.value()),
                  shape_string(k.value()));
  detail::require(q.rows() == v.rows() && q.cols() == v.cols(), "attention", shape_string(q.value()),
                  shape_string(v.value()));
  if (heads <= 0 || q.cols() % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  if (segments.size() < 2 || segments.front() != 0 || segments.back() != q.rows()) {
    throw ShapeError("attention: segments do not cover " + shape_string(q.value()));
  }
  const Index dh = q.cols() / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t nseg = segments.size() - 1;
  auto probs = std::make_shared<std::vector<Tensor<T>>>(nseg * static_cast<std::size_t>(heads));
  Tensor<T> out(q.rows(), q.cols());
  const Tensor<T>& qv = q.value();
  const Tensor<T>& kv = k.value();
  const Tensor<T>& vv = v.value();
  for (std::size_t s = 0; s < nseg; ++s) {
    const Index o = segments[s];
    const Index n = segments[s + 1] - o;
    if (n <= 0) throw ShapeError("attention: empty segment " + std::to_string(s));
    for (Index h = 0; h < heads; ++h) {
      Tensor<T>& p = (*probs)[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
      p = (qv.block(o, h * dh, n, dh).lazyProduct(kv.block(o, h * dh, n, dh).transpose())) * inv_sqrt;
      softmax_rows_inplace<T>(p);
      out.block(o, h * dh, n, dh) = p.lazyProduct(vv.block(o, h * dh, n, dh));
    }
  }
  if (capture != nullptr) {
    capture->heads = heads;
    capture->maps = *probs;
  }
  return q.graph().record(
      std::move(out), {q, k, v},
      [iq = q.id(), ik = k.id(), iv = v.id(), segments, heads, dh, inv_sqrt, probs](Graph<T>& g, std::size_t self) {
        const Tensor<T>& d = g.grad(self);
        const Tensor<T>& qv = g.value(iq);
        const Tensor<T>& kv = g.value(ik);
        const Tensor<T>& vv = g.value(iv);
        const bool gq = g.requires_grad(iq), gk = g.requires_grad(ik), gv = g.requires_grad(iv);
        Tensor<T>* dq = gq ? &g.grad_buffer(iq) : nullptr;
        Tensor<T>* dk = gk ? &g.grad_buffer(ik) : nullptr;
        Tensor<T>* dv = gv ? &g.grad_buffer(iv) : nullptr;
        for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
          const Index o = segments[s];
          const Index n = segments[s + 1] - o;
          for (Index h = 0; h < heads; ++h) {
            const Tensor<T>& p = (*probs)[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
            const auto dout = d.block(o, h * dh, n, dh);
            if (gv) dv->block(o, h * dh, n, dh) += p.transpose() * dout;
            if (!gq && !gk) continue;
            Tensor<T> dp = dout * vv.block(o, h * dh, n, dh).transpose();
            Tensor<T> ds = p.cwiseProduct(dp);
            for (Index i = 0; i < n; ++i) {
              const T dot = ds.row(i).sum();
              ds.row(i) -= dot * p.row(i);
            }
            ds *= inv_sqrt;
            if (gq) dq->block(o, h * dh, n, dh) += ds * kv.block(o, h * dh, n, dh);
            if (gk) dk->block(o, h * dh, n, dh) += ds.transpose() * qv.block(o, h * dh, n, dh);
          }
        }
      });
}

}  // namespace rct
