#include "vlm/numerics/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>

namespace vlm {
namespace {

template <typename S>
std::string dims(const Mat<S>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <typename S>
void require_same_shape(const char* op, const Var<S>& a, const Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a.value()) + " vs " + dims(b.value()));
  }
}

template <typename S>
void require_row(const char* op, const Var<S>& row, Eigen::Index cols) {
  if (row.rows() != 1 || row.cols() != cols) {
    throw ShapeError(std::string(op) + ": expected 1x" + std::to_string(cols) + " row, got " + dims(row.value()));
  }
}

}  // namespace

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape("add", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape("sub", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

template <typename S>
Var<S> hadamard(const Var<S>& a, const Var<S>& b) {
  require_same_shape("hadamard", a, b);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  const auto ia = a.id();
  return a.tape().record(a.value() * factor, {a},
                         [ia, factor](Tape<S>& t, std::size_t self) { t.accumulate(ia, t.grad(self) * factor); });
}

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a.value()) + " * " + dims(b.value()));
  const auto ia = a.id(), ib = b.id();
  Mat<S> y = a.value() * b.value();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename S>
Var<S> matmul_transposed(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_transposed: " + dims(a.value()) + " * T(" + dims(b.value()) + ")");
  const auto ia = a.id(), ib = b.id();
  Mat<S> y = a.value() * b.value().transpose();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

template <typename S>
Var<S> transpose(const Var<S>& a) {
  const auto ia = a.id();
  Mat<S> y = a.value().transpose();
  return a.tape().record(std::move(y), {a},
                         [ia](Tape<S>& t, std::size_t self) { t.accumulate(ia, t.grad(self).transpose()); });
}

template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& row) {
  require_row("add_row", row, a.cols());
  const auto ia = a.id(), ir = row.id();
  Mat<S> y = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(y), {a, row}, [ia, ir](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

template <typename S>
Var<S> scale_rows(const Var<S>& a, std::span<const S> weights) {
  if (static_cast<Eigen::Index>(weights.size()) != a.rows()) {
    throw ShapeError("scale_rows: " + std::to_string(weights.size()) + " weights for " + dims(a.value()));
  }
  const auto ia = a.id();
  ColVec<S> w = Eigen::Map<const ColVec<S>>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  Mat<S> y = w.asDiagonal() * a.value();
  return a.tape().record(std::move(y), {a}, [ia, w](Tape<S>& t, std::size_t self) {
    t.accumulate(ia, w.asDiagonal() * t.grad(self));
  });
}

template <typename S>
Var<S> gelu(const Var<S>& a) {
  const auto ia = a.id();
  const S inv_sqrt2 = static_cast<S>(1.0 / std::numbers::sqrt2);
  Mat<S> y = a.value().unaryExpr([inv_sqrt2](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); });
  return a.tape().record(std::move(y), {a}, [ia, inv_sqrt2](Tape<S>& t, std::size_t self) {
    const S inv_sqrt_2pi = static_cast<S>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    Mat<S> d = t.value(ia).unaryExpr([&](S x) {
      const S cdf = S(0.5) * (S(1) + std::erf(x * inv_sqrt2));
      const S pdf = inv_sqrt_2pi * std::exp(S(-0.5) * x * x);
      return cdf + x * pdf;
    });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps) {
  const Eigen::Index n = x.rows(), m = x.cols();
  require_row("layer_norm gamma", gamma, m);
  require_row("layer_norm beta", beta, m);
  auto normalized = std::make_shared<Mat<S>>(n, m);
  auto inv_std = std::make_shared<ColVec<S>>(n);
  const Mat<S>& xv = x.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mean = xv.row(i).mean();
    const S var = (xv.row(i).array() - mean).square().mean();
    (*inv_std)(i) = S(1) / std::sqrt(var + eps);
    normalized->row(i) = (xv.row(i).array() - mean) * (*inv_std)(i);
  }
  Mat<S> y = (normalized->array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(std::move(y), {x, gamma, beta},
                         [ix, ig, ib, normalized, inv_std, m](Tape<S>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(*normalized).colwise().sum());
                           if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                           if (!t.requires_grad(ix)) return;
                           Mat<S> dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                           Mat<S> dx(dxhat.rows(), m);
                           for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                             const S mean_d = dxhat.row(i).mean();
                             const S mean_dx = dxhat.row(i).dot(normalized->row(i)) / static_cast<S>(m);
                             dx.row(i) = (*inv_std)(i) * (dxhat.row(i).array() - mean_d -
                                                          normalized->row(i).array() * mean_dx);
                           }
                           t.accumulate(ix, dx);
                         });
}

template <typename S>
Var<S> log_softmax_rows(const Var<S>& a) {
  const auto ia = a.id();
  const Mat<S>& av = a.value();
  Mat<S> y(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const S mx = av.row(i).maxCoeff();
    const S lse = mx + std::log((av.row(i).array() - mx).exp().sum());
    y.row(i) = av.row(i).array() - lse;
  }
  return a.tape().record(std::move(y), {a}, [ia](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const Mat<S> p = t.value(self).array().exp();
    Mat<S> da = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(ia, da);
  });
}

template <typename S>
Var<S> multi_head_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, std::span<const BoolMatrix> masks,
                            std::size_t heads, std::vector<Mat<S>>* probabilities) {
  require_same_shape("attention q/k", q, k);
  require_same_shape("attention q/v", q, v);
  const auto batch = static_cast<Eigen::Index>(masks.size());
  if (batch == 0 || q.rows() % batch != 0) throw ShapeError("attention: rows not divisible by batch size");
  const Eigen::Index len = q.rows() / batch;
  const Eigen::Index d = q.cols();
  const auto h_count = static_cast<Eigen::Index>(heads);
  if (h_count == 0 || d % h_count != 0) throw ShapeError("attention: width not divisible by heads");
  const Eigen::Index dk = d / h_count;
  const S scale_factor = S(1) / std::sqrt(static_cast<S>(dk));
  for (const auto& m : masks) {
    if (m.rows() != len || m.cols() != len) throw ShapeError("attention: mask is not seq_len x seq_len");
  }

  auto probs = std::make_shared<std::vector<Mat<S>>>();
  probs->reserve(static_cast<std::size_t>(batch * h_count));
  auto masks_copy = std::make_shared<std::vector<BoolMatrix>>(masks.begin(), masks.end());
  const Mat<S>& qv = q.value();
  const Mat<S>& kv = k.value();
  const Mat<S>& vv = v.value();
  Mat<S> out = Mat<S>::Zero(q.rows(), d);
  const S neg_inf = -std::numeric_limits<S>::infinity();

  for (Eigen::Index b = 0; b < batch; ++b) {
    const BoolMatrix& allow = (*masks_copy)[static_cast<std::size_t>(b)];
    for (Eigen::Index h = 0; h < h_count; ++h) {
      Mat<S> scores = qv.block(b * len, h * dk, len, dk) * kv.block(b * len, h * dk, len, dk).transpose();
      scores *= scale_factor;
      Mat<S> p = Mat<S>::Zero(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        S mx = neg_inf;
        for (Eigen::Index j = 0; j < len; ++j) {
          if (allow(i, j)) mx = std::max(mx, scores(i, j));
        }
        if (mx == neg_inf) continue;
        S total = 0;
        for (Eigen::Index j = 0; j < len; ++j) {
          if (allow(i, j)) {
            p(i, j) = std::exp(scores(i, j) - mx);
            total += p(i, j);
          }
        }
        p.row(i) /= total;
      }
      out.block(b * len, h * dk, len, dk).noalias() = p * vv.block(b * len, h * dk, len, dk);
      probs->push_back(std::move(p));
    }
  }
  if (probabilities != nullptr) *probabilities = *probs;

  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(
      std::move(out), {q, k, v},
      [iq, ik, iv, probs, batch, len, dk, h_count, scale_factor](Tape<S>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const Mat<S>& qv = t.value(iq);
        const Mat<S>& kv = t.value(ik);
        const Mat<S>& vv = t.value(iv);
        Mat<S> dq = Mat<S>::Zero(qv.rows(), qv.cols());
        Mat<S> dk_m = Mat<S>::Zero(qv.rows(), qv.cols());
        Mat<S> dv = Mat<S>::Zero(qv.rows(), qv.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
          for (Eigen::Index h = 0; h < h_count; ++h) {
            const Mat<S>& p = (*probs)[static_cast<std::size_t>(b * h_count + h)];
            const auto go = g.block(b * len, h * dk, len, dk);
            dv.block(b * len, h * dk, len, dk).noalias() = p.transpose() * go;
            const Mat<S> dp = go * vv.block(b * len, h * dk, len, dk).transpose();
            const ColVec<S> row_term = dp.cwiseProduct(p).rowwise().sum();
            const Mat<S> ds = p.cwiseProduct((dp.colwise() - row_term)) * scale_factor;
            dq.block(b * len, h * dk, len, dk).noalias() = ds * kv.block(b * len, h * dk, len, dk);
            dk_m.block(b * len, h * dk, len, dk).noalias() = ds.transpose() * qv.block(b * len, h * dk, len, dk);
          }
        }
        t.accumulate(iq, dq);
        t.accumulate(ik, dk_m);
        t.accumulate(iv, dv);
      });
}

template <typename S>
Var<S> gather_rows(const Var<S>& table, std::span<const Eigen::Index> rows) {
  const Mat<S>& tv = table.value();
  Mat<S> y(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " + dims(tv));
    }
    y.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  const auto it = table.id();
  const Eigen::Index table_rows = tv.rows();
  std::vector<Eigen::Index> index(rows.begin(), rows.end());
  return table.tape().record(std::move(y), {table}, [it, table_rows, index](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Mat<S> dt = Mat<S>::Zero(table_rows, g.cols());
    for (std::size_t i = 0; i < index.size(); ++i) dt.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(it, dt);
  });
}

template <typename S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw ShapeError("slice_rows: out of range on " + dims(a.value()));
  const auto ia = a.id();
  const Eigen::Index total = a.rows();
  Mat<S> y = a.value().middleRows(begin, count);
  return a.tape().record(std::move(y), {a}, [ia, begin, count, total](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Mat<S> da = Mat<S>::Zero(total, g.cols());
    da.middleRows(begin, count) = g;
    t.accumulate(ia, da);
  });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat<S> y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    y.middleRows(offset, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    offset += p.rows();
  }
  return parts.front().tape().record(std::move(y), parts, [spans](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Eigen::Index at = 0;
    for (const auto& [id, n] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(at, n));
      at += n;
    }
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat<S> y(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    y.middleCols(offset, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    offset += p.cols();
  }
  return parts.front().tape().record(std::move(y), parts, [spans](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Eigen::Index at = 0;
    for (const auto& [id, n] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(at, n));
      at += n;
    }
  });
}

template <typename S>
Var<S> pick(const Var<S>& a, std::span<const Eigen::Index> columns) {
  if (static_cast<Eigen::Index>(columns.size()) != a.rows()) throw ShapeError("pick: one column per row required");
  Mat<S> y(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Eigen::Index c = columns[static_cast<std::size_t>(i)];
    if (c < 0 || c >= a.cols()) throw ShapeError("pick: column " + std::to_string(c) + " outside " + dims(a.value()));
    y(i, 0) = a.value()(i, c);
  }
  const auto ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  std::vector<Eigen::Index> index(columns.begin(), columns.end());
  return a.tape().record(std::move(y), {a}, [ia, rows, cols, index](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    Mat<S> da = Mat<S>::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) da(i, index[static_cast<std::size_t>(i)]) = g(i, 0);
    t.accumulate(ia, da);
  });
}

template <typename S>
Var<S> row_dot(const Var<S>& a, const Var<S>& b) {
  require_same_shape("row_dot", a, b);
  const auto ia = a.id(), ib = b.id();
  Mat<S> y = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape<S>& t, std::size_t self) {
    const ColVec<S> g = t.grad(self).col(0);
    if (t.requires_grad(ia)) t.accumulate(ia, g.asDiagonal() * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, g.asDiagonal() * t.value(ia));
  });
}

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  const auto ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Mat<S> y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape().record(std::move(y), {a}, [ia, rows, cols](Tape<S>& t, std::size_t self) {
    t.accumulate(ia, Mat<S>::Constant(rows, cols, t.grad(self)(0, 0)));
  });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  if (a.value().size() == 0) throw ShapeError("mean_all: empty input");
  return scale(sum_all(a), S(1) / static_cast<S>(a.value().size()));
}

template <typename S>
Var<S> mean_rows(const Var<S>& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: empty input");
  const auto ia = a.id();
  const Eigen::Index rows = a.rows();
  Mat<S> y = a.value().colwise().mean();
  return a.tape().record(std::move(y), {a}, [ia, rows](Tape<S>& t, std::size_t self) {
    t.accumulate(ia, t.grad(self).replicate(rows, 1) / static_cast<S>(rows));
  });
}

template <typename S>
Var<S> l2_normalize_rows(const Var<S>& a, S eps) {
  const auto ia = a.id();
  ColVec<S> norms = (a.value().rowwise().squaredNorm().array() + eps).sqrt();
  Mat<S> y = norms.cwiseInverse().asDiagonal() * a.value();
  return a.tape().record(std::move(y), {a}, [ia, norms](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const Mat<S>& y = t.value(self);
    const ColVec<S> proj = g.cwiseProduct(y).rowwise().sum();
    Mat<S> da = norms.cwiseInverse().asDiagonal() * (g - proj.asDiagonal() * y);
    t.accumulate(ia, da);
  });
}

#define VLM_INSTANTIATE_OPS(S)                                                                                    \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                              \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                              \
  template Var<S> hadamard(const Var<S>&, const Var<S>&);                                                         \
  template Var<S> scale(const Var<S>&, S);                                                                        \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                                           \
  template Var<S> matmul_transposed(const Var<S>&, const Var<S>&);                                                \
  template Var<S> transpose(const Var<S>&);                                                                       \
  template Var<S> add_row(const Var<S>&, const Var<S>&);                                                          \
  template Var<S> scale_rows(const Var<S>&, std::span<const S>);                                                  \
  template Var<S> gelu(const Var<S>&);                                                                            \
  template Var<S> layer_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);                                     \
  template Var<S> log_softmax_rows(const Var<S>&);                                                                \
  template Var<S> multi_head_attention(const Var<S>&, const Var<S>&, const Var<S>&, std::span<const BoolMatrix>, \
                                       std::size_t, std::vector<Mat<S>>*);                                        \
  template Var<S> gather_rows(const Var<S>&, std::span<const Eigen::Index>);                                      \
  template Var<S> slice_rows(const Var<S>&, Eigen::Index, Eigen::Index);                                          \
  template Var<S> concat_rows(const std::vector<Var<S>>&);                                                        \
  template Var<S> concat_cols(const std::vector<Var<S>>&);                                                        \
  template Var<S> pick(const Var<S>&, std::span<const Eigen::Index>);                                             \
  template Var<S> row_dot(const Var<S>&, const Var<S>&);                                                          \
  template Var<S> sum_all(const Var<S>&);                                                                         \
  template Var<S> mean_all(const Var<S>&);                                                                        \
  template Var<S> mean_rows(const Var<S>&);                                                                       \
  template Var<S> l2_normalize_rows(const Var<S>&, S);

VLM_INSTANTIATE_OPS(double)
VLM_INSTANTIATE_OPS(float)

#undef VLM_INSTANTIATE_OPS

}  // namespace vlm
