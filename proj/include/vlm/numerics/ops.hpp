#pragma once

#include "vlm/numerics/tape.hpp"

#include <cstddef>
#include <span>
#include <vector>

// Differentiable operations recorded on a Tape. Every op checks shapes and
// throws ShapeError on mismatch. Implementations are explicitly instantiated
// for double (training, gradient checks) and float (opt-in speed mode).
namespace vlm {

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> hadamard(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> scale(const Var<S>& a, S factor);

// a (n x k) * b (k x m)
template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b);
// a (n x k) * b^T, b is (m x k)
template <typename S>
Var<S> matmul_transposed(const Var<S>& a, const Var<S>& b);
template <typename S>
Var<S> transpose(const Var<S>& a);

// a (n x m) + row (1 x m) broadcast over rows.
template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& row);
// Row i of a multiplied by the constant weights[i].
template <typename S>
Var<S> scale_rows(const Var<S>& a, std::span<const S> weights);

// Exact (erf) GELU.
template <typename S>
Var<S> gelu(const Var<S>& a);

// Row-wise normalization with learned gain/shift rows (1 x m).
template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps);

// Row-wise log-softmax with max subtraction.
template <typename S>
Var<S> log_softmax_rows(const Var<S>& a);

// Row-wise scaled dot-product attention over a batch of sequences packed
// as (batch * seq_len) rows. masks[b](i, j) allows query i to read key j.
// A query row with no allowed key yields a zero output row. When
// `probabilities` is non-null it receives batch * heads attention matrices,
// ordered [b * heads + h].
template <typename S>
Var<S> multi_head_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, std::span<const BoolMatrix> masks,
                            std::size_t heads, std::vector<Mat<S>>* probabilities = nullptr);

template <typename S>
Var<S> gather_rows(const Var<S>& table, std::span<const Eigen::Index> rows);
template <typename S>
Var<S> slice_rows(const Var<S>& a, Eigen::Index begin, Eigen::Index count);
template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts);
template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts);

// out(i) = a(i, columns[i]); result is (n x 1).
template <typename S>
Var<S> pick(const Var<S>& a, std::span<const Eigen::Index> columns);
// out(i) = <a.row(i), b.row(i)>; result is (n x 1).
template <typename S>
Var<S> row_dot(const Var<S>& a, const Var<S>& b);

template <typename S>
Var<S> sum_all(const Var<S>& a);
template <typename S>
Var<S> mean_all(const Var<S>& a);
// Column means, (1 x m).
template <typename S>
Var<S> mean_rows(const Var<S>& a);
template <typename S>
Var<S> l2_normalize_rows(const Var<S>& a, S eps);

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) {
  return sub(a, b);
}
template <typename S>
Var<S> operator*(const Var<S>& a, S factor) {
  return scale(a, factor);
}

}  // namespace vlm
