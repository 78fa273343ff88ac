#include "doctest.h"
#include "support/gradcheck.hpp"
#include "vlm/numerics/ops.hpp"

#include <cmath>

using namespace vlm;
using vlm::testing::gradcheck;
using vlm::testing::random_matrix;

namespace {

// sum(op(...) .* R) for a fixed random R, so every output entry matters.
Var<double> weighted_sum(const Var<double>& y, std::mt19937_64& rng) {
  Tape<double>& t = y.tape();
  return sum_all(hadamard(y, t.constant(random_matrix(y.rows(), y.cols(), rng))));
}

template <typename F>
void check_op(const char* label, TensorMap<double> params, F op) {
  auto build = [&](Tape<double>& t, const TensorMap<double>& p) {
    t.bind(p);
    std::mt19937_64 rng(99);
    return weighted_sum(op(t), rng);
  };
  const auto r = gradcheck(build, std::move(params), 60, 5);
  INFO(label << " worst " << r.worst);
  CHECK(r.max_rel_error < 1e-6);
}

}  // namespace

TEST_CASE("backward of a sum and of a quadratic") {
  Tape<double> t;
  Var<double> p = t.parameter("p", MatrixXr::Constant(1, 3, 0.7));
  auto g = t.backward(sum_all(p));
  CHECK(g.at("p").isApprox(MatrixXr::Ones(1, 3)));

  Tape<double> t2;
  MatrixXr v(1, 2);
  v << 1.0, -2.0;
  Var<double> q = t2.parameter("q", v);
  auto g2 = t2.backward(scale(sum_all(hadamard(q, q)), 0.5));
  CHECK(g2.at("q").isApprox(v));
}

TEST_CASE("backward rejects non-scalar losses and zero-fills unused parameters") {
  Tape<double> t;
  Var<double> p = t.parameter("p", MatrixXr::Ones(2, 2));
  t.parameter("unused", MatrixXr::Ones(3, 1));
  CHECK_THROWS_AS(t.backward(p), ContractViolation);
  auto g = t.backward(sum_all(p));
  CHECK(g.at("unused").isZero());
  CHECK(g.at("unused").rows() == 3);
}

TEST_CASE("finite differences: elementwise and linear ops") {
  std::mt19937_64 rng(1);
  TensorMap<double> ab{{"a", random_matrix(3, 4, rng)}, {"b", random_matrix(3, 4, rng)}};
  check_op("add", ab, [](Tape<double>& t) { return t.param("a") + t.param("b"); });
  check_op("sub", ab, [](Tape<double>& t) { return t.param("a") - t.param("b"); });
  check_op("hadamard", ab, [](Tape<double>& t) { return hadamard(t.param("a"), t.param("b")); });
  check_op("scale", ab, [](Tape<double>& t) { return t.param("a") * 1.7; });
  check_op("transpose", ab, [](Tape<double>& t) { return transpose(t.param("a")); });
  check_op("matmul_transposed", ab, [](Tape<double>& t) { return matmul_transposed(t.param("a"), t.param("b")); });
  check_op("gelu", ab, [](Tape<double>& t) { return gelu(t.param("a")); });

  TensorMap<double> mm{{"a", random_matrix(3, 4, rng)}, {"b", random_matrix(4, 2, rng)}};
  check_op("matmul", mm, [](Tape<double>& t) { return matmul(t.param("a"), t.param("b")); });

  TensorMap<double> row{{"a", random_matrix(3, 4, rng)}, {"r", random_matrix(1, 4, rng)}};
  check_op("add_row", row, [](Tape<double>& t) { return add_row(t.param("a"), t.param("r")); });
  check_op("scale_rows", row, [](Tape<double>& t) {
    static const std::vector<double> w{1.0, 0.0, -2.5};
    return scale_rows(t.param("a"), std::span<const double>(w));
  });
}

TEST_CASE("finite differences: normalization and softmax") {
  std::mt19937_64 rng(2);
  TensorMap<double> ln{{"x", random_matrix(3, 5, rng)}, {"g", random_matrix(1, 5, rng)}, {"b", random_matrix(1, 5, rng)}};
  check_op("layer_norm", ln, [](Tape<double>& t) { return layer_norm(t.param("x"), t.param("g"), t.param("b"), 1e-12); });
  check_op("log_softmax_rows", ln, [](Tape<double>& t) { return log_softmax_rows(t.param("x")); });
  check_op("l2_normalize_rows", ln, [](Tape<double>& t) { return l2_normalize_rows(t.param("x"), 1e-12); });
  check_op("mean_rows", ln, [](Tape<double>& t) { return mean_rows(t.param("x")); });
  check_op("mean_all", ln, [](Tape<double>& t) { return mean_all(t.param("x")); });
}

TEST_CASE("finite differences: gathers and concatenations") {
  std::mt19937_64 rng(3);
  TensorMap<double> p{{"a", random_matrix(4, 3, rng)}, {"b", random_matrix(2, 3, rng)}, {"c", random_matrix(4, 2, rng)}};
  check_op("gather_rows", p, [](Tape<double>& t) {
    static const std::vector<Eigen::Index> rows{3, 0, 3, 1};
    return gather_rows(t.param("a"), std::span<const Eigen::Index>(rows));
  });
  check_op("slice_rows", p, [](Tape<double>& t) { return slice_rows(t.param("a"), 1, 2); });
  check_op("concat_rows", p, [](Tape<double>& t) { return concat_rows(std::vector{t.param("a"), t.param("b")}); });
  check_op("concat_cols", p, [](Tape<double>& t) { return concat_cols(std::vector{t.param("a"), t.param("c")}); });
  check_op("pick", p, [](Tape<double>& t) {
    static const std::vector<Eigen::Index> cols{2, 0, 1, 1};
    return pick(t.param("a"), std::span<const Eigen::Index>(cols));
  });
  check_op("row_dot", p, [](Tape<double>& t) { return row_dot(t.param("a"), slice_rows(t.param("a"), 0, 4)); });
}

TEST_CASE("finite differences: masked multi-head attention") {
  std::mt19937_64 rng(4);
  const Eigen::Index len = 5;
  TensorMap<double> p{{"q", random_matrix(2 * len, 4, rng)},
                      {"k", random_matrix(2 * len, 4, rng)},
                      {"v", random_matrix(2 * len, 4, rng)}};
  std::vector<BoolMatrix> masks(2, BoolMatrix::Constant(len, len, true));
  masks[0](1, 3) = false;
  masks[0].col(4).setConstant(false);
  masks[0].row(4).setConstant(false);  // an all-blocked row yields zeros
  masks[1].triangularView<Eigen::StrictlyUpper>().setConstant(false);
  check_op("attention", p, [&](Tape<double>& t) {
    return multi_head_attention(t.param("q"), t.param("k"), t.param("v"), std::span<const BoolMatrix>(masks), 2);
  });

  Tape<double> t;
  t.bind(p);
  Var<double> out = multi_head_attention(t.param("q"), t.param("k"), t.param("v"), std::span<const BoolMatrix>(masks), 2);
  CHECK(out.value().row(4).isZero());
}

TEST_CASE("attention matches a per-head softmax oracle") {
  std::mt19937_64 rng(5);
  const Eigen::Index len = 4, d = 6, heads = 3, hd = d / heads;
  MatrixXr q = random_matrix(len, d, rng), k = random_matrix(len, d, rng), v = random_matrix(len, d, rng);
  BoolMatrix mask = BoolMatrix::Constant(len, len, true);
  mask(0, 2) = false;
  mask(3, 0) = false;
  Tape<double> t;
  std::vector<MatrixXr> probs;
  Var<double> out = multi_head_attention(t.constant(q), t.constant(k), t.constant(v),
                                         std::span<const BoolMatrix>(&mask, 1), heads, &probs);
  REQUIRE(probs.size() == static_cast<std::size_t>(heads));
  for (Eigen::Index h = 0; h < heads; ++h) {
    for (Eigen::Index i = 0; i < len; ++i) {
      std::vector<double> w(len, 0.0);
      double total = 0.0;
      for (Eigen::Index j = 0; j < len; ++j) {
        if (!mask(i, j)) continue;
        double s = 0.0;
        for (Eigen::Index c = 0; c < hd; ++c) s += q(i, h * hd + c) * k(j, h * hd + c);
        w[j] = std::exp(s / std::sqrt(static_cast<double>(hd)));
        total += w[j];
      }
      for (Eigen::Index c = 0; c < hd; ++c) {
        double expected = 0.0;
        for (Eigen::Index j = 0; j < len; ++j) expected += w[j] / total * v(j, h * hd + c);
        CHECK(out.value()(i, h * hd + c) == doctest::Approx(expected).epsilon(1e-12));
      }
      for (Eigen::Index j = 0; j < len; ++j) CHECK(probs[h](i, j) == doctest::Approx(w[j] / total).epsilon(1e-12));
    }
  }
}

TEST_CASE("gelu uses the exact erf form") {
  Tape<double> t;
  MatrixXr x(1, 3);
  x << -1.0, 0.0, 2.0;
  Var<double> y = gelu(t.constant(x));
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(y.value()(0, i) == doctest::Approx(0.5 * x(0, i) * (1.0 + std::erf(x(0, i) / std::sqrt(2.0)))).epsilon(1e-15));
  }
}

TEST_CASE("ops reject mismatched shapes") {
  Tape<double> t;
  Var<double> a = t.constant(MatrixXr::Ones(2, 3));
  Var<double> b = t.constant(MatrixXr::Ones(3, 2));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add_row(a, b), ShapeError);
}

TEST_CASE("forward ops stay finite on finite inputs") {
  std::mt19937_64 rng(6);
  Tape<double> t;
  Var<double> x = t.constant(random_matrix(4, 8, rng, 30.0));
  CHECK(log_softmax_rows(x).value().allFinite());
  CHECK(gelu(x).value().allFinite());
  CHECK(layer_norm(x, t.constant(MatrixXr::Ones(1, 8)), t.constant(MatrixXr::Zero(1, 8)), 1e-12).value().allFinite());
  CHECK(l2_normalize_rows(t.constant(MatrixXr::Zero(2, 3)), 1e-12).value().allFinite());
}
