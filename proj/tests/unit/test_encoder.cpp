#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "vlm/masking/attention_mask.hpp"
#include "vlm/model/encoder.hpp"
#include "vlm/model/params.hpp"

#include <cmath>

using namespace vlm;
using vlm::testing::random_matrix;
using vlm::testing::tiny_config;

namespace {

MatrixXr layer_norm_oracle(const MatrixXr& x, double eps) {
  MatrixXr out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mean = 0.0, var = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= static_cast<double>(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean) / std::sqrt(var + eps);
  }
  return out;
}

// Input embeddings of a single sequence, written out term by term.
MatrixXr embedding_oracle(const MultimodalSequence& s, const ModelParams<double>& p) {
  const auto& L = s.layout;
  MatrixXr x(static_cast<Eigen::Index>(L.padded_length()), p.at(names::word_embeddings).cols());
  std::size_t v = 0;
  for (std::size_t i = 0; i < L.padded_length(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r) = L.kinds[i] == TokenKind::video ? RowVectorXr(s.video_tokens.row(static_cast<Eigen::Index>(v++)))
                                              : RowVectorXr(p.at(names::word_embeddings).row(L.token_ids[i]));
    x.row(r) += p.at(names::position_embeddings).row(L.position_ids[i]);
    x.row(r) += p.at(names::segment_embeddings).row(L.segment_ids[i]);
  }
  return x;
}

MultimodalSequence sample_sequence(const ModelConfig& c, std::mt19937_64& rng, std::size_t m, std::size_t n,
                                   std::size_t padded = 0) {
  std::uniform_int_distribution<int> word(c.tokens.first_regular_id, static_cast<int>(c.vocab_size) - 1);
  std::vector<int> text(n);
  for (auto& t : text) t = word(rng);
  return assemble_sequence(random_matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c.d_model), rng),
                           text, c, padded);
}

}  // namespace

TEST_CASE("projector: zero weights output the bias, identity weights pass through") {
  ModelConfig c = tiny_config();
  auto p = init_params(c, 1);
  std::mt19937_64 rng(2);
  p[names::projector_fc1_w].setZero();
  p[names::projector_fc2_w].setZero();
  p[names::projector_fc2_b] = random_matrix(1, 16, rng);
  const MatrixXr out = project_video_features(random_matrix(5, 16, rng), p, c);
  for (Eigen::Index i = 0; i < out.rows(); ++i) CHECK(out.row(i).isApprox(p[names::projector_fc2_b].row(0)));

  c.projector_activation = ProjectorActivation::identity;
  auto q = init_params(c, 1);
  q[names::projector_fc1_w] = MatrixXr::Identity(16, 16);
  q[names::projector_fc2_w] = MatrixXr::Identity(16, 16);
  const MatrixXr f = random_matrix(3, 16, rng);
  CHECK((project_video_features(f, q, c) - f).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projector: matches a hand-coded affine-GELU-affine chain") {
  const ModelConfig c = tiny_config();
  auto p = init_params(c, 4);
  std::mt19937_64 rng(5);
  p[names::projector_fc1_b] = random_matrix(1, 16, rng);
  p[names::projector_fc2_b] = random_matrix(1, 16, rng);
  const MatrixXr f = random_matrix(3, 16, rng, 2.0);
  const MatrixXr& w1 = p[names::projector_fc1_w];
  const MatrixXr& w2 = p[names::projector_fc2_w];
  MatrixXr want(3, 16);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> hidden(16);
    for (int k = 0; k < 16; ++k) {
      double z = p[names::projector_fc1_b](0, k);
      for (int j = 0; j < 16; ++j) z += f(i, j) * w1(j, k);
      hidden[k] = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
    }
    for (int k = 0; k < 16; ++k) {
      double y = p[names::projector_fc2_b](0, k);
      for (int j = 0; j < 16; ++j) y += hidden[j] * w2(j, k);
      want(i, k) = y;
    }
  }
  CHECK((project_video_features(f, p, c) - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(project_video_features(MatrixXr(2, 5), p, c), ShapeError);
}

TEST_CASE("assemble: layout of two video and two text tokens") {
  const ModelConfig c = ModelConfig::desk();
  const std::vector<int> text{7, 9};
  const SequenceLayout L = assemble_layout(2, text, c, 7);
  using K = TokenKind;
  CHECK(L.kinds == std::vector<K>{K::cls, K::video, K::video, K::sep, K::text, K::text, K::sep});
  CHECK(L.segment_ids == std::vector<int>{0, 0, 0, 0, 1, 1, 1});
  CHECK(L.position_ids == std::vector<int>{0, 1, 2, 3, 0, 1, 2});
  CHECK(L.token_ids == std::vector<int>{c.tokens.cls, -1, -1, c.tokens.sep, 7, 9, c.tokens.sep});

  const std::vector<int> dummy{c.tokens.dummy_text};
  const SequenceLayout D = assemble_layout(3, dummy, c);
  CHECK(D.length() == 7);
  CHECK(D.kinds[6] == K::sep);
  CHECK(D.token_ids[5] == c.tokens.dummy_text);
  for (std::size_t i = 7; i < D.padded_length(); ++i) CHECK(D.kinds[i] == K::pad);
}

TEST_CASE("assemble: overflow and empty blocks are rejected") {
  const ModelConfig paper = ModelConfig::paper();
  CHECK_THROWS_AS(assemble_layout(32, std::vector<int>(62, 10), paper), ContractViolation);
  CHECK_NOTHROW(assemble_layout(32, std::vector<int>(61, 10), paper));
  const ModelConfig c = ModelConfig::desk();
  CHECK_THROWS_AS(assemble_layout(0, std::vector<int>{10}, c), ContractViolation);
  CHECK_THROWS_AS(assemble_layout(1, std::vector<int>{}, c), ContractViolation);
  CHECK_THROWS_AS(assemble_layout(9, std::vector<int>{10}, c), ContractViolation);
  CHECK_THROWS_AS(assemble_layout(1, std::vector<int>{512}, c), ContractViolation);
}

TEST_CASE("encode: zero weights give the twice layer-normalized embeddings") {
  const ModelConfig c = tiny_config();
  auto p = init_params(c, 8);
  for (auto& [name, t] : p) {
    if (name.starts_with("encoder.") && name.find(".norm.gamma") == std::string::npos) t.setZero();
  }
  std::mt19937_64 rng(9);
  const auto s = sample_sequence(c, rng, 3, 4, 12);
  const BoolMatrix mask = build_full_mask(s.layout).allow;
  const MatrixXr h = encode(s, mask, p, c);
  const MatrixXr want = layer_norm_oracle(layer_norm_oracle(embedding_oracle(s, p), c.layer_norm_eps), c.layer_norm_eps);
  CHECK((h.topRows(10) - want.topRows(10)).cwiseAbs().maxCoeff() < 1e-10);
  const MatrixXr again = encode(s, mask, p, c);
  CHECK((h.array() == again.array()).all());
}

TEST_CASE("encode: trailing padding does not change non-PAD states") {
  ModelConfig c = tiny_config();
  c.n_layers = 2;
  const auto p = init_params(c, 10);
  std::mt19937_64 rng(11);
  const auto s = sample_sequence(c, rng, 4, 5, 12);
  MultimodalSequence longer = assemble_sequence(s.video_tokens,
                                                std::vector<int>(s.layout.token_ids.begin() + 6, s.layout.token_ids.begin() + 11),
                                                c, 20);
  const MatrixXr a = encode(s, build_full_mask(s.layout).allow, p, c);
  const MatrixXr b = encode(longer, build_full_mask(longer.layout).allow, p, c);
  CHECK((a.topRows(12) - b.topRows(12)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("encode: swapping two text positions with their ids and mask permutes the states") {
  const ModelConfig c = tiny_config();
  const auto p = init_params(c, 12);
  std::mt19937_64 rng(13);
  const auto s = sample_sequence(c, rng, 3, 5);
  const BoolMatrix mask = build_full_mask(s.layout).allow;
  const std::size_t i = s.layout.text_begin() + 1, j = s.layout.text_begin() + 3;

  MultimodalSequence t = s;
  auto swap_at = [&](auto& v) { std::swap(v[i], v[j]); };
  swap_at(t.layout.kinds);
  swap_at(t.layout.token_ids);
  swap_at(t.layout.segment_ids);
  swap_at(t.layout.position_ids);
  BoolMatrix pm = mask;
  pm.row(static_cast<Eigen::Index>(i)).swap(pm.row(static_cast<Eigen::Index>(j)));
  pm.col(static_cast<Eigen::Index>(i)).swap(pm.col(static_cast<Eigen::Index>(j)));

  const MatrixXr a = encode(s, mask, p, c);
  MatrixXr b = encode(t, pm, p, c);
  b.row(static_cast<Eigen::Index>(i)).swap(b.row(static_cast<Eigen::Index>(j)));
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encode: isolated text states ignore the video block") {
  const ModelConfig c = tiny_config();
  const auto p = init_params(c, 14);
  std::mt19937_64 rng(15);
  const auto s = sample_sequence(c, rng, 4, 3);
  MultimodalSequence t = s;
  t.video_tokens = random_matrix(4, 16, rng, 5.0);
  const BoolMatrix mask = build_isolated_mask(s.layout).allow;
  const MatrixXr a = encode(s, mask, p, c);
  const MatrixXr b = encode(t, mask, p, c);
  for (std::size_t r = s.layout.text_begin(); r <= s.layout.second_sep(); ++r) {
    CHECK((a.row(static_cast<Eigen::Index>(r)).array() == b.row(static_cast<Eigen::Index>(r)).array()).all());
  }
}

TEST_CASE("prediction head: identity, constant and affine cases") {
  const ModelConfig c = tiny_config();
  auto p = init_params(c, 16);
  std::mt19937_64 rng(17);
  const MatrixXr h = random_matrix(6, 16, rng);

  p[names::head_w] = MatrixXr::Identity(16, 16);
  p[names::head_b].setZero();
  CHECK((predict_embeddings(h, p) - h).cwiseAbs().maxCoeff() == 0.0);

  p[names::head_w].setZero();
  p[names::head_b] = random_matrix(1, 16, rng);
  const MatrixXr e0 = predict_embeddings(h, p);
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(e0.row(i) == p[names::head_b].row(0));

  p[names::head_w] = random_matrix(16, 16, rng);
  MatrixXr want(6, 16);
  for (int i = 0; i < 6; ++i) {
    for (int k = 0; k < 16; ++k) {
      double y = p[names::head_b](0, k);
      for (int j = 0; j < 16; ++j) y += h(i, j) * p[names::head_w](j, k);
      want(i, k) = y;
    }
  }
  CHECK((predict_embeddings(h, p) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prediction head: one tensor serves video and text rows") {
  const ModelConfig c = tiny_config();
  auto p = init_params(c, 18);
  std::size_t heads = 0;
  for (const auto& [name, t] : p) heads += name.starts_with("head.");
  CHECK(heads == 2);

  std::mt19937_64 rng(19);
  const auto s = sample_sequence(c, rng, 2, 2);
  const MatrixXr h = encode(s, build_full_mask(s.layout).allow, p, c);
  const MatrixXr before = predict_embeddings(h, p);
  p[names::head_w](0, 0) += 1.0;
  const MatrixXr after = predict_embeddings(h, p);
  const auto video_row = static_cast<Eigen::Index>(s.layout.video_begin());
  const auto text_row = static_cast<Eigen::Index>(s.layout.text_begin());
  CHECK(after(video_row, 0) - before(video_row, 0) == doctest::Approx(h(video_row, 0)));
  CHECK(after(text_row, 0) - before(text_row, 0) == doctest::Approx(h(text_row, 0)));
}

TEST_CASE("encode: a row with no allowed key is rejected") {
  const ModelConfig c = tiny_config();
  const auto p = init_params(c, 20);
  std::mt19937_64 rng(21);
  const auto s = sample_sequence(c, rng, 2, 2);
  BoolMatrix mask = build_full_mask(s.layout).allow;
  mask.row(2).setConstant(false);
  CHECK_THROWS_AS(encode(s, mask, p, c), ContractViolation);
}
