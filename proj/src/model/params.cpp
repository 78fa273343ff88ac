#include "vlm/model/params.hpp"

#include "vlm/errors.hpp"

#include <random>

namespace vlm {

std::string names::layer(std::size_t index, const char* leaf) {
  return "encoder." + std::to_string(index) + "." + leaf;
}

namespace {

struct Shape {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  enum class Init { normal, zero, one } init;
};

std::vector<Shape> expected_shapes(const ModelConfig& c) {
  using I = Shape::Init;
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto ff = static_cast<Eigen::Index>(c.d_ff);
  std::vector<Shape> out{
      {names::word_embeddings, static_cast<Eigen::Index>(c.vocab_size), d, I::normal},
      {names::position_embeddings, static_cast<Eigen::Index>(c.max_len), d, I::normal},
      {names::segment_embeddings, 2, d, I::normal},
      {names::projector_fc1_w, static_cast<Eigen::Index>(c.d_video_feat), d, I::normal},
      {names::projector_fc1_b, 1, d, I::zero},
      {names::projector_fc2_w, d, d, I::normal},
      {names::projector_fc2_b, 1, d, I::zero},
      {names::head_w, d, d, I::normal},
      {names::head_b, 1, d, I::zero},
      {names::lm_bias, 1, static_cast<Eigen::Index>(c.vocab_size), I::zero},
  };
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (const char* proj : {"attn.query", "attn.key", "attn.value", "attn.output"}) {
      out.push_back({names::layer(l, (std::string(proj) + ".weight").c_str()), d, d, I::normal});
      out.push_back({names::layer(l, (std::string(proj) + ".bias").c_str()), 1, d, I::zero});
    }
    out.push_back({names::layer(l, "attn.norm.gamma"), 1, d, I::one});
    out.push_back({names::layer(l, "attn.norm.beta"), 1, d, I::zero});
    out.push_back({names::layer(l, "ffn.fc1.weight"), d, ff, I::normal});
    out.push_back({names::layer(l, "ffn.fc1.bias"), 1, ff, I::zero});
    out.push_back({names::layer(l, "ffn.fc2.weight"), ff, d, I::normal});
    out.push_back({names::layer(l, "ffn.fc2.bias"), 1, d, I::zero});
    out.push_back({names::layer(l, "ffn.norm.gamma"), 1, d, I::one});
    out.push_back({names::layer(l, "ffn.norm.beta"), 1, d, I::zero});
  }
  return out;
}

}  // namespace

ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, config.init_std);
  ModelParams<double> params;
  // Fixed draw order: expected_shapes() order, row-major within a tensor.
  for (const auto& s : expected_shapes(config)) {
    MatrixXr m(s.rows, s.cols);
    switch (s.init) {
      case Shape::Init::normal:
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        break;
      case Shape::Init::zero:
        m.setZero();
        break;
      case Shape::Init::one:
        m.setOnes();
        break;
    }
    params.emplace(s.name, std::move(m));
  }
  return params;
}

template <typename Scalar>
void check_params(const ModelParams<Scalar>& params, const ModelConfig& config) {
  for (const auto& s : expected_shapes(config)) {
    auto it = params.find(s.name);
    if (it == params.end()) throw ShapeError("missing parameter " + s.name);
    if (it->second.rows() != s.rows || it->second.cols() != s.cols) {
      throw ShapeError("parameter " + s.name + " has shape " + std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", expected " + std::to_string(s.rows) + "x" +
                       std::to_string(s.cols));
    }
  }
}

template void check_params(const ModelParams<double>&, const ModelConfig&);
template void check_params(const ModelParams<float>&, const ModelConfig&);

}  // namespace vlm
