#include "vlm/model/config.hpp"

#include "vlm/errors.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <set>

namespace vlm {
namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::map<std::string, std::string>& fields, const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("model config is missing field '" + key + "'");
  T value{};
  const auto& text = it->second;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("model config field '" + key + "' is not a number: " + text);
  }
  return value;
}

}  // namespace

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_model = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_ff = 3072;
  c.vocab_size = 30522;
  c.d_video_feat = 512;
  c.max_len = 96;
  c.max_video_tokens = 32;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("model." + field + ": " + why); };
  if (d_model == 0) fail("d_model", "must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) fail("n_heads", "must divide d_model");
  if (n_layers == 0) fail("n_layers", "must be positive");
  if (d_ff == 0) fail("d_ff", "must be positive");
  if (d_video_feat == 0) fail("d_video_feat", "must be positive");
  if (max_video_tokens == 0) fail("max_video_tokens", "must be positive");
  if (max_video_tokens + kStructuralTokens >= max_len) fail("max_len", "must exceed max_video_tokens + 3");
  const std::array<int, 5> specials{tokens.pad, tokens.cls, tokens.sep, tokens.mask, tokens.dummy_text};
  std::set<int> seen;
  for (int id : specials) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) fail("vocab_size", "special token id out of range");
    if (!seen.insert(id).second) fail("tokens", "special token ids must be distinct");
    if (id >= tokens.first_regular_id) fail("tokens", "special ids must be below first_regular_id");
  }
  if (static_cast<std::size_t>(tokens.first_regular_id) >= vocab_size) fail("vocab_size", "no regular word ids left");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps", "must be positive");
  if (!(init_std > 0.0)) fail("init_std", "must be positive");
}

std::map<std::string, std::string> ModelConfig::to_fields() const {
  return {
      {"d_model", std::to_string(d_model)},
      {"n_layers", std::to_string(n_layers)},
      {"n_heads", std::to_string(n_heads)},
      {"d_ff", std::to_string(d_ff)},
      {"vocab_size", std::to_string(vocab_size)},
      {"d_video_feat", std::to_string(d_video_feat)},
      {"max_len", std::to_string(max_len)},
      {"max_video_tokens", std::to_string(max_video_tokens)},
      {"token.pad", std::to_string(tokens.pad)},
      {"token.cls", std::to_string(tokens.cls)},
      {"token.sep", std::to_string(tokens.sep)},
      {"token.mask", std::to_string(tokens.mask)},
      {"token.dummy_text", std::to_string(tokens.dummy_text)},
      {"token.first_regular_id", std::to_string(tokens.first_regular_id)},
      {"projector_activation", projector_activation == ProjectorActivation::gelu ? "gelu" : "identity"},
      {"layer_norm_eps", format_double(layer_norm_eps)},
      {"init_std", format_double(init_std)},
  };
}

ModelConfig ModelConfig::from_fields(const std::map<std::string, std::string>& fields) {
  ModelConfig c;
  c.d_model = parse_number<std::size_t>(fields, "d_model");
  c.n_layers = parse_number<std::size_t>(fields, "n_layers");
  c.n_heads = parse_number<std::size_t>(fields, "n_heads");
  c.d_ff = parse_number<std::size_t>(fields, "d_ff");
  c.vocab_size = parse_number<std::size_t>(fields, "vocab_size");
  c.d_video_feat = parse_number<std::size_t>(fields, "d_video_feat");
  c.max_len = parse_number<std::size_t>(fields, "max_len");
  c.max_video_tokens = parse_number<std::size_t>(fields, "max_video_tokens");
  c.tokens.pad = parse_number<int>(fields, "token.pad");
  c.tokens.cls = parse_number<int>(fields, "token.cls");
  c.tokens.sep = parse_number<int>(fields, "token.sep");
  c.tokens.mask = parse_number<int>(fields, "token.mask");
  c.tokens.dummy_text = parse_number<int>(fields, "token.dummy_text");
  c.tokens.first_regular_id = parse_number<int>(fields, "token.first_regular_id");
  const auto act = fields.find("projector_activation");
  if (act == fields.end()) throw ConfigError("model config is missing field 'projector_activation'");
  if (act->second == "gelu") {
    c.projector_activation = ProjectorActivation::gelu;
  } else if (act->second == "identity") {
    c.projector_activation = ProjectorActivation::identity;
  } else {
    throw ConfigError("unknown projector_activation: " + act->second);
  }
  c.layer_norm_eps = parse_number<double>(fields, "layer_norm_eps");
  c.init_std = parse_number<double>(fields, "init_std");
  c.validate();
  return c;
}

}  // namespace vlm
