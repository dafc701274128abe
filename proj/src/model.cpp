#include "ktrans/model.hpp"

#include <set>

namespace ktrans {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(layers >= 1, "layers must be at least 1");
  require(hidden >= 1, "hidden must be at least 1");
  require(heads >= 1, "heads must be at least 1");
  require(hidden % heads == 0, "hidden (" + std::to_string(hidden) +
                                   ") must be divisible by heads (" +
                                   std::to_string(heads) + ")");
  require(ffn_dim >= 1, "ffn_dim must be at least 1");
  require(max_len >= 3, "max_len must be at least 3");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  static const char* kChannelWhat[] = {"token", "instruction type", "operand type",
                                       "operand r/w", "flags"};
  for (int c = 0; c < kNumChannels; ++c) {
    require(vocab_sizes[static_cast<std::size_t>(c)] >= 6,
            std::string(kChannelWhat[c]) +
                " vocab size must be at least 6 (specials plus one data token); got " +
                std::to_string(vocab_sizes[static_cast<std::size_t>(c)]));
  }
}

nlohmann::json model_config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["layers"] = config.layers;
  j["hidden"] = config.hidden;
  j["heads"] = config.heads;
  j["ffn_dim"] = config.ffn_dim;
  j["max_len"] = config.max_len;
  j["vocab_sizes"] = config.vocab_sizes;
  j["dropout"] = config.dropout;
  j["seed"] = config.seed;
  j["tie_heads"] = config.tie_heads;
  j["pooling"] = config.pooling == Pooling::Cls ? "cls" : "mean";
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& origin) {
  if (!j.is_object()) throw ConfigError(origin + ": model config must be a JSON object");
  static const std::set<std::string> kKnown = {
      "layers", "hidden", "heads",  "ffn_dim",   "max_len",
      "vocab_sizes", "dropout", "seed", "tie_heads", "pooling"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.count(key)) {
      throw ConfigError(origin + ": unknown model config key '" + key + "'");
    }
  }
  ModelConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_len = j.value("max_len", c.max_len);
    if (j.contains("vocab_sizes")) {
      if (!j["vocab_sizes"].is_array() || j["vocab_sizes"].size() != kNumChannels) {
        throw ConfigError(origin + ": vocab_sizes must be an array of 5 integers");
      }
      for (int i = 0; i < kNumChannels; ++i) {
        c.vocab_sizes[static_cast<std::size_t>(i)] =
            j["vocab_sizes"][static_cast<std::size_t>(i)].get<int>();
      }
    }
    c.dropout = j.value("dropout", c.dropout);
    c.seed = j.value("seed", c.seed);
    c.tie_heads = j.value("tie_heads", c.tie_heads);
    if (j.contains("pooling")) {
      const std::string pooling = j["pooling"].get<std::string>();
      if (pooling == "cls") {
        c.pooling = Pooling::Cls;
      } else if (pooling == "mean") {
        c.pooling = Pooling::Mean;
      } else {
        throw ConfigError(origin + ": pooling must be 'cls' or 'mean', got '" + pooling + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(origin + ": bad model config value: " + e.what());
  }
  return c;
}

long parameter_count(const ModelConfig& config) {
  const long hidden = config.hidden;
  const long ffn = config.ffn_dim;
  long vocab_rows = config.max_len;
  for (int v : config.vocab_sizes) vocab_rows += v;
  const long embeddings = vocab_rows * hidden;
  const long per_layer = 4 * (hidden * hidden + hidden)  // q, k, v, out projections
                         + 2 * 2 * hidden                // two layer norms
                         + hidden * ffn + ffn            // ffn in
                         + ffn * hidden + hidden;        // ffn out
  const long head = hidden * config.vocab_sizes[0] + config.vocab_sizes[0];
  return embeddings + config.layers * per_layer + (config.tie_heads ? 1 : 2) * head;
}

}  // namespace ktrans
