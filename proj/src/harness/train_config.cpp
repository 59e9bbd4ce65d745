// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/train_config.hpp"

#include <algorithm>
#include <cctype>

namespace moeasr::harness {

using nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  task.validate();
  if (optimizer.kind != "adamw") throw ParameterError("optimizer: only adamw is supported");
  if (!(optimizer.lr > 0.0)) throw ParameterError("optimizer: lr must be positive");
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 ||
      optimizer.beta2 >= 1.0) {
    throw ParameterError("optimizer: betas must lie in [0, 1)");
  }
  if (optimizer.weight_decay < 0.0 || optimizer.grad_clip < 0.0 || !(optimizer.eps > 0.0)) {
    throw ParameterError("optimizer: weight_decay and grad_clip must be >= 0, eps > 0");
  }
  if (optimizer.decay_steps != 0 && optimizer.decay_steps <= optimizer.warmup_steps) {
    throw ParameterError("optimizer: decay_steps must exceed warmup_steps");
  }
  if (batch_size == 0) throw ParameterError("train: batch_size must be >= 1");
  if (train_utterances == 0) throw ParameterError("train: corpus must be nonempty");
  if (!(sampling_temperature >= 0.0)) throw ParameterError("train: sampling_temperature must be >= 0");
  if (task.feature_dim != model.d_feat) {
    throw DimensionError("train: task feature_dim " + std::to_string(task.feature_dim) +
                         " != model d_feat " + std::to_string(model.d_feat));
  }
  if (task.vocab_size > model.vocab_size) {
    throw DimensionError("train: task vocabulary " + std::to_string(task.vocab_size) +
                         " exceeds model vocabulary " + std::to_string(model.vocab_size));
  }
  if (model.language_id.enabled && model.language_id.num_languages < task.num_languages) {
    throw DimensionError("train: model knows fewer languages than the task");
  }
}

namespace {

std::string replace_dots(std::string path) {
  std::replace(path.begin(), path.end(), '.', '/');
  return path;
}

}  // namespace

json to_json(const TrainConfig& c) {
  json model;
  models::to_json(model, c.model);
  json task;
  to_json(task, c.task);
  return json{{"model", model},
              {"task", task},
              {"optimizer",
               {{"kind", c.optimizer.kind},
                {"lr", c.optimizer.lr},
                {"beta1", c.optimizer.beta1},
                {"beta2", c.optimizer.beta2},
                {"eps", c.optimizer.eps},
                {"weight_decay", c.optimizer.weight_decay},
                {"warmup_steps", c.optimizer.warmup_steps},
                {"decay_steps", c.optimizer.decay_steps},
                {"grad_clip", c.optimizer.grad_clip}}},
              {"batch_size", c.batch_size},
              {"max_steps", c.max_steps},
              {"eval_every", c.eval_every},
              {"seed", c.seed},
              {"output_dir", c.output_dir},
              {"train_utterances", c.train_utterances},
              {"eval_utterances", c.eval_utterances},
              {"label_smoothing", c.label_smoothing},
              {"sampling_temperature", c.sampling_temperature},
              {"target_error_rate", c.target_error_rate},
              {"decode",
               {{"max_len", c.decode.max_len},
                {"max_symbols_per_frame", c.decode.max_symbols_per_frame}}}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw ParameterError("train config must be a JSON object");
  const json reference = to_json(TrainConfig{});
  for (const auto& [path, value] : flatten_json(j)) {
    if (!reference.contains(json::json_pointer("/" + replace_dots(path)))) {
      throw ParameterError("train config: unknown field '" + path + "'");
    }
  }
  TrainConfig c;
  if (j.contains("model")) models::from_json(j.at("model"), c.model);
  if (j.contains("task")) from_json(j.at("task"), c.task);
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    auto& p = c.optimizer;
    p.kind = o.value("kind", p.kind);
    p.lr = o.value("lr", p.lr);
    p.beta1 = o.value("beta1", p.beta1);
    p.beta2 = o.value("beta2", p.beta2);
    p.eps = o.value("eps", p.eps);
    p.weight_decay = o.value("weight_decay", p.weight_decay);
    p.warmup_steps = o.value("warmup_steps", p.warmup_steps);
    p.decay_steps = o.value("decay_steps", p.decay_steps);
    p.grad_clip = o.value("grad_clip", p.grad_clip);
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.train_utterances = j.value("train_utterances", c.train_utterances);
  c.eval_utterances = j.value("eval_utterances", c.eval_utterances);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.sampling_temperature = j.value("sampling_temperature", c.sampling_temperature);
  c.target_error_rate = j.value("target_error_rate", c.target_error_rate);
  if (j.contains("decode")) {
    c.decode.max_len = j.at("decode").value("max_len", c.decode.max_len);
    c.decode.max_symbols_per_frame =
        j.at("decode").value("max_symbols_per_frame", c.decode.max_symbols_per_frame);
  }
  return c;
}

namespace {

void flatten_into(const json& j, const std::string& prefix,
                  std::vector<std::pair<std::string, json>>& out) {
  if (!j.is_object()) {
    out.emplace_back(prefix, j);
    return;
  }
  for (const auto& item : j.items())
    flatten_into(item.value(), prefix.empty() ? item.key() : prefix + "." + item.key(), out);
}

bool parse_bool(const std::string& v, const std::string& path) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw ParameterError(path + ": expected a boolean, got '" + v + "'");
}

}  // namespace

std::vector<std::pair<std::string, json>> flatten_json(const json& j) {
  std::vector<std::pair<std::string, json>> out;
  flatten_into(j, "", out);
  return out;
}

void apply_override(json& root, const std::string& dotted_path, const std::string& value) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw ParameterError("unknown config path '" + dotted_path + "'");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    if (node->is_boolean()) {
      *node = parse_bool(value, dotted_path);
    } else if (node->is_number_unsigned()) {
      std::size_t used = 0;
      if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
      const unsigned long long parsed = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      *node = static_cast<std::uint64_t>(parsed);
    } else if (node->is_number_integer()) {
      std::size_t used = 0;
      const long long parsed = std::stoll(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      *node = static_cast<std::int64_t>(parsed);
    } else if (node->is_number()) {
      std::size_t used = 0;
      const double parsed = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      *node = parsed;
    } else if (node->is_array()) {
      json parsed = json::parse("[" + value + "]");
      *node = parsed;
    } else {
      *node = value;
    }
  } catch (const ParameterError&) {
    throw;
  } catch (const std::exception&) {
    throw ParameterError(dotted_path + ": cannot parse '" + value + "'");
  }
}

}  // namespace moeasr::harness
