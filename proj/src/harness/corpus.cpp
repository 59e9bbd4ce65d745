// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace moeasr::harness {

using nlohmann::json;
using models::Utterance;

void SyntheticTask::validate() const {
  if (num_languages == 0 || vocab_size == 0 || feature_dim == 0) {
    throw ParameterError("task: languages, vocabulary and feature dim must be positive");
  }
  if (min_tokens == 0 || min_tokens > max_tokens) throw ParameterError("task: bad token length range");
  if (min_repeat == 0 || min_repeat > max_repeat) throw ParameterError("task: bad repeat range");
  if (!(noise_scale >= 0.0)) throw ParameterError("task: noise_scale must be >= 0");
  if (!language_shares.empty()) {
    if (language_shares.size() != num_languages) {
      throw ParameterError("task: " + std::to_string(language_shares.size()) +
                           " language shares for " + std::to_string(num_languages) + " languages");
    }
    for (double s : language_shares)
      if (!(s > 0.0)) throw ParameterError("task: language shares must be positive");
  }
}

void to_json(json& j, const SyntheticTask& t) {
  j = json{{"num_languages", t.num_languages}, {"vocab_size", t.vocab_size},
           {"feature_dim", t.feature_dim},     {"noise_scale", t.noise_scale},
           {"min_tokens", t.min_tokens},       {"max_tokens", t.max_tokens},
           {"min_repeat", t.min_repeat},       {"max_repeat", t.max_repeat},
           {"language_shares", t.language_shares}, {"seed", t.seed}};
}

void from_json(const json& j, SyntheticTask& t) {
  t.num_languages = j.value("num_languages", t.num_languages);
  t.vocab_size = j.value("vocab_size", t.vocab_size);
  t.feature_dim = j.value("feature_dim", t.feature_dim);
  t.noise_scale = j.value("noise_scale", t.noise_scale);
  t.min_tokens = j.value("min_tokens", t.min_tokens);
  t.max_tokens = j.value("max_tokens", t.max_tokens);
  t.min_repeat = j.value("min_repeat", t.min_repeat);
  t.max_repeat = j.value("max_repeat", t.max_repeat);
  t.language_shares = j.value("language_shares", t.language_shares);
  t.seed = j.value("seed", t.seed);
}

EmissionMaps build_emission_maps(const SyntheticTask& task) {
  task.validate();
  EmissionMaps maps;
  RngStream rng(task.seed, hash_tag("templates"));
  maps.templates.resize(task.vocab_size * task.feature_dim);
  for (auto& v : maps.templates) v = rng.normal();
  RngStream perm_rng(task.seed, hash_tag("language_maps"));
  for (std::size_t lang = 0; lang < task.num_languages; ++lang) {
    std::vector<std::size_t> perm(task.vocab_size);
    // Redraw until the map differs from every earlier language when possible.
    for (int attempt = 0;; ++attempt) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[perm_rng.below(i)]);
      const bool repeated =
          std::find(maps.mapping.begin(), maps.mapping.end(), perm) != maps.mapping.end();
      if (!repeated || attempt >= 64) break;
    }
    maps.mapping.push_back(perm);
  }
  return maps;
}

Utterance render_utterance(const SyntheticTask& task, const EmissionMaps& maps,
                           std::size_t language, const std::vector<std::size_t>& tokens,
                           const std::vector<std::size_t>& repeats, RngStream& noise) {
  if (language >= task.num_languages) throw ParameterError("render: language out of range");
  if (tokens.size() != repeats.size()) throw DimensionError("render: one repeat count per token");
  Utterance u;
  u.language = language;
  u.tokens = tokens;
  u.feature_dim = task.feature_dim;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= task.vocab_size) throw ParameterError("render: token out of range");
    const std::size_t row = maps.mapping[language][tokens[i]];
    for (std::size_t r = 0; r < repeats[i]; ++r) {
      for (std::size_t k = 0; k < task.feature_dim; ++k) {
        const double clean = maps.templates[row * task.feature_dim + k];
        u.features.push_back(task.noise_scale > 0.0 ? clean + task.noise_scale * noise.normal()
                                                    : clean);
      }
      ++u.frames;
    }
  }
  return u;
}

std::vector<Utterance> generate_corpus(const SyntheticTask& task, std::size_t num_utterances,
                                       const std::string& split) {
  const EmissionMaps maps = build_emission_maps(task);
  std::vector<double> cumulative;
  double acc = 0.0;
  for (std::size_t l = 0; l < task.num_languages; ++l) {
    acc += task.language_shares.empty() ? 1.0 : task.language_shares[l];
    cumulative.push_back(acc);
  }
  const RngStream base(task.seed, hash_tag("corpus:" + split));
  std::vector<Utterance> corpus;
  corpus.reserve(num_utterances);
  for (std::size_t n = 0; n < num_utterances; ++n) {
    RngStream rng = base.fork(n);
    const double pick = rng.uniform() * acc;
    const std::size_t language = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    const std::size_t len = task.min_tokens + rng.below(task.max_tokens - task.min_tokens + 1);
    std::vector<std::size_t> tokens(len), repeats(len);
    for (std::size_t i = 0; i < len; ++i) {
      tokens[i] = rng.below(task.vocab_size);
      repeats[i] = task.min_repeat + rng.below(task.max_repeat - task.min_repeat + 1);
    }
    RngStream noise = rng.fork("noise");
    corpus.push_back(render_utterance(task, maps, std::min(language, task.num_languages - 1),
                                      tokens, repeats, noise));
  }
  return corpus;
}

void write_corpus(const std::string& path, const SyntheticTask& task,
                  const std::vector<Utterance>& utterances) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus '" + path + "'");
  out << json{{"task", task}}.dump() << '\n';
  for (const auto& u : utterances) {
    out << json{{"language", u.language},
                {"tokens", u.tokens},
                {"frames", u.frames},
                {"features", u.features}}
               .dump()
        << '\n';
  }
  if (!out) throw std::runtime_error("error writing corpus '" + path + "'");
}

std::vector<Utterance> read_corpus(const std::string& path, SyntheticTask* task) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("corpus '" + path + "' is empty");
  const SyntheticTask header = json::parse(line).at("task").get<SyntheticTask>();
  if (task) *task = header;
  std::vector<Utterance> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = json::parse(line);
    Utterance u;
    u.language = j.at("language").get<std::size_t>();
    u.tokens = j.at("tokens").get<std::vector<std::size_t>>();
    u.frames = j.at("frames").get<std::size_t>();
    u.features = j.at("features").get<std::vector<double>>();
    u.feature_dim = header.feature_dim;
    if (u.features.size() != u.frames * u.feature_dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": feature count mismatch");
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace moeasr::harness
