// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moeasr::harness {

using models::Utterance;

std::size_t edit_distance(std::span<const std::size_t> reference,
                          std::span<const std::size_t> hypothesis) {
  std::vector<std::size_t> prev(hypothesis.size() + 1), cur(hypothesis.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= reference.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hypothesis.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hypothesis.size()];
}

DispatchHistogram dispatch_histogram(std::span<const models::MoeLayerRecord> layers,
                                     std::span<const std::size_t> languages,
                                     std::size_t num_languages) {
  DispatchHistogram out;
  for (const auto& layer : layers) {
    const auto& plan = layer.moe.plan;
    std::vector<std::vector<double>> hist(num_languages,
                                          std::vector<double>(plan.num_experts, 0.0));
    for (std::size_t i = 0; i + 1 < layer.segments.size(); ++i)
      for (std::size_t r = layer.segments[i]; r < layer.segments[i + 1]; ++r)
        if (plan.assignment[r] != moe::kDropped)
          hist[languages[i]][static_cast<std::size_t>(plan.assignment[r])] += 1.0;
    out.push_back(std::move(hist));
  }
  return out;
}

double entropy(std::span<const double> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double h = 0.0;
  if (total > 0.0)
    for (double c : counts)
      if (c > 0.0) h -= c / total * std::log(c / total);
  return h;
}

EvalReport evaluate(const models::AsrModel& model, std::span<const Utterance> corpus,
                    std::size_t num_languages, const EvalOptions& options) {
  EvalReport report;
  report.languages.resize(num_languages);
  for (const auto& u : corpus)
    if (u.language >= num_languages) throw ParameterError("evaluate: language out of range");
  const std::size_t bs = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t begin = 0; begin < corpus.size(); begin += bs) {
    const auto chunk = corpus.subspan(begin, std::min(bs, corpus.size() - begin));
    std::vector<Tensor> features;
    std::vector<std::size_t> languages;
    for (const auto& u : chunk) {
      features.push_back(Tensor::from({u.frames, u.feature_dim}, u.features));
      languages.push_back(u.language);
    }
    const auto hyps = model.decode(features, languages, options.decode);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const Utterance& u = chunk[i];
      const std::size_t err = edit_distance(u.tokens, hyps[i]);
      LanguageScore& s = report.languages[u.language];
      ++s.utterances;
      s.errors += err;
      s.reference_tokens += u.tokens.size();
      report.errors += err;
      report.reference_tokens += u.tokens.size();
      if (err == 0 && hyps[i].size() == u.tokens.size()) ++report.exact_matches;
    }
  }
  for (auto& s : report.languages)
    s.error_rate = s.reference_tokens ? static_cast<double>(s.errors) / s.reference_tokens : 0.0;
  report.overall_error_rate =
      report.reference_tokens ? static_cast<double>(report.errors) / report.reference_tokens : 0.0;

  // Routing statistics from teacher-forced passes.
  DispatchHistogram hist;
  NoGradGuard no_grad;
  for (std::size_t begin = 0; begin < corpus.size(); begin += bs) {
    const auto chunk = corpus.subspan(begin, std::min(bs, corpus.size() - begin));
    const models::Batch batch = models::make_batch(chunk);
    RngStream rng;
    const models::ForwardResult fr = model.forward(batch, rng, false, 0.0);
    report.routed_tokens += fr.loss.tokens;
    report.dropped_tokens += fr.loss.dropped_tokens;
    DispatchHistogram h = dispatch_histogram(fr.moe_layers, batch.language_ids, num_languages);
    if (hist.empty()) {
      hist = std::move(h);
      continue;
    }
    for (std::size_t layer = 0; layer < h.size(); ++layer)
      for (std::size_t l = 0; l < num_languages; ++l)
        for (std::size_t e = 0; e < h[layer][l].size(); ++e) hist[layer][l][e] += h[layer][l][e];
  }
  report.drop_rate = report.routed_tokens
                         ? static_cast<double>(report.dropped_tokens) / report.routed_tokens
                         : 0.0;
  double mean = 0.0;
  std::size_t counted = 0;
  for (std::size_t l = 0; l < num_languages; ++l) {
    if (hist.empty() || report.languages[l].utterances == 0) continue;
    double h = 0.0;
    for (const auto& layer : hist) h += entropy(layer[l]);
    report.languages[l].dispatch_entropy = h / static_cast<double>(hist.size());
    mean += report.languages[l].dispatch_entropy;
    ++counted;
  }
  report.dispatch_entropy = counted ? mean / static_cast<double>(counted) : 0.0;
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json langs = nlohmann::json::array();
  for (std::size_t l = 0; l < r.languages.size(); ++l) {
    const auto& s = r.languages[l];
    langs.push_back({{"language", l},
                     {"utterances", s.utterances},
                     {"errors", s.errors},
                     {"reference_tokens", s.reference_tokens},
                     {"error_rate", s.error_rate},
                     {"dispatch_entropy", s.dispatch_entropy}});
  }
  return {{"languages", langs},
          {"errors", r.errors},
          {"reference_tokens", r.reference_tokens},
          {"overall_error_rate", r.overall_error_rate},
          {"token_accuracy", r.token_accuracy()},
          {"exact_matches", r.exact_matches},
          {"routed_tokens", r.routed_tokens},
          {"dropped_tokens", r.dropped_tokens},
          {"drop_rate", r.drop_rate},
          {"dispatch_entropy", r.dispatch_entropy}};
}

}  // namespace moeasr::harness
