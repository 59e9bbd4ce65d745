// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/ablation.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace moeasr::harness {

using nlohmann::json;

std::vector<AblationVariant> ablation_grid(const TrainConfig& base,
                                           const std::vector<std::size_t>& experts,
                                           const std::vector<bool>& streaming,
                                           const std::vector<bool>& language_id,
                                           const std::vector<bool>& label_moe) {
  const std::size_t every = base.model.moe_every > 0 ? base.model.moe_every : 2;
  const bool tt = base.model.family == models::Family::kTT;
  std::vector<AblationVariant> out;
  for (std::size_t n : experts)
    for (bool s : streaming)
      for (bool l : language_id)
        for (bool m : label_moe) {
          if (!tt && (s || m)) continue;  // streaming and label MoE exist for tt only
          AblationVariant v;
          v.name = (n == 0 ? std::string("dense") : "moe" + std::to_string(n)) +
                   (tt ? (s ? "-streaming" : "-full") : "") + (l ? "-lid" : "-nolid") +
                   (m ? "-labelmoe" : "");
          json model{{"moe_every", n == 0 ? 0 : every},
                     {"language_id",
                      {{"enabled", l},
                       {"num_languages", l ? base.task.num_languages
                                           : base.model.language_id.num_languages}}}};
          if (n > 0 || m) model["router"] = {{"num_experts", n > 0 ? n : base.model.router.num_experts}};
          if (tt) {
            model["streaming"] = {{"enabled", s}};
            model["label_decoder"] = {{"moe_projection", m}};
          }
          v.patch = {{"model", model}};
          out.push_back(std::move(v));
        }
  return out;
}

std::vector<AblationVariant> ablation_variants_from_json(const json& j) {
  if (!j.is_array()) throw ParameterError("ablation grid must be a JSON array");
  std::vector<AblationVariant> out;
  for (const auto& item : j) {
    AblationVariant v;
    v.name = item.at("name").get<std::string>();
    v.patch = item.value("patch", json::object());
    out.push_back(std::move(v));
  }
  return out;
}

TrainConfig apply_variant(const TrainConfig& base, const AblationVariant& variant) {
  json doc = to_json(base);
  doc.merge_patch(variant.patch);
  TrainConfig cfg = train_config_from_json(doc);
  cfg.output_dir = (std::filesystem::path(base.output_dir) / variant.name).string();
  return cfg;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      std::size_t test_utterances) {
  if (variants.size() < 2) throw ParameterError("ablation needs at least two configurations");
  base.validate();
  const auto train_corpus = generate_corpus(base.task, base.train_utterances, "train");
  const auto eval_corpus = generate_corpus(base.task, base.eval_utterances, "valid");
  const auto test_corpus = generate_corpus(base.task, test_utterances, "test");
  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    const TrainConfig cfg = apply_variant(base, variant);
    models::AsrModel model(cfg.model, cfg.seed);
    const TrainResult tr = train(cfg, model, train_corpus, eval_corpus);
    EvalOptions opts;
    opts.decode = cfg.decode;
    const EvalReport report = evaluate(model, test_corpus, cfg.task.num_languages, opts);
    {
      std::ofstream out(std::filesystem::path(cfg.output_dir) / "test_report.json");
      out << to_json(report).dump(2) << '\n';
    }
    AblationRow row;
    row.name = variant.name;
    row.family = models::family_name(cfg.model.family);
    const bool moe_on = cfg.model.moe_every > 0 && cfg.model.moe_every <= cfg.model.encoder_layers;
    row.experts = moe_on || (cfg.model.family == models::Family::kTT &&
                             cfg.model.label_decoder.moe_projection)
                      ? cfg.model.router.num_experts
                      : 0;
    row.params = model.params().num_elements();
    row.streaming = cfg.model.family == models::Family::kTT && cfg.model.streaming.enabled;
    row.language_id = cfg.model.language_id.enabled;
    row.label_moe = cfg.model.family == models::Family::kTT && cfg.model.label_decoder.moe_projection;
    for (const auto& l : report.languages) row.language_error_rates.push_back(l.error_rate);
    row.overall_error_rate = report.overall_error_rate;
    row.drop_rate = report.drop_rate;
    row.steps = tr.steps;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows, std::size_t num_languages) {
  std::ostringstream out;
  out << "model,experts,params,streaming,lang_id,label_moe";
  for (std::size_t l = 0; l < num_languages; ++l) out << ",rate_lang" << l;
  out << ",overall,drop_rate,steps\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& r : rows) {
    out << r.name << ',' << r.experts << ',' << r.params << ',' << (r.streaming ? "on" : "off")
        << ',' << (r.language_id ? "on" : "off") << ',' << (r.label_moe ? "on" : "off");
    for (std::size_t l = 0; l < num_languages; ++l)
      out << ',' << (l < r.language_error_rates.size() ? r.language_error_rates[l] : 0.0);
    out << ',' << r.overall_error_rate << ',' << r.drop_rate << ',' << r.steps << '\n';
  }
  return out.str();
}

}  // namespace moeasr::harness
