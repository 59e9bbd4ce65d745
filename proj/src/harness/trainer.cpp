// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "harness/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace moeasr::harness {

using nlohmann::json;
using models::Utterance;

double learning_rate(const OptimizerConfig& cfg, std::size_t step) {
  if (step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (cfg.decay_steps == 0) return cfg.lr;
  if (step >= cfg.decay_steps) return 0.0;
  return cfg.lr * static_cast<double>(cfg.decay_steps - step) /
         static_cast<double>(cfg.decay_steps - cfg.warmup_steps);
}

double AdamW::step(ParamStore& params, double lr) {
  ++t_;
  double sq = 0.0;
  for (const auto& [name, p] : params.all())
    if (p.has_grad())
      for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  const double clip = cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, handle] : params.all()) {
    Tensor p = handle;
    if (!p.has_grad()) continue;
    auto& [m, v] = moments_[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    const bool decay = p.rank() >= 2 && cfg_.weight_decay > 0.0;
    auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      w[i] -= lr * (update + (decay ? cfg_.weight_decay * w[i] : 0.0));
    }
  }
  return norm;
}

std::vector<double> sampling_weights(std::span<const Utterance> corpus, double temperature) {
  std::map<std::size_t, double> counts;
  for (const auto& u : corpus) counts[u.language] += 1.0;
  std::vector<double> w;
  w.reserve(corpus.size());
  for (const auto& u : corpus) w.push_back(std::pow(counts[u.language], temperature - 1.0));
  return w;
}

json checkpoint_metadata(const TrainConfig& cfg, std::size_t step) {
  json train = to_json(cfg);
  train.erase("output_dir");
  json model;
  models::to_json(model, cfg.model);
  return {{"format", "moeasr-checkpoint"},
          {"step", step},
          {"seed", cfg.seed},
          {"model", model},
          {"train", train},
          {"rng", {{"seed", cfg.seed}, {"train_stream", "train"}, {"next_step", step + 1}}}};
}

void save_checkpoint(const std::string& path, const TrainConfig& cfg, std::size_t step,
                     const models::AsrModel& model) {
  write_checkpoint(path, checkpoint_metadata(cfg, step), model.params());
}

models::AsrModel load_model(const std::string& checkpoint_path,
                            std::optional<TrainConfig>* config) {
  const CheckpointContents contents = read_checkpoint(checkpoint_path);
  const json& meta = contents.metadata;
  if (!meta.contains("model")) throw CheckpointError(checkpoint_path + ": no model config");
  models::ModelConfig model_cfg;
  models::from_json(meta.at("model"), model_cfg);
  models::AsrModel model(model_cfg, meta.value("seed", std::uint64_t{0}));
  load_into(contents, model.params());
  if (config && meta.contains("train")) *config = train_config_from_json(meta.at("train"));
  return model;
}

namespace {

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "checkpoint-%06zu.ckpt", step);
  return buf;
}

json layer_record(const models::MoeLayerRecord& rec) {
  std::vector<double> P(rec.moe.stats.P.data().begin(), rec.moe.stats.P.data().end());
  return {{"name", rec.name},
          {"capacity", rec.moe.plan.capacity},
          {"tokens", rec.moe.plan.tokens()},
          {"dropped", rec.moe.plan.dropped_count()},
          {"f", rec.moe.stats.f},
          {"P", P}};
}

}  // namespace

TrainResult train(const TrainConfig& cfg, models::AsrModel& model,
                  std::span<const Utterance> train_corpus, std::span<const Utterance> eval_corpus) {
  cfg.validate();
  if (train_corpus.empty()) throw ParameterError("train: corpus is empty");
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    out << to_json(cfg).dump(2) << '\n';
  }
  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());

  TrainResult result;
  result.checkpoint = (dir / checkpoint_name(0)).string();
  save_checkpoint(result.checkpoint, cfg, 0, model);

  const std::vector<double> weights = sampling_weights(train_corpus, cfg.sampling_temperature);
  std::vector<double> cumulative(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
  RngStream sampler(cfg.seed, hash_tag("sampler"));
  const RngStream train_rng(cfg.seed, hash_tag("train"));
  AdamW optimizer(cfg.optimizer);
  const std::size_t num_languages = cfg.task.num_languages;
  EvalOptions eval_opts;
  eval_opts.decode = cfg.decode;

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<const Utterance*> picks;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const double r = sampler.uniform() * cumulative.back();
      const auto idx = static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
      picks.push_back(&train_corpus[std::min(idx, train_corpus.size() - 1)]);
    }
    const models::Batch batch = models::make_batch(picks);
    RngStream step_rng = train_rng.fork(step);
    model.params().zero_grad();
    models::ForwardResult fr = model.forward(batch, step_rng, true, cfg.label_smoothing);
    const double total = fr.loss.total.item();
    if (!std::isfinite(total)) {
      throw TrainingDiverged("non-finite loss " + std::to_string(total) + " at step " +
                             std::to_string(step) + " (task " +
                             std::to_string(fr.loss.task.item()) + ")");
    }
    fr.loss.total.backward();
    const double lr = learning_rate(cfg.optimizer, step);
    const double grad_norm = optimizer.step(model.params(), lr);
    if (!std::isfinite(grad_norm)) {
      throw TrainingDiverged("non-finite gradient norm at step " + std::to_string(step));
    }

    json record{{"step", step},
                {"lr", lr},
                {"task_loss", fr.loss.task.item()},
                {"aux_loss", fr.loss.aux_sum()},
                {"total_loss", total},
                {"grad_norm", grad_norm},
                {"tokens", fr.loss.tokens},
                {"dropped_tokens", fr.loss.dropped_tokens},
                {"drop_rate", fr.loss.tokens ? static_cast<double>(fr.loss.dropped_tokens) /
                                                   static_cast<double>(fr.loss.tokens)
                                             : 0.0}};
    json aux = json::array(), layers = json::array();
    for (const auto& a : fr.loss.aux) aux.push_back(a.item());
    for (const auto& rec : fr.moe_layers) layers.push_back(layer_record(rec));
    record["aux_losses"] = aux;
    record["moe_layers"] = layers;
    result.steps = step;
    result.last_total_loss = total;

    const bool eval_now = step == cfg.max_steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
    if (eval_now) {
      if (!eval_corpus.empty()) {
        EvalReport report = evaluate(model, eval_corpus, num_languages, eval_opts);
        record["eval"] = to_json(report);
        result.evaluations.push_back({step, report});
        if (cfg.target_error_rate >= 0.0 && report.overall_error_rate <= cfg.target_error_rate) {
          result.stopped_early = step < cfg.max_steps;
        }
      }
      result.checkpoint = (dir / checkpoint_name(step)).string();
      save_checkpoint(result.checkpoint, cfg, step, model);
    }
    metrics << record.dump() << '\n';
    if (result.stopped_early) break;
  }
  metrics.flush();
  if (!metrics) throw std::runtime_error("error writing metrics log");
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const auto train_corpus = generate_corpus(cfg.task, cfg.train_utterances, "train");
  const auto eval_corpus = generate_corpus(cfg.task, cfg.eval_utterances, "valid");
  models::AsrModel model(cfg.model, cfg.seed);
  return train(cfg, model, train_corpus, eval_corpus);
}

}  // namespace moeasr::harness
