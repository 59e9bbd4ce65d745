// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "harness/evaluate.hpp"
#include "harness/train_config.hpp"

namespace moeasr::harness {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Linear warmup to cfg.lr, then constant or linear decay to 0 at decay_steps.
double learning_rate(const OptimizerConfig& cfg, std::size_t step);

// Decoupled weight decay; decay applies to matrices only (rank >= 2).
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg) : cfg_(std::move(cfg)) {}
  // Applies one update from the gradients held by the parameters; returns the
  // global gradient norm before clipping.
  double step(ParamStore& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// Per-utterance sampling weights so that language l is drawn with probability
// proportional to n_l^temperature.
std::vector<double> sampling_weights(std::span<const models::Utterance> corpus,
                                     double temperature);

struct EvalPoint {
  std::size_t step = 0;
  EvalReport report;
};

struct TrainResult {
  std::size_t steps = 0;
  bool stopped_early = false;
  double last_total_loss = 0.0;
  std::vector<EvalPoint> evaluations;
  std::string checkpoint;  // last checkpoint written
};

// Trains `model` in place. Writes config.json, metrics.jsonl (one record per
// step) and checkpoint-<step>.ckpt files under cfg.output_dir; a checkpoint is
// written before the first step, at every evaluation and after the last step.
TrainResult train(const TrainConfig& cfg, models::AsrModel& model,
                  std::span<const models::Utterance> train_corpus,
                  std::span<const models::Utterance> eval_corpus);

// Generates the corpora from cfg.task and trains a fresh model seeded by cfg.seed.
TrainResult train(const TrainConfig& cfg);

// Metadata stored with every checkpoint; independent of output_dir.
nlohmann::json checkpoint_metadata(const TrainConfig& cfg, std::size_t step);
void save_checkpoint(const std::string& path, const TrainConfig& cfg, std::size_t step,
                     const models::AsrModel& model);
models::AsrModel load_model(const std::string& checkpoint_path,
                            std::optional<TrainConfig>* config = nullptr);

}  // namespace moeasr::harness
