// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include "moeasr/moeasr.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "harness/ablation.hpp"
#include "harness/evaluate.hpp"
#include "harness/trainer.hpp"
#include "losses/losses.hpp"
#include "moe/router.hpp"

using nlohmann::json;
namespace h = moeasr::harness;
namespace m = moeasr::models;

struct moeasr_config {
  json doc;
};

struct moeasr_model {
  explicit moeasr_model(m::AsrModel mdl) : model(std::move(mdl)) {}
  m::AsrModel model;
};

namespace {

thread_local std::string g_last_error;

moeasr_status fail(moeasr_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
moeasr_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return MOEASR_OK;
  } catch (const moeasr::DimensionError& e) {
    return fail(MOEASR_ERR_DIMENSION, e.what());
  } catch (const moeasr::ParameterError& e) {
    return fail(MOEASR_ERR_PARAMETER, e.what());
  } catch (const h::TrainingDiverged& e) {
    return fail(MOEASR_ERR_DIVERGED, e.what());
  } catch (const moeasr::CheckpointError& e) {
    return fail(MOEASR_ERR_IO, e.what());
  } catch (const json::exception& e) {
    return fail(MOEASR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(MOEASR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::ios_base::failure& e) {
    return fail(MOEASR_ERR_IO, e.what());
  } catch (const std::runtime_error& e) {
    return fail(MOEASR_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(MOEASR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MOEASR_ERR_INTERNAL, "unknown exception");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

h::TrainConfig to_train_config(const moeasr_config* config) {
  return h::train_config_from_json(config->doc);
}

h::TrainConfig preset_config(const char* preset) {
  h::TrainConfig cfg;
  if (preset && *preset) cfg.model = m::preset(preset);
  cfg.task.feature_dim = cfg.model.d_feat;
  cfg.task.vocab_size = std::min<std::size_t>(cfg.model.vocab_size, cfg.task.vocab_size);
  if (cfg.model.language_id.enabled) cfg.task.num_languages = cfg.model.language_id.num_languages;
  return cfg;
}

json summary_json(const h::TrainResult& r) {
  json evals = json::array();
  for (const auto& p : r.evaluations) evals.push_back({{"step", p.step}, {"report", h::to_json(p.report)}});
  return {{"steps", r.steps},
          {"stopped_early", r.stopped_early},
          {"last_total_loss", r.last_total_loss},
          {"checkpoint", r.checkpoint},
          {"evaluations", evals}};
}

}  // namespace

extern "C" {

const char* moeasr_version(void) { return "0.1.0"; }

const char* moeasr_last_error(void) { return g_last_error.c_str(); }

const char* moeasr_status_name(moeasr_status status) {
  switch (status) {
    case MOEASR_OK: return "ok";
    case MOEASR_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MOEASR_ERR_DIMENSION: return "dimension error";
    case MOEASR_ERR_PARAMETER: return "parameter error";
    case MOEASR_ERR_IO: return "i/o error";
    case MOEASR_ERR_DIVERGED: return "training diverged";
    case MOEASR_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case MOEASR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void moeasr_string_free(char* str) { std::free(str); }

moeasr_status moeasr_config_create(const char* preset, moeasr_config** out) {
  return guarded([&] {
    require(out != nullptr, "moeasr_config_create: out is null");
    *out = new moeasr_config{h::to_json(preset_config(preset))};
  });
}

moeasr_status moeasr_config_from_json(const char* json_text, moeasr_config** out) {
  return guarded([&] {
    require(json_text && out, "moeasr_config_from_json: null argument");
    const json parsed = json::parse(json_text);
    // Round trip through the typed config so unknown or malformed fields fail here.
    *out = new moeasr_config{h::to_json(h::train_config_from_json(parsed))};
  });
}

moeasr_status moeasr_config_set(moeasr_config* config, const char* path, const char* value) {
  return guarded([&] {
    require(config && path && value, "moeasr_config_set: null argument");
    json updated = config->doc;
    h::apply_override(updated, path, value);
    h::train_config_from_json(updated);
    config->doc = std::move(updated);
  });
}

moeasr_status moeasr_config_to_json(const moeasr_config* config, char** out_json) {
  return guarded([&] {
    require(config && out_json, "moeasr_config_to_json: null argument");
    *out_json = copy_string(config->doc.dump(2));
  });
}

moeasr_status moeasr_config_validate(const moeasr_config* config) {
  return guarded([&] {
    require(config != nullptr, "moeasr_config_validate: null config");
    to_train_config(config).validate();
  });
}

void moeasr_config_destroy(moeasr_config* config) { delete config; }

moeasr_status moeasr_generate_corpus(const moeasr_config* config, const char* split, size_t count,
                                     const char* path) {
  return guarded([&] {
    require(config && split && path, "moeasr_generate_corpus: null argument");
    const h::TrainConfig cfg = to_train_config(config);
    h::write_corpus(path, cfg.task, h::generate_corpus(cfg.task, count, split));
  });
}

moeasr_status moeasr_train(const moeasr_config* config, const char* train_corpus_path,
                           char** out_summary_json) {
  return guarded([&] {
    require(config != nullptr, "moeasr_train: null config");
    const h::TrainConfig cfg = to_train_config(config);
    h::TrainResult result;
    if (train_corpus_path) {
      cfg.validate();
      const auto train_corpus = h::read_corpus(train_corpus_path);
      const auto eval_corpus = h::generate_corpus(cfg.task, cfg.eval_utterances, "valid");
      m::AsrModel model(cfg.model, cfg.seed);
      result = h::train(cfg, model, train_corpus, eval_corpus);
    } else {
      result = h::train(cfg);
    }
    if (out_summary_json) *out_summary_json = copy_string(summary_json(result).dump(2));
  });
}

moeasr_status moeasr_evaluate(const char* checkpoint_path, const char* corpus_path,
                              const char* split, size_t count, char** out_report_json) {
  return guarded([&] {
    require(checkpoint_path && out_report_json, "moeasr_evaluate: null argument");
    std::optional<h::TrainConfig> cfg;
    const m::AsrModel model = h::load_model(checkpoint_path, &cfg);
    std::vector<m::Utterance> corpus;
    h::SyntheticTask task = cfg ? cfg->task : h::SyntheticTask{};
    if (corpus_path) {
      corpus = h::read_corpus(corpus_path, &task);
    } else {
      if (!cfg) throw moeasr::CheckpointError("checkpoint has no task description; pass a corpus");
      corpus = h::generate_corpus(task, count, split ? split : "test");
    }
    if (task.feature_dim != model.config().d_feat) {
      throw moeasr::DimensionError("evaluate: corpus feature dim " +
                                   std::to_string(task.feature_dim) + " but model expects " +
                                   std::to_string(model.config().d_feat));
    }
    h::EvalOptions opts;
    if (cfg) opts.decode = cfg->decode;
    const h::EvalReport report = h::evaluate(model, corpus, task.num_languages, opts);
    *out_report_json = copy_string(h::to_json(report).dump(2));
  });
}

moeasr_status moeasr_ablation_grid(const moeasr_config* config, const size_t* experts,
                                  size_t num_experts, const int* streaming, size_t num_streaming,
                                  const int* language_id, size_t num_language_id,
                                  const int* label_moe, size_t num_label_moe,
                                  char** out_grid_json) {
  return guarded([&] {
    require(config && out_grid_json, "moeasr_ablation_grid: null argument");
    auto flags = [](const int* v, std::size_t n) {
      require(v || n == 0, "moeasr_ablation_grid: null axis");
      std::vector<bool> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(v[i] != 0);
      return out;
    };
    require(experts || num_experts == 0, "moeasr_ablation_grid: null axis");
    const auto grid = h::ablation_grid(
        to_train_config(config), std::vector<std::size_t>(experts, experts + num_experts),
        flags(streaming, num_streaming), flags(language_id, num_language_id),
        flags(label_moe, num_label_moe));
    json out = json::array();
    for (const auto& v : grid) out.push_back({{"name", v.name}, {"patch", v.patch}});
    *out_grid_json = copy_string(out.dump(2));
  });
}

moeasr_status moeasr_ablate(const moeasr_config* config, const char* grid_json,
                            size_t test_utterances, char** out_csv) {
  return guarded([&] {
    require(config && grid_json && out_csv, "moeasr_ablate: null argument");
    const h::TrainConfig base = to_train_config(config);
    const auto variants = h::ablation_variants_from_json(json::parse(grid_json));
    const auto rows = h::run_ablation(base, variants, test_utterances);
    *out_csv = copy_string(h::ablation_csv(rows, base.task.num_languages));
  });
}

moeasr_status moeasr_model_create(const moeasr_config* config, moeasr_model** out) {
  return guarded([&] {
    require(config && out, "moeasr_model_create: null argument");
    const h::TrainConfig cfg = to_train_config(config);
    *out = new moeasr_model(m::AsrModel(cfg.model, cfg.seed));
  });
}

moeasr_status moeasr_model_load(const char* checkpoint_path, moeasr_model** out) {
  return guarded([&] {
    require(checkpoint_path && out, "moeasr_model_load: null argument");
    *out = new moeasr_model(h::load_model(checkpoint_path));
  });
}

void moeasr_model_destroy(moeasr_model* model) { delete model; }

moeasr_status moeasr_model_num_parameters(const moeasr_model* model, size_t* out) {
  return guarded([&] {
    require(model && out, "moeasr_model_num_parameters: null argument");
    *out = model->model.params().num_elements();
  });
}

moeasr_status moeasr_model_save(const moeasr_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "moeasr_model_save: null argument");
    json cfg;
    m::to_json(cfg, model->model.config());
    moeasr::write_checkpoint(path,
                             {{"format", "moeasr-checkpoint"},
                              {"step", 0},
                              {"seed", model->model.params().seed()},
                              {"model", cfg}},
                             model->model.params());
  });
}

moeasr_status moeasr_model_decode(const moeasr_model* model, const double* features,
                                  size_t frames, size_t feature_dim, size_t language,
                                  size_t* tokens, size_t capacity, size_t* out_len) {
  moeasr_status st = guarded([&] {
    require(model && features && out_len, "moeasr_model_decode: null argument");
    require(tokens || capacity == 0, "moeasr_model_decode: null token buffer");
    const auto input = moeasr::Tensor::from(
        {frames, feature_dim}, std::vector<double>(features, features + frames * feature_dim));
    const auto hyp = model->model.decode(input, language);
    *out_len = hyp.size();
    std::copy_n(hyp.begin(), std::min(capacity, hyp.size()), tokens);
  });
  if (st == MOEASR_OK && *out_len > capacity) {
    return fail(MOEASR_ERR_BUFFER_TOO_SMALL,
                "decoded " + std::to_string(*out_len) + " tokens into a buffer of " +
                    std::to_string(capacity));
  }
  return st;
}

moeasr_status moeasr_expert_capacity(size_t samples_per_batch, size_t num_experts,
                                     double capacity_factor, size_t* out) {
  return guarded([&] {
    require(out != nullptr, "moeasr_expert_capacity: null out");
    *out = moeasr::moe::expert_capacity(samples_per_batch, num_experts, capacity_factor);
  });
}

moeasr_status moeasr_plan_dispatch(const double* probs, size_t tokens, size_t experts,
                                   size_t capacity, int64_t* assignment, int64_t* slot,
                                   size_t* dropped) {
  return guarded([&] {
    require(probs && assignment && slot, "moeasr_plan_dispatch: null argument");
    const auto plan = moeasr::moe::plan_dispatch(std::span<const double>(probs, tokens * experts),
                                                 tokens, experts, capacity);
    std::copy(plan.assignment.begin(), plan.assignment.end(), assignment);
    std::copy(plan.slot.begin(), plan.slot.end(), slot);
    if (dropped) *dropped = plan.dropped_count();
  });
}

moeasr_status moeasr_aux_loss(const double* probs, size_t tokens, size_t experts, double alpha,
                              double* out) {
  return guarded([&] {
    require(probs && out, "moeasr_aux_loss: null argument");
    const auto p = moeasr::Tensor::from({tokens, experts},
                                        std::vector<double>(probs, probs + tokens * experts));
    *out = moeasr::moe::aux_loss(moeasr::moe::load_stats(p), alpha).item();
  });
}

moeasr_status moeasr_rnnt_loss(const double* log_probs, size_t frames, size_t labels,
                               size_t classes, const size_t* target, size_t blank_id,
                               double* loss, double* grad) {
  return guarded([&] {
    require(log_probs && loss && (target || labels == 0), "moeasr_rnnt_loss: null argument");
    const std::size_t n = frames * (labels + 1) * classes;
    auto lp = moeasr::Tensor::from({frames, labels + 1, classes},
                                   std::vector<double>(log_probs, log_probs + n));
    if (grad) lp.set_requires_grad(true);
    auto l = moeasr::losses::rnnt_loss_forward(
        lp, std::span<const std::size_t>(target, labels), blank_id);
    *loss = l.item();
    if (grad) {
      l.backward();
      std::copy(lp.grad().begin(), lp.grad().end(), grad);
    }
  });
}

moeasr_status moeasr_edit_distance(const size_t* reference, size_t reference_len,
                                   const size_t* hypothesis, size_t hypothesis_len, size_t* out) {
  return guarded([&] {
    require(out && (reference || reference_len == 0) && (hypothesis || hypothesis_len == 0),
            "moeasr_edit_distance: null argument");
    *out = h::edit_distance(std::span<const std::size_t>(reference, reference_len),
                            std::span<const std::size_t>(hypothesis, hypothesis_len));
  });
}

}  // extern "C"
