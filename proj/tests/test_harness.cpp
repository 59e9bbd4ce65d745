// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "harness/ablation.hpp"
#include "harness/corpus.hpp"
#include "harness/evaluate.hpp"
#include "harness/trainer.hpp"

namespace moeasr::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("moeasr_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TrainConfig small_config(const fs::path& dir) {
  TrainConfig c;
  c.model = models::preset("s2s-desk");
  c.model.d_model = 16;
  c.model.d_ff = 24;
  c.model.n_heads = 2;
  c.model.conv_channels = 2;
  c.model.router.num_experts = 2;
  c.task.num_languages = 3;
  c.task.vocab_size = c.model.vocab_size;
  c.task.feature_dim = c.model.d_feat;
  c.batch_size = 4;
  c.max_steps = 4;
  c.eval_every = 2;
  c.train_utterances = 20;
  c.eval_utterances = 6;
  c.optimizer.warmup_steps = 2;
  c.seed = 3;
  c.output_dir = dir.string();
  return c;
}

TEST(Corpus, DeterministicPerSeedAndSplit) {
  SyntheticTask task;
  task.seed = 5;
  const auto a = generate_corpus(task, 10, "train");
  const auto b = generate_corpus(task, 10, "train");
  const auto c = generate_corpus(task, 10, "test");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].features, b[i].features);
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_GE(a[i].tokens.size(), task.min_tokens);
    EXPECT_LE(a[i].tokens.size(), task.max_tokens);
    EXPECT_GE(a[i].frames, a[i].tokens.size() * task.min_repeat);
    EXPECT_LE(a[i].frames, a[i].tokens.size() * task.max_repeat);
  }
  EXPECT_NE(a[0].features, c[0].features);
}

TEST(Corpus, NoiselessRenderingRepeatsTemplates) {
  SyntheticTask task;
  task.noise_scale = 0.0;
  const EmissionMaps maps = build_emission_maps(task);
  RngStream noise(1, 1);
  const std::vector<std::size_t> tokens{3, 7};
  const std::vector<std::size_t> repeats{2, 3};
  for (std::size_t lang = 0; lang < task.num_languages; ++lang) {
    const models::Utterance u = render_utterance(task, maps, lang, tokens, repeats, noise);
    ASSERT_EQ(u.frames, 5u);
    for (std::size_t t = 0; t < 5; ++t) {
      const std::size_t row = maps.mapping[lang][tokens[t < 2 ? 0 : 1]];
      for (std::size_t k = 0; k < task.feature_dim; ++k)
        EXPECT_EQ(u.features[t * task.feature_dim + k], maps.templates[row * task.feature_dim + k]);
    }
  }
}

TEST(Corpus, LanguagesUseDistinctPermutations) {
  SyntheticTask task;
  const EmissionMaps maps = build_emission_maps(task);
  for (std::size_t a = 0; a < task.num_languages; ++a) {
    std::vector<std::size_t> sorted = maps.mapping[a];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
    for (std::size_t b = a + 1; b < task.num_languages; ++b) EXPECT_NE(maps.mapping[a], maps.mapping[b]);
  }
}

TEST(Corpus, FileRoundTrip) {
  SyntheticTask task;
  task.seed = 2;
  const auto corpus = generate_corpus(task, 4, "dev");
  const fs::path dir = scratch("corpus");
  fs::create_directories(dir);
  write_corpus((dir / "dev.jsonl").string(), task, corpus);
  SyntheticTask loaded;
  const auto back = read_corpus((dir / "dev.jsonl").string(), &loaded);
  ASSERT_EQ(back.size(), corpus.size());
  EXPECT_EQ(loaded.seed, 2u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].tokens, corpus[i].tokens);
    EXPECT_EQ(back[i].features, corpus[i].features);
    EXPECT_EQ(back[i].language, corpus[i].language);
  }
}

TEST(Metrics, EditDistanceExamples) {
  const std::vector<std::size_t> abc{1, 2, 3}, ac{1, 3}, empty;
  EXPECT_EQ(edit_distance(abc, ac), 1u);
  EXPECT_EQ(edit_distance(abc, abc), 0u);
  EXPECT_EQ(edit_distance(abc, empty), 3u);
  EXPECT_EQ(edit_distance(empty, abc), 3u);
  EXPECT_EQ(edit_distance(std::vector<std::size_t>{1, 2}, std::vector<std::size_t>{2, 1}), 2u);
}

TEST(Metrics, EditDistanceMatchesBruteForce) {
  // Brute force over every alignment via recursion on the first symbols.
  std::function<std::size_t(std::span<const std::size_t>, std::span<const std::size_t>)> slow =
      [&](std::span<const std::size_t> r, std::span<const std::size_t> h) -> std::size_t {
    if (r.empty()) return h.size();
    if (h.empty()) return r.size();
    const std::size_t sub = slow(r.subspan(1), h.subspan(1)) + (r[0] == h[0] ? 0 : 1);
    return std::min({sub, slow(r.subspan(1), h) + 1, slow(r, h.subspan(1)) + 1});
  };
  RngStream rng(4, 1);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::size_t> r(rng.below(6)), h(rng.below(6));
    for (auto& x : r) x = rng.below(3);
    for (auto& x : h) x = rng.below(3);
    EXPECT_EQ(edit_distance(r, h), slow(r, h));
  }
}

TEST(Metrics, EntropyExamples) {
  EXPECT_NEAR(entropy(std::vector<double>{1, 1, 1, 1}), std::log(4.0), 1e-12);
  EXPECT_EQ(entropy(std::vector<double>{0, 5, 0}), 0.0);
  EXPECT_EQ(entropy(std::vector<double>{0, 0}), 0.0);
}

TEST(Metrics, OverallRateWeightsLanguagesByTokens) {
  const fs::path dir = scratch("eval");
  TrainConfig c = small_config(dir);
  models::AsrModel model(c.model, 1);
  const auto corpus = generate_corpus(c.task, 12, "test");
  const EvalReport r = evaluate(model, corpus, c.task.num_languages);
  std::size_t errors = 0, tokens = 0;
  for (const auto& l : r.languages) {
    errors += l.errors;
    tokens += l.reference_tokens;
    if (l.reference_tokens) {
      EXPECT_DOUBLE_EQ(l.error_rate, static_cast<double>(l.errors) / l.reference_tokens);
    }
  }
  EXPECT_EQ(errors, r.errors);
  EXPECT_EQ(tokens, r.reference_tokens);
  EXPECT_DOUBLE_EQ(r.overall_error_rate, static_cast<double>(errors) / tokens);
  EXPECT_DOUBLE_EQ(r.token_accuracy(), 1.0 - r.overall_error_rate);
  EXPECT_GT(r.routed_tokens, 0u);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = small_config("x");
  c.optimizer.decay_steps = 9;
  c.decode.max_len = 11;
  const json doc = to_json(c);
  EXPECT_EQ(to_json(train_config_from_json(doc)), doc);
}

TEST(Config, OverridesAndUnknownFields) {
  json doc = to_json(TrainConfig{});
  apply_override(doc, "optimizer.lr", "0.002");
  apply_override(doc, "model.language_id.enabled", "on");
  apply_override(doc, "batch_size", "12");
  const TrainConfig c = train_config_from_json(doc);
  EXPECT_EQ(c.optimizer.lr, 0.002);
  EXPECT_TRUE(c.model.language_id.enabled);
  EXPECT_EQ(c.batch_size, 12u);
  EXPECT_THROW(apply_override(doc, "optimizer.learning_rate", "1"), ParameterError);
  EXPECT_THROW(apply_override(doc, "batch_size", "-3"), ParameterError);
  EXPECT_THROW(apply_override(doc, "batch_size", "3x"), ParameterError);
  json bad = doc;
  bad["optimizer"]["momentum"] = 0.9;
  EXPECT_THROW(train_config_from_json(bad), ParameterError);
  EXPECT_THROW(train_config_from_json(json::array()), ParameterError);
}

TEST(Config, ValidationCatchesInconsistencies) {
  TrainConfig c = small_config("x");
  c.task.feature_dim = 5;
  EXPECT_THROW(c.validate(), DimensionError);
  c = small_config("x");
  c.optimizer.decay_steps = 1;
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_config("x");
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Optimizer, LearningRateSchedule) {
  OptimizerConfig o;
  o.lr = 1.0;
  o.warmup_steps = 4;
  EXPECT_DOUBLE_EQ(learning_rate(o, 2), 0.5);
  EXPECT_DOUBLE_EQ(learning_rate(o, 4), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate(o, 1000), 1.0);
  o.decay_steps = 8;
  EXPECT_DOUBLE_EQ(learning_rate(o, 6), 0.5);
  EXPECT_DOUBLE_EQ(learning_rate(o, 8), 0.0);
  EXPECT_DOUBLE_EQ(learning_rate(o, 9), 0.0);
}

TEST(Optimizer, SamplingWeightsFollowTemperature) {
  std::vector<models::Utterance> corpus(10);
  for (std::size_t i = 0; i < 10; ++i) corpus[i].language = i < 8 ? 0 : 1;
  auto share = [&](double temperature) {
    const auto w = sampling_weights(corpus, temperature);
    double l0 = 0.0, all = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      all += w[i];
      if (i < 8) l0 += w[i];
    }
    return l0 / all;
  };
  EXPECT_NEAR(share(1.0), 0.8, 1e-12);
  EXPECT_NEAR(share(0.0), 0.5, 1e-12);
  EXPECT_NEAR(share(0.5), std::sqrt(8.0) / (std::sqrt(8.0) + std::sqrt(2.0)), 1e-12);
}

TEST(Training, ZeroStepsWritesInitialCheckpointOnly) {
  const fs::path dir = scratch("zero");
  TrainConfig c = small_config(dir);
  c.max_steps = 0;
  const TrainResult r = train(c);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_TRUE(fs::exists(dir / "checkpoint-000000.ckpt")) << r.checkpoint;
  EXPECT_EQ(slurp(dir / "metrics.jsonl"), "");
}

TEST(Training, MetricsOneRecordPerStepAndDeterministic) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const TrainResult ra = train(small_config(a));
  const TrainResult rb = train(small_config(b));
  EXPECT_EQ(ra.steps, 4u);
  EXPECT_EQ(ra.evaluations.size(), 2u);
  std::ifstream in(a / "metrics.jsonl");
  std::string line;
  std::size_t step = 0;
  while (std::getline(in, line)) {
    const json rec = json::parse(line);
    EXPECT_EQ(rec.at("step"), ++step);
    EXPECT_TRUE(rec.contains("total_loss"));
    EXPECT_EQ(rec.at("moe_layers").size(), rec.at("aux_losses").size());
  }
  EXPECT_EQ(step, 4u);
  EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(fs::path(ra.checkpoint)), slurp(fs::path(rb.checkpoint)));
}

TEST(Training, CheckpointRestoresModel) {
  const fs::path dir = scratch("restore");
  TrainConfig c = small_config(dir);
  models::AsrModel model(c.model, c.seed);
  const auto corpus = generate_corpus(c.task, 10, "train");
  const TrainResult r = train(c, model, corpus, {});
  std::optional<TrainConfig> loaded_cfg;
  const models::AsrModel loaded = load_model(r.checkpoint, &loaded_cfg);
  ASSERT_TRUE(loaded_cfg.has_value());
  EXPECT_EQ(loaded_cfg->batch_size, c.batch_size);
  for (const auto& [path, t] : model.params().all()) {
    const Tensor& u = loaded.params().get(path);
    EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), u.data().begin())) << path;
  }
}

TEST(Ablation, GridCsvAndParameterDelta) {
  const fs::path dir = scratch("ablation");
  TrainConfig base = small_config(dir);
  base.max_steps = 2;
  base.eval_every = 0;
  const auto grid = ablation_grid(base, {0, 2}, {false}, {true}, {false});
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_NE(grid[0].name, grid[1].name);
  EXPECT_EQ(apply_variant(base, grid[0]).model.moe_every, 0u);
  EXPECT_EQ(apply_variant(base, grid[1]).model.router.num_experts, 2u);
  const auto rows = run_ablation(base, grid, 6);
  ASSERT_EQ(rows.size(), 2u);
  const models::ModelConfig dense = apply_variant(base, grid[0]).model;
  const models::ModelConfig moe = apply_variant(base, grid[1]).model;
  const std::size_t layers = models::count_parameters(moe).moe_layers;
  EXPECT_EQ(rows[1].params - rows[0].params,
            layers * (models::expert_ffn_parameters(moe.d_model, moe.d_ff) + moe.d_model * 2));
  EXPECT_EQ(rows[0].params, models::count_parameters(dense).total);
  const std::string csv = ablation_csv(rows, base.task.num_languages);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,experts,params,streaming,lang_id,label_moe,rate_lang0,rate_lang1,rate_lang2,overall,drop_rate,steps");
  for (const auto& v : grid) EXPECT_TRUE(fs::exists(dir / v.name / "metrics.jsonl")) << v.name;
}

TEST(Ablation, VariantsFromJson) {
  const json j = json::parse(R"([{"name": "wide", "patch": {"model": {"d_ff": 48}}}])");
  const auto v = ablation_variants_from_json(j);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(apply_variant(small_config("x"), v[0]).model.d_ff, 48u);
  EXPECT_THROW(ablation_variants_from_json(json::parse(R"([{"patch": {}}])")), std::exception);
}

}  // namespace
}  // namespace moeasr::harness
