// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <moeasr/moeasr.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string take(char* s) {
  std::string out = s ? s : "";
  moeasr_string_free(s);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("moeasr_capi_" + name);
  fs::remove_all(p);
  return p;
}

struct Config {
  moeasr_config* handle = nullptr;
  explicit Config(const char* preset) { EXPECT_EQ(moeasr_config_create(preset, &handle), MOEASR_OK); }
  ~Config() { moeasr_config_destroy(handle); }
  void set(const char* path, const std::string& value) {
    ASSERT_EQ(moeasr_config_set(handle, path, value.c_str()), MOEASR_OK) << moeasr_last_error();
  }
};

void shrink(Config& c, const fs::path& dir) {
  c.set("model.d_model", "16");
  c.set("model.d_ff", "24");
  c.set("model.n_heads", "2");
  c.set("model.conv_channels", "2");
  c.set("model.router.num_experts", "2");
  c.set("batch_size", "4");
  c.set("max_steps", "3");
  c.set("eval_every", "0");
  c.set("train_utterances", "16");
  c.set("eval_utterances", "4");
  c.set("seed", "2");
  c.set("output_dir", dir.string());
}

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STRNE(moeasr_version(), "");
  EXPECT_STREQ(moeasr_status_name(MOEASR_OK), "ok");
  EXPECT_STRNE(moeasr_status_name(MOEASR_ERR_DIMENSION), moeasr_status_name(MOEASR_ERR_PARAMETER));
}

TEST(CApi, ConfigErrorsMapToStatus) {
  Config c("s2s-desk");
  EXPECT_EQ(moeasr_config_set(c.handle, "model.no_such_field", "1"), MOEASR_ERR_PARAMETER);
  EXPECT_NE(std::string(moeasr_last_error()).find("no_such_field"), std::string::npos);
  EXPECT_EQ(moeasr_config_set(nullptr, "seed", "1"), MOEASR_ERR_INVALID_ARGUMENT);
  moeasr_config* out = nullptr;
  EXPECT_EQ(moeasr_config_create("no-such-preset", &out), MOEASR_ERR_PARAMETER);
  EXPECT_EQ(moeasr_config_from_json("{not json", &out), MOEASR_ERR_INVALID_ARGUMENT);
  c.set("model.d_model", "30");
  EXPECT_EQ(moeasr_config_validate(c.handle), MOEASR_ERR_PARAMETER);
  c.set("model.d_model", "64");
  c.set("task.feature_dim", "7");
  EXPECT_EQ(moeasr_config_validate(c.handle), MOEASR_ERR_DIMENSION);
}

TEST(CApi, ConfigJsonRoundTrip) {
  Config c("tt-desk");
  c.set("optimizer.lr", "0.004");
  char* text = nullptr;
  ASSERT_EQ(moeasr_config_to_json(c.handle, &text), MOEASR_OK);
  const std::string doc = take(text);
  EXPECT_EQ(json::parse(doc)["optimizer"]["lr"], 0.004);
  EXPECT_EQ(json::parse(doc)["model"]["family"], "tt");
  moeasr_config* copy = nullptr;
  ASSERT_EQ(moeasr_config_from_json(doc.c_str(), &copy), MOEASR_OK);
  ASSERT_EQ(moeasr_config_to_json(copy, &text), MOEASR_OK);
  EXPECT_EQ(take(text), doc);
  moeasr_config_destroy(copy);
}

TEST(CApi, RoutingPrimitives) {
  std::size_t cap = 0;
  ASSERT_EQ(moeasr_expert_capacity(10, 4, 1.5, &cap), MOEASR_OK);
  EXPECT_EQ(cap, 4u);
  EXPECT_EQ(moeasr_expert_capacity(10, 0, 1.5, &cap), MOEASR_ERR_PARAMETER);
  const double probs[] = {0.9, 0.1, 0.8, 0.2, 0.7, 0.3};
  int64_t assignment[3], slot[3];
  std::size_t dropped = 0;
  ASSERT_EQ(moeasr_plan_dispatch(probs, 3, 2, 2, assignment, slot, &dropped), MOEASR_OK);
  EXPECT_EQ(dropped, 1u);
  EXPECT_EQ(assignment[2], -1);
  EXPECT_EQ(slot[1], 1);
  const double uniform[] = {0.5, 0.5, 0.5, 0.5};
  double aux = 0.0;
  ASSERT_EQ(moeasr_aux_loss(uniform, 2, 2, 0.01, &aux), MOEASR_OK);
  EXPECT_NEAR(aux, 0.01, 1e-15);
}

TEST(CApi, RnntLossAndEditDistance) {
  std::vector<double> lattice(2 * 2 * 2, std::log(0.5));
  std::vector<double> grad(lattice.size());
  const std::size_t target[] = {1};
  double loss = 0.0;
  ASSERT_EQ(moeasr_rnnt_loss(lattice.data(), 2, 1, 2, target, 0, &loss, grad.data()), MOEASR_OK);
  EXPECT_NEAR(loss, std::log(4.0), 1e-12);
  double g = 0.0;
  for (double v : grad) g += v;
  EXPECT_NEAR(g, -3.0, 1e-12);  // each alignment has three edges
  EXPECT_EQ(moeasr_rnnt_loss(lattice.data(), 2, 1, 2, target, 1, &loss, nullptr), MOEASR_ERR_PARAMETER);
  const std::size_t ref[] = {1, 2, 3}, hyp[] = {1, 3};
  std::size_t d = 0;
  ASSERT_EQ(moeasr_edit_distance(ref, 3, hyp, 2, &d), MOEASR_OK);
  EXPECT_EQ(d, 1u);
}

TEST(CApi, ModelDecodeSaveLoad) {
  Config c("tt-desk");
  const fs::path dir = scratch("model");
  fs::create_directories(dir);
  moeasr_model* model = nullptr;
  ASSERT_EQ(moeasr_model_create(c.handle, &model), MOEASR_OK) << moeasr_last_error();
  std::size_t params = 0;
  ASSERT_EQ(moeasr_model_num_parameters(model, &params), MOEASR_OK);
  EXPECT_GT(params, 0u);
  std::vector<double> features(20 * 16, 0.25);
  std::vector<std::size_t> tokens(256);
  std::size_t len = 0;
  ASSERT_EQ(moeasr_model_decode(model, features.data(), 20, 16, 1, tokens.data(), tokens.size(), &len),
            MOEASR_OK);
  EXPECT_EQ(moeasr_model_decode(model, features.data(), 20, 15, 1, tokens.data(), tokens.size(), &len),
            MOEASR_ERR_DIMENSION);
  EXPECT_EQ(moeasr_model_decode(model, features.data(), 20, 16, 7, tokens.data(), tokens.size(), &len),
            MOEASR_ERR_PARAMETER);
  const std::string ckpt = (dir / "m.ckpt").string();
  ASSERT_EQ(moeasr_model_save(model, ckpt.c_str()), MOEASR_OK);
  moeasr_model* loaded = nullptr;
  ASSERT_EQ(moeasr_model_load(ckpt.c_str(), &loaded), MOEASR_OK) << moeasr_last_error();
  std::vector<std::size_t> again(256);
  std::size_t len2 = 0;
  ASSERT_EQ(moeasr_model_decode(loaded, features.data(), 20, 16, 1, again.data(), again.size(), &len2),
            MOEASR_OK);
  ASSERT_EQ(len, len2);
  EXPECT_TRUE(std::equal(tokens.begin(), tokens.begin() + len, again.begin()));
  if (len > 0) {
    EXPECT_EQ(moeasr_model_decode(loaded, features.data(), 20, 16, 1, again.data(), len - 1, &len2),
              MOEASR_ERR_BUFFER_TOO_SMALL);
  }
  EXPECT_EQ(moeasr_model_load((dir / "missing.ckpt").string().c_str(), &loaded), MOEASR_ERR_IO);
  moeasr_model_destroy(loaded);
  moeasr_model_destroy(model);
}

TEST(CApi, GenerateTrainEvaluateAblate) {
  const fs::path dir = scratch("pipeline");
  Config c("s2s-desk");
  shrink(c, dir);
  fs::create_directories(dir);
  const std::string corpus = (dir / "test.jsonl").string();
  ASSERT_EQ(moeasr_generate_corpus(c.handle, "test", 5, corpus.c_str()), MOEASR_OK);
  char* out = nullptr;
  ASSERT_EQ(moeasr_train(c.handle, nullptr, &out), MOEASR_OK) << moeasr_last_error();
  const json summary = json::parse(take(out));
  EXPECT_EQ(summary.at("steps"), 3);
  const std::string ckpt = summary.at("checkpoint");
  ASSERT_EQ(moeasr_evaluate(ckpt.c_str(), corpus.c_str(), nullptr, 0, &out), MOEASR_OK)
      << moeasr_last_error();
  const json report = json::parse(take(out));
  EXPECT_TRUE(report.contains("overall_error_rate"));

  const std::size_t experts[] = {0, 2};
  const int off[] = {0}, on[] = {1};
  ASSERT_EQ(moeasr_ablation_grid(c.handle, experts, 2, off, 1, on, 1, off, 1, &out), MOEASR_OK);
  const std::string grid = take(out);
  EXPECT_EQ(json::parse(grid).size(), 2u);
  c.set("output_dir", (dir / "ablation").string());
  ASSERT_EQ(moeasr_ablate(c.handle, grid.c_str(), 4, &out), MOEASR_OK) << moeasr_last_error();
  const std::string csv = take(out);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

}  // namespace
