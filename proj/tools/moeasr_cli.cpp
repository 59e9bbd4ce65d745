// Copyright 2026 The moeasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// moeasr: generate corpora, train, evaluate and ablate through the C API.
// Every leaf of the training config is exposed as --<dotted.path>.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moeasr/moeasr.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliError : std::runtime_error {
  CliError(moeasr_status s, const std::string& what) : std::runtime_error(what), status(s) {}
  moeasr_status status;
};

void check(moeasr_status s, const char* call) {
  if (s != MOEASR_OK) {
    throw CliError(s, std::string(call) + ": " + moeasr_status_name(s) + ": " +
                          moeasr_last_error());
  }
}

// Takes ownership of a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  moeasr_string_free(s);
  return out;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten(value, path, out);
    } else {
      out.emplace_back(path, value);
    }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError(MOEASR_ERR_IO, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw CliError(MOEASR_ERR_IO, "cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

class ConfigFlags {
 public:
  // Registers one flag per config leaf except seed and output_dir, which every
  // subcommand declares itself.
  void attach(CLI::App& app) {
    moeasr_config* defaults = nullptr;
    check(moeasr_config_create(nullptr, &defaults), "moeasr_config_create");
    char* text = nullptr;
    check(moeasr_config_to_json(defaults, &text), "moeasr_config_to_json");
    moeasr_config_destroy(defaults);
    std::vector<std::pair<std::string, json>> leaves;
    flatten(json::parse(take(text)), "", leaves);

    app.add_option("--preset", preset_, "Model preset (s2s-desk, tt-desk, s2s-paper, ...)")
        ->group("Config");
    app.add_option("--config", config_file_, "TrainConfig JSON file")
        ->check(CLI::ExistingFile)
        ->group("Config");
    for (const auto& [path, value] : leaves) {
      if (path == "seed" || path == "output_dir") continue;
      std::string hint = value.dump();
      if (hint.size() > 40) hint = hint.substr(0, 37) + "...";
      app.add_option("--" + path, values_[path], "default " + hint)->group("Config fields");
    }
  }

  moeasr_config* build(std::optional<std::uint64_t> seed, const std::string& output_dir) const {
    moeasr_config* cfg = nullptr;
    if (!config_file_.empty()) {
      if (!preset_.empty()) throw CliError(MOEASR_ERR_INVALID_ARGUMENT, "--preset and --config are exclusive");
      check(moeasr_config_from_json(read_file(config_file_).c_str(), &cfg), "moeasr_config_from_json");
    } else {
      check(moeasr_config_create(preset_.empty() ? nullptr : preset_.c_str(), &cfg),
            "moeasr_config_create");
    }
    try {
      for (const auto& [path, value] : values_) {
        if (value) check(moeasr_config_set(cfg, path.c_str(), value->c_str()), path.c_str());
      }
      if (seed) check(moeasr_config_set(cfg, "seed", std::to_string(*seed).c_str()), "--seed");
      check(moeasr_config_set(cfg, "output_dir", output_dir.c_str()), "--output-dir");
      check(moeasr_config_validate(cfg), "config");
    } catch (...) {
      moeasr_config_destroy(cfg);
      throw;
    }
    return cfg;
  }

 private:
  std::string preset_;
  std::string config_file_;
  std::map<std::string, std::optional<std::string>> values_;
};

struct ConfigHandle {
  explicit ConfigHandle(moeasr_config* c) : ptr(c) {}
  ~ConfigHandle() { moeasr_config_destroy(ptr); }
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
  moeasr_config* ptr;
};

std::string config_json(const ConfigHandle& cfg) {
  char* text = nullptr;
  check(moeasr_config_to_json(cfg.ptr, &text), "moeasr_config_to_json");
  return take(text);
}

std::vector<int> parse_flags(const std::vector<std::string>& values, const char* axis) {
  std::vector<int> out;
  for (const auto& v : values) {
    if (v == "1" || v == "on" || v == "true") {
      out.push_back(1);
    } else if (v == "0" || v == "off" || v == "false") {
      out.push_back(0);
    } else {
      throw CliError(MOEASR_ERR_INVALID_ARGUMENT,
                     std::string("--") + axis + ": expected on/off, got '" + v + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts speech recognition toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(moeasr_version()));

  std::string output_dir = "runs";
  std::optional<std::uint64_t> seed;

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic multilingual corpus as JSON lines");
  ConfigFlags gen_flags;
  gen_flags.attach(*gen);
  std::string gen_split = "train";
  std::size_t gen_count = 100;
  gen->add_option("--output-dir", output_dir, "Directory for <split>.jsonl")->capture_default_str();
  gen->add_option("--seed", seed, "Run seed (the corpus itself follows --task.seed)");
  gen->add_option("--split", gen_split, "Split name, which also selects the random stream")
      ->capture_default_str();
  gen->add_option("--count", gen_count, "Number of utterances")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a model; metrics go to metrics.jsonl");
  ConfigFlags train_flags;
  train_flags.attach(*train);
  std::string train_corpus;
  train->add_option("--output-dir", output_dir, "Run directory")->capture_default_str();
  train->add_option("--seed", seed, "Seed for parameters, dropout, jitter and sampling")
      ->required();
  train->add_option("--corpus", train_corpus, "Training corpus (default: generated)")
      ->check(CLI::ExistingFile);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Greedy-decode a corpus and report error rates");
  std::string checkpoint, eval_corpus, eval_split = "test";
  std::size_t eval_count = 100;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--corpus", eval_corpus, "Corpus file (default: generated from the run's task)")
      ->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "Split to generate without --corpus")
      ->capture_default_str();
  eval->add_option("--count", eval_count, "Utterances to generate without --corpus")
      ->capture_default_str();
  eval->add_option("--output-dir", output_dir, "Directory for eval_report.json")
      ->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train a grid of variants and tabulate error rates");
  ConfigFlags ablate_flags;
  ablate_flags.attach(*ablate);
  std::string grid_file;
  std::vector<std::size_t> experts{0, 4};
  // Empty streaming / label-moe lists keep the base config's setting.
  std::vector<std::string> streaming, language_id{"off", "on"}, label_moe;
  std::size_t test_utterances = 100;
  ablate->add_option("--output-dir", output_dir, "Directory for ablation.csv and runs")
      ->capture_default_str();
  ablate->add_option("--seed", seed, "Seed shared by every variant")->required();
  auto* grid_opt = ablate->add_option("--grid", grid_file, "JSON array of {name, patch}")
                       ->check(CLI::ExistingFile);
  ablate->add_option("--experts", experts, "Expert counts, 0 = dense")
      ->delimiter(',')
      ->excludes(grid_opt)
      ->capture_default_str();
  ablate->add_option("--streaming", streaming, "Streaming encoder on/off (tt only; default: as configured)")
      ->delimiter(',')
      ->excludes(grid_opt);
  ablate->add_option("--language-id", language_id, "Language-ID input on/off")
      ->delimiter(',')
      ->excludes(grid_opt);
  ablate->add_option("--label-moe", label_moe, "Label-decoder MoE projection on/off (tt only; default: as configured)")
      ->delimiter(',')
      ->excludes(grid_opt);
  ablate->add_option("--test-utterances", test_utterances, "Held-out test size")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    fs::create_directories(output_dir);
    const fs::path out(output_dir);

    if (*gen) {
      ConfigHandle cfg(gen_flags.build(seed, output_dir));
      const fs::path path = out / (gen_split + ".jsonl");
      check(moeasr_generate_corpus(cfg.ptr, gen_split.c_str(), gen_count, path.c_str()),
            "moeasr_generate_corpus");
      std::cout << "wrote " << gen_count << " utterances to " << path.string() << "\n";
    } else if (*train) {
      ConfigHandle cfg(train_flags.build(seed, output_dir));
      char* summary = nullptr;
      check(moeasr_train(cfg.ptr, train_corpus.empty() ? nullptr : train_corpus.c_str(), &summary),
            "moeasr_train");
      const std::string text = take(summary);
      write_file(out / "summary.json", text);
      std::cout << text << "\n";
    } else if (*eval) {
      char* report = nullptr;
      check(moeasr_evaluate(checkpoint.c_str(), eval_corpus.empty() ? nullptr : eval_corpus.c_str(),
                            eval_split.c_str(), eval_count, &report),
            "moeasr_evaluate");
      const std::string text = take(report);
      write_file(out / "eval_report.json", text);
      std::cout << text << "\n";
    } else if (*ablate) {
      ConfigHandle cfg(ablate_flags.build(seed, output_dir));
      std::string grid;
      if (!grid_file.empty()) {
        grid = read_file(grid_file);
      } else {
        const nlohmann::json base = nlohmann::json::parse(config_json(cfg));
        auto or_base = [](std::vector<std::string> values, bool current) {
          if (values.empty()) values.push_back(current ? "on" : "off");
          return values;
        };
        const auto s = parse_flags(
            or_base(streaming, base["model"]["streaming"]["enabled"].get<bool>()), "streaming");
        const auto l = parse_flags(language_id, "language-id");
        const auto m = parse_flags(
            or_base(label_moe, base["model"]["label_decoder"]["moe_projection"].get<bool>()),
            "label-moe");
        char* text = nullptr;
        check(moeasr_ablation_grid(cfg.ptr, experts.data(), experts.size(), s.data(), s.size(),
                                   l.data(), l.size(), m.data(), m.size(), &text),
              "moeasr_ablation_grid");
        grid = take(text);
      }
      write_file(out / "grid.json", grid);
      write_file(out / "base_config.json", config_json(cfg));
      char* csv = nullptr;
      check(moeasr_ablate(cfg.ptr, grid.c_str(), test_utterances, &csv), "moeasr_ablate");
      const std::string text = take(csv);
      write_file(out / "ablation.csv", text);
      std::cout << text;
    }
  } catch (const CliError& e) {
    std::cerr << "moeasr: " << e.what() << "\n";
    return e.status == MOEASR_ERR_INVALID_ARGUMENT || e.status == MOEASR_ERR_PARAMETER ||
                   e.status == MOEASR_ERR_DIMENSION
               ? 2
               : 1;
  } catch (const std::exception& e) {
    std::cerr << "moeasr: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
