#pragma once

// On-disk model directory:
//   config.json         ModelConfig
//   model.safetensors   weights
//   vocab.txt           closed fixture vocabulary, one token per line
//     or vocab.json + merges.txt for byte-level BPE

#include <filesystem>
#include <memory>
#include <string>

#include "mecheval/runtime/config.hpp"
#include "mecheval/runtime/model.hpp"
#include "mecheval/runtime/tensor_archive.hpp"
#include "mecheval/runtime/tokenizer.hpp"

namespace mecheval {

struct LoadedModel {
  Model model;
  std::shared_ptr<const Tokenizer> tokenizer;
};

inline std::shared_ptr<const Tokenizer> load_tokenizer(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "vocab.txt"))
    return std::make_shared<FixtureTokenizer>(FixtureTokenizer::load((dir / "vocab.txt").string()));
  if (std::filesystem::exists(dir / "vocab.json") && std::filesystem::exists(dir / "merges.txt"))
    return std::make_shared<BpeTokenizer>(
        BpeTokenizer::load((dir / "vocab.json").string(), (dir / "merges.txt").string()));
  fail(ErrorKind::kModelLoad, "no tokenizer files (vocab.txt or vocab.json + merges.txt) in " + dir.string());
}

inline LoadedModel load_model_dir(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::kModelLoad,
          "model directory " + dir.string() + " does not exist");
  ModelConfig config;
  try {
    config = load_model_config((dir / "config.json").string());
  } catch (const Error& e) {
    fail(ErrorKind::kModelLoad, e.what());
  }
  const auto archive = TensorArchive::load((dir / "model.safetensors").string());
  auto tokenizer = load_tokenizer(dir);
  require(tokenizer->vocab_size() <= config.vocab_size, ErrorKind::kModelLoad,
          "tokenizer vocabulary larger than model vocab_size");
  return LoadedModel{Model::load(archive, config), std::move(tokenizer)};
}

inline void save_model_dir(const std::filesystem::path& dir, const TensorArchive& archive,
                           const ModelConfig& config, const FixtureTokenizer& vocab) {
  std::filesystem::create_directories(dir);
  save_model_config(config, (dir / "config.json").string());
  archive.save((dir / "model.safetensors").string());
  vocab.save((dir / "vocab.txt").string());
}

}  // namespace mecheval
