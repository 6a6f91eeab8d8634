#pragma once

// Single-file checkpoints: "FADVLPCK", a little-endian u64 header length, a
// JSON header (version, model config, vocabulary, counters, rng state and an
// array manifest with offsets), then the float32 payload.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadvlp/model.hpp"

namespace fadvlp {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocabulary;  // words after the special tokens
  // Model parameters ("model."), optimizer moments ("adam.m.", "adam.v.")
  // and task heads ("head.").
  std::vector<NamedArray> arrays;
  std::int64_t optimizer_step = 0;
  double learning_rate = 0.0;
  std::string rng_state;
  std::map<std::string, std::uint64_t> counters;
  std::string task;                  // fine-tuned task, empty after pre-training
  std::vector<std::string> classes;  // label names for classification heads

  const NamedArray* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies "model." arrays into the model. Throws CheckpointError on a config
// mismatch or a missing/mis-shaped parameter; the model is untouched then.
void load_model_parameters(const Checkpoint& ckpt, FadVlpModel<float>& model);

}  // namespace fadvlp
