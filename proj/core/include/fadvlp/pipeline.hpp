#pragma once

// Run configuration and the stage functions shared by the command-line tool
// and the acceptance harness: data generation, triplet building, training and
// per-task evaluation over the seeded holdout split.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadvlp/evaluation.hpp"
#include "fadvlp/trainer.hpp"

namespace fadvlp {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::size_t items = 2000;
  double holdout_fraction = 0.03;
};

struct EvalConfig {
  CandidateProtocol protocol;
  std::vector<std::size_t> irtf_ks{10, 50};
  std::size_t irtf_queries_per_ref = 3;
  double ric_top_p = 0.9;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  TripletConfig triplets;  // seed is derived from the run seed
  ModelConfig model;       // vocab_size and init_seed are derived
  TrainConfig train;       // seed is derived
  EvalConfig eval;
  std::vector<Task> tasks = all_tasks();

  RunConfig();
  // Throws ConfigError on the first invalid field.
  void validate() const;
};

// Defaults merged with the document; unknown keys and type mismatches throw
// ConfigError.
RunConfig run_config_from_json(const std::string& text);
// The effective configuration, every field spelled out.
std::string run_config_to_json(const RunConfig& config);

// Independent stream seeds from the run seed, one per named purpose.
std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& purpose);

Corpus make_corpus(const RunConfig& config);
TripletDataset make_triplets(const Corpus& corpus, const RunConfig& config);
HoldoutSplit make_split(const Corpus& corpus, const RunConfig& config);

// Model config with the vocabulary size and derived init seed filled in.
ModelConfig effective_model_config(const RunConfig& config, const Vocabulary& vocab);
TrainConfig effective_train_config(const RunConfig& config, const std::string& phase);

// Evaluation of one task on the holdout split. data must be built over the
// same corpus; the model's vocabulary is data.vocab.
MetricsReport evaluate_task(const TrainerState& state, Task task, const Corpus& corpus, const TrainingData& data,
                            const HoldoutSplit& split, const RunConfig& config);

// IRTF queries over the holdout references, grouped by reference category.
std::vector<IrtfQuery> irtf_queries(const Corpus& corpus, const HoldoutSplit& split, const RunConfig& config);

}  // namespace fadvlp
