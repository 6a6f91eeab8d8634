#pragma once

// Two-stage pre-training, optional bootstrapped relative captions, per-task
// fine-tuning and conversion to and from checkpoints.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fadvlp/checkpoint.hpp"
#include "fadvlp/corpus.hpp"
#include "fadvlp/objectives.hpp"
#include "fadvlp/optim.hpp"
#include "fadvlp/triplets.hpp"
#include "fadvlp/vocab.hpp"

namespace fadvlp {

enum class Task { kItr, kTir, kIrtf, kCr, kSr, kIc, kRic };

const char* task_name(Task task);
Task task_from_name(const std::string& name);  // throws std::invalid_argument
const std::vector<Task>& all_tasks();

// [BOS] words [EOS]; overlong captions keep their first max_len - 2 words.
std::vector<int> encode_caption(const Vocabulary& vocab, const std::string& text, std::size_t max_len);

// Vocabulary over every caption and relative caption.
Vocabulary build_vocabulary(const Corpus& corpus, const std::vector<PseudoTriplet>& triplets);

// Rendered pixels for every corpus item, assembled into batches on demand.
class ImageBank {
 public:
  explicit ImageBank(const Corpus& corpus);
  Tensor<float> batch(const std::vector<std::size_t>& ids) const;
  std::size_t size() const { return count_; }

 private:
  std::size_t count_ = 0;
  std::vector<float> pixels_;
};

struct TrainingData {
  const Corpus* corpus = nullptr;
  Vocabulary vocab;
  ImageBank images;
  std::vector<std::vector<int>> captions;  // per corpus item
  std::vector<std::size_t> train_ids;
  // Triplets whose reference and target are both training items.
  std::vector<PseudoTriplet> triplets;
  std::vector<std::vector<int>> relative;  // per kept triplet

  TrainingData(const Corpus& corpus, Vocabulary vocab, std::vector<std::size_t> train_ids,
               const std::vector<PseudoTriplet>& all_triplets, std::size_t max_text_len);
};

struct TrainConfig {
  std::size_t stage1_steps = 2000;
  std::size_t stage2_steps = 1500;
  std::size_t finetune_steps = 600;
  std::size_t batch_size = 32;
  double learning_rate = 3e-4;
  std::function<double(std::size_t step, double base)> lr_schedule;  // constant when empty
  std::uint64_t seed = 0;  // bootstrap sampling stream
  LossWeights weights;
  bool bootstrap = false;
  double bootstrap_probability = 0.5;
  double top_p = 0.9;
  // Stage-2 steps trained on constructed captions before bootstrapping starts.
  std::size_t bootstrap_warmup = 0;
  std::size_t eval_every = 0;  // 0 disables on_eval
  std::function<void(const std::string& phase, std::size_t step)> on_eval;
  std::function<void(const std::string& line)> on_progress;
  std::size_t progress_every = 100;

  void validate() const;
};

struct TrainLogRow {
  std::string stage;  // "1", "2" or the fine-tune task name
  std::size_t step = 0;
  LossBreakdown parts;
  double classification = 0.0;
  double wall_ms = 0.0;
};

std::string train_log_csv(const std::vector<TrainLogRow>& rows);
// Deterministic loss curve (no timings).
std::string loss_curve_csv(const std::vector<TrainLogRow>& rows);

// Linear classifier over the Aligner-mode multimodal [EOS] state.
struct ClassifierHead {
  ParameterStore<float> store;
  Linear<float> linear;
  std::vector<std::string> classes;

  ClassifierHead(std::size_t width, std::vector<std::string> class_names, std::uint64_t seed);
};

struct TrainerState {
  FadVlpModel<float> model;
  AdamState<float> optimizer;
  std::mt19937_64 rng;
  std::optional<ClassifierHead> head;
  std::string task;
  std::uint64_t stage1_steps = 0;
  std::uint64_t stage2_steps = 0;
  std::uint64_t finetune_steps = 0;
  std::uint64_t bootstrapped_rows = 0;
  std::vector<TrainLogRow> log;

  TrainerState(const ModelConfig& config, std::uint64_t seed);
};

// Pair and triplet batch assembly.
PairBatch<float> make_pair_batch(const TrainingData& data, const std::vector<std::size_t>& ids);
TripletBatch<float> make_triplet_batch(const TrainingData& data, const std::vector<std::size_t>& triplet_rows);

// Each row independently, with the given probability, gets a nucleus-sampled
// relative caption for its (reference, target) images.
TripletBatch<float> bootstrap_relative_captions(const FadVlpModel<float>& model, const TripletBatch<float>& batch,
                                                double probability, double top_p, std::mt19937_64& rng,
                                                std::size_t* replaced = nullptr);

void pretrain(TrainerState& state, const TrainingData& data, const TrainConfig& cfg);

// Labels of every corpus item for cr (category) or sr (subcategory).
std::vector<std::string> class_names(const Corpus& corpus, Task task);
std::vector<std::size_t> class_labels(const Corpus& corpus, Task task);

// Fresh optimizer; cr/sr attach a new head. Runs cfg.finetune_steps steps.
void finetune(TrainerState& state, Task task, const TrainingData& data, const TrainConfig& cfg);

// [B, classes] logits for (image, caption) rows.
Tensor<float> classify_logits(const FadVlpModel<float>& model, const ClassifierHead& head,
                              const Tensor<float>& images, const TextBatch& captions);

Checkpoint to_checkpoint(const TrainerState& state, const Vocabulary& vocab);
// Restores model, optimizer, rng, head and counters.
TrainerState state_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fadvlp
