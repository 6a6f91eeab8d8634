#include "fadvlp/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fadvlp/random.hpp"

namespace fadvlp {

const std::vector<Task>& all_tasks() {
  static const std::vector<Task> tasks = {Task::kItr, Task::kTir, Task::kIrtf, Task::kCr,
                                          Task::kSr,  Task::kIc,  Task::kRic};
  return tasks;
}

const char* task_name(Task task) {
  switch (task) {
    case Task::kItr:
      return "itr";
    case Task::kTir:
      return "tir";
    case Task::kIrtf:
      return "irtf";
    case Task::kCr:
      return "cr";
    case Task::kSr:
      return "sr";
    case Task::kIc:
      return "ic";
    case Task::kRic:
      return "ric";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  for (Task t : all_tasks())
    if (name == task_name(t)) return t;
  throw std::invalid_argument("unknown task '" + name + "' (expected itr, tir, irtf, cr, sr, ic or ric)");
}

std::vector<int> encode_caption(const Vocabulary& vocab, const std::string& text, std::size_t max_len) {
  std::vector<int> ids = vocab.encode(text);
  if (ids.size() > max_len) {
    ids.resize(max_len - 1);
    ids.push_back(kEos);
  }
  return ids;
}

Vocabulary build_vocabulary(const Corpus& corpus, const std::vector<PseudoTriplet>& triplets) {
  std::vector<std::string> texts;
  texts.reserve(corpus.size() + triplets.size());
  for (const auto& item : corpus.items) texts.push_back(item.caption);
  for (const auto& t : triplets) texts.push_back(t.relative_caption);
  return Vocabulary::from_texts(texts);
}

ImageBank::ImageBank(const Corpus& corpus) : count_(corpus.size()) {
  constexpr std::size_t per = kImageSide * kImageSide * kImageChannels;
  pixels_.reserve(count_ * per);
  for (const auto& item : corpus.items) {
    const auto px = item_pixels(corpus.schema, item);
    pixels_.insert(pixels_.end(), px.begin(), px.end());
  }
}

Tensor<float> ImageBank::batch(const std::vector<std::size_t>& ids) const {
  constexpr std::size_t per = kImageSide * kImageSide * kImageChannels;
  std::vector<float> out(ids.size() * per);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= count_) throw std::out_of_range("image id " + std::to_string(ids[i]) + " outside the corpus");
    std::copy_n(pixels_.begin() + static_cast<std::ptrdiff_t>(ids[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return Tensor<float>(Shape{ids.size(), kImageSide, kImageSide, kImageChannels}, std::move(out));
}

TrainingData::TrainingData(const Corpus& c, Vocabulary v, std::vector<std::size_t> train,
                           const std::vector<PseudoTriplet>& all_triplets, std::size_t max_text_len)
    : corpus(&c), vocab(std::move(v)), images(c), train_ids(std::move(train)) {
  captions.reserve(c.size());
  for (const auto& item : c.items) captions.push_back(encode_caption(vocab, item.caption, max_text_len));
  const std::set<std::size_t> in_train(train_ids.begin(), train_ids.end());
  for (const auto& t : all_triplets) {
    if (t.ref_id >= c.size() || t.tgt_id >= c.size()) {
      throw std::invalid_argument("triplet references item " + std::to_string(std::max(t.ref_id, t.tgt_id)) +
                                  " outside the corpus");
    }
    if (!in_train.count(t.ref_id) || !in_train.count(t.tgt_id)) continue;
    triplets.push_back(t);
    relative.push_back(encode_caption(vocab, t.relative_caption, max_text_len));
  }
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(bootstrap_probability >= 0.0 && bootstrap_probability <= 1.0)) {
    throw std::invalid_argument("bootstrap probability must be in [0, 1]");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
}

namespace {

std::string format_row(const TrainLogRow& r, bool with_time) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%zu,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.step, r.stage.c_str(), r.parts.cmc,
                r.parts.iclm, r.parts.hmc, r.parts.rclm, r.classification, r.parts.total);
  std::string s = buf;
  if (with_time) {
    std::snprintf(buf, sizeof(buf), ",%.3f", r.wall_ms);
    s += buf;
  }
  return s;
}

}  // namespace

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "step,stage,cmc,iclm,hmc,rclm,cls,total,wall_ms\n";
  for (const auto& r : rows) out += format_row(r, true) + "\n";
  return out;
}

std::string loss_curve_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "step,stage,cmc,iclm,hmc,rclm,cls,total\n";
  for (const auto& r : rows) out += format_row(r, false) + "\n";
  return out;
}

ClassifierHead::ClassifierHead(std::size_t width, std::vector<std::string> class_names, std::uint64_t seed)
    : store(seed), classes(std::move(class_names)) {
  if (classes.size() < 2) throw std::invalid_argument("a classifier needs at least two classes");
  linear = Linear<float>::create(store, "classifier", width, classes.size());
}

TrainerState::TrainerState(const ModelConfig& config, std::uint64_t seed) : model(config), rng(seed) {}

PairBatch<float> make_pair_batch(const TrainingData& data, const std::vector<std::size_t>& ids) {
  PairBatch<float> b;
  b.ids = ids;
  b.images = data.images.batch(ids);
  std::vector<std::vector<int>> rows;
  rows.reserve(ids.size());
  for (std::size_t id : ids) rows.push_back(data.captions.at(id));
  std::size_t max_len = 0;
  for (const auto& r : rows) max_len = std::max(max_len, r.size());
  b.captions = TextBatch::from_sequences(rows, max_len);
  return b;
}

TripletBatch<float> make_triplet_batch(const TrainingData& data, const std::vector<std::size_t>& triplet_rows) {
  TripletBatch<float> b;
  std::vector<std::vector<int>> rows;
  std::size_t max_len = 0;
  for (std::size_t r : triplet_rows) {
    const auto& t = data.triplets.at(r);
    b.ref_ids.push_back(t.ref_id);
    b.tgt_ids.push_back(t.tgt_id);
    rows.push_back(data.relative[r]);
    max_len = std::max(max_len, rows.back().size());
  }
  b.ref_images = data.images.batch(b.ref_ids);
  b.tgt_images = data.images.batch(b.tgt_ids);
  b.relative = TextBatch::from_sequences(rows, max_len);
  return b;
}

namespace {

std::vector<int> row_tokens(const TextBatch& text, std::size_t row) {
  const auto begin = text.ids.begin() + static_cast<std::ptrdiff_t>(row * text.len);
  return std::vector<int>(begin, begin + static_cast<std::ptrdiff_t>(text.eos_index[row] + 1));
}

Tensor<float> gather_images(const Tensor<float>& images, const std::vector<std::size_t>& rows) {
  const std::size_t per = images.numel() / images.dim(0);
  std::vector<float> out(rows.size() * per);
  const auto src = images.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(i * per));
  Shape shape = images.shape();
  shape[0] = rows.size();
  return Tensor<float>(shape, std::move(out));
}

}  // namespace

TripletBatch<float> bootstrap_relative_captions(const FadVlpModel<float>& model, const TripletBatch<float>& batch,
                                                double probability, double top_p, std::mt19937_64& rng,
                                                std::size_t* replaced) {
  const std::size_t n = batch.ref_ids.size();
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < n; ++i)
    if (uniform01(rng) < probability) chosen.push_back(i);
  const std::uint64_t seed = rng();
  if (replaced) *replaced = chosen.size();
  if (chosen.empty()) return batch;
  std::vector<std::vector<int>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(row_tokens(batch.relative, i));
  {
    NoGradScope<float> no_grad;
    const auto ref = model.encode_images(gather_images(batch.ref_images, chosen));
    const auto tgt = model.encode_images(gather_images(batch.tgt_images, chosen));
    DecodeOptions options;
    options.greedy = false;
    options.top_p = top_p;
    options.seed = seed;
    options.max_len = model.config().max_text_len - 1;
    const auto generated = model.generate(Mode::kRelativeCaption, {ref, tgt}, options);
    const std::size_t max_len = model.config().max_text_len;
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      std::vector<int> seq{kBos};
      for (int id : generated[k]) {
        if (id == kEos) break;
        seq.push_back(id);
      }
      if (seq.size() > max_len - 1) seq.resize(max_len - 1);
      seq.push_back(kEos);
      rows[chosen[k]] = std::move(seq);
    }
  }
  TripletBatch<float> out = batch;
  std::size_t max_len = 0;
  for (const auto& r : rows) max_len = std::max(max_len, r.size());
  out.relative = TextBatch::from_sequences(rows, max_len);
  return out;
}

namespace {

// Epoch-wise shuffled cursor over [0, n).
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::size_t batch) : n_(n), batch_(batch) {
    if (n < batch) throw std::invalid_argument("dataset of " + std::to_string(n) + " rows is smaller than one batch");
  }
  std::vector<std::size_t> next(std::mt19937_64& rng) {
    if (order_.empty() || pos_ + batch_ > n_) {
      order_.resize(n_);
      for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
      shuffle_in_place(order_, rng);
      pos_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

 private:
  std::size_t n_, batch_, pos_ = 0;
  std::vector<std::size_t> order_;
};

using Clock = std::chrono::steady_clock;

// One optimizer update on the given loss; returns the loss breakdown.
template <typename LossFn>
void optimize(TrainerState& state, const TrainConfig& cfg, std::size_t step, LossFn&& loss_fn) {
  std::vector<Tensor<float>> params = state.model.parameters();
  if (state.head) {
    for (auto& t : state.head->store.tensors()) params.push_back(t);
  }
  for (auto& p : params) p.zero_grad();  // parameters off this step's tape get no stale gradient
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    Tensor<float> loss = loss_fn();
    tape.backward(loss);
  }
  state.optimizer.hyper.learning_rate =
      cfg.lr_schedule ? cfg.lr_schedule(step, cfg.learning_rate) : cfg.learning_rate;
  adam_step(params, state.optimizer);
}

void report(const TrainConfig& cfg, const TrainLogRow& row, std::size_t total) {
  if (!cfg.on_progress || cfg.progress_every == 0) return;
  if (row.step % cfg.progress_every != 0 && row.step != total) return;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "[%s] step %zu/%zu total %.4f cmc %.4f iclm %.4f hmc %.4f rclm %.4f cls %.4f",
                row.stage.c_str(), row.step, total, row.parts.total, row.parts.cmc, row.parts.iclm, row.parts.hmc,
                row.parts.rclm, row.classification);
  cfg.on_progress(buf);
}

void maybe_eval(const TrainConfig& cfg, const std::string& phase, std::size_t step) {
  if (cfg.on_eval && cfg.eval_every > 0 && step % cfg.eval_every == 0) cfg.on_eval(phase, step);
}

}  // namespace

void pretrain(TrainerState& state, const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.stage2_steps > 0 && data.triplets.empty()) {
    throw std::invalid_argument("stage 2 needs pseudo-triplets whose items are in the training split");
  }
  const auto& mc = state.model.config();
  DropoutContext dropout{mc.dropout, &state.rng};
  state.optimizer.hyper.learning_rate = cfg.learning_rate;
  if (cfg.stage1_steps > 0) {
    BatchCursor cursor(data.train_ids.size(), cfg.batch_size);
    for (std::size_t step = 1; step <= cfg.stage1_steps; ++step) {
      const auto start = Clock::now();
      std::vector<std::size_t> ids;
      for (std::size_t i : cursor.next(state.rng)) ids.push_back(data.train_ids[i]);
      const PairBatch<float> pairs = make_pair_batch(data, ids);
      TrainLogRow row;
      optimize(state, cfg, step, [&] {
        auto l = stage_loss<float>(state.model, 1, pairs, nullptr, cfg.weights, dropout);
        row.parts = l.parts;
        return l.total;
      });
      ++state.stage1_steps;
      row.stage = "1";
      row.step = step;
      row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      state.log.push_back(row);
      report(cfg, row, cfg.stage1_steps);
      maybe_eval(cfg, "1", step);
    }
  }
  if (cfg.stage2_steps > 0) {
    BatchCursor cursor(data.triplets.size(), cfg.batch_size);
    for (std::size_t step = 1; step <= cfg.stage2_steps; ++step) {
      const auto start = Clock::now();
      const auto rows = cursor.next(state.rng);
      TripletBatch<float> triplets = make_triplet_batch(data, rows);
      const PairBatch<float> pairs = make_pair_batch(data, triplets.ref_ids);
      if (triplets.ref_ids != pairs.ids) throw std::logic_error("stage-2 batch lost its reference pairing");
      if (cfg.bootstrap && step > cfg.bootstrap_warmup) {
        // Own stream per step: batch order and dropout stay the same with
        // and without bootstrapping.
        std::mt19937_64 boot_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (state.stage2_steps + 1)));
        std::size_t replaced = 0;
        triplets = bootstrap_relative_captions(state.model, triplets, cfg.bootstrap_probability, cfg.top_p,
                                               boot_rng, &replaced);
        state.bootstrapped_rows += replaced;
      }
      TrainLogRow row;
      optimize(state, cfg, step, [&] {
        auto l = stage_loss<float>(state.model, 2, pairs, &triplets, cfg.weights, dropout);
        row.parts = l.parts;
        return l.total;
      });
      ++state.stage2_steps;
      row.stage = "2";
      row.step = step;
      row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      state.log.push_back(row);
      report(cfg, row, cfg.stage2_steps);
      maybe_eval(cfg, "2", step);
    }
  }
}

std::vector<std::string> class_names(const Corpus& corpus, Task task) {
  if (task == Task::kCr) return corpus.categories();
  if (task == Task::kSr) return corpus.subcategories();
  throw std::invalid_argument(std::string("task '") + task_name(task) + "' has no class labels");
}

std::vector<std::size_t> class_labels(const Corpus& corpus, Task task) {
  const auto names = class_names(corpus, task);
  std::vector<std::size_t> labels;
  labels.reserve(corpus.size());
  for (const auto& item : corpus.items) {
    const std::string& label = task == Task::kCr ? item.category : item.subcategory;
    labels.push_back(static_cast<std::size_t>(std::lower_bound(names.begin(), names.end(), label) - names.begin()));
  }
  return labels;
}

Tensor<float> classify_logits(const FadVlpModel<float>& model, const ClassifierHead& head,
                              const Tensor<float>& images, const TextBatch& captions) {
  const auto enc = model.encode_images(images);
  Tensor<float> h = model.text_hidden(captions, Mode::kAlign);
  Tensor<float> pooled = model.pool_eos(model.multimodal_hidden(h, captions, enc.tokens, nullptr), captions);
  return head.linear(pooled);
}

void finetune(TrainerState& state, Task task, const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  const bool uses_triplets = task == Task::kIrtf || task == Task::kRic;
  if (uses_triplets && data.triplets.empty()) {
    throw std::invalid_argument(std::string("task '") + task_name(task) + "' needs pseudo-triplets");
  }
  state.optimizer = AdamState<float>{};
  state.optimizer.hyper.learning_rate = cfg.learning_rate;
  state.task = task_name(task);
  state.head.reset();
  std::vector<std::size_t> labels;
  if (task == Task::kCr || task == Task::kSr) {
    state.head.emplace(state.model.config().width, class_names(*data.corpus, task), state.rng());
    labels = class_labels(*data.corpus, task);
  }
  const auto& mc = state.model.config();
  DropoutContext dropout{mc.dropout, &state.rng};
  BatchCursor cursor(uses_triplets ? data.triplets.size() : data.train_ids.size(), cfg.batch_size);
  for (std::size_t step = 1; step <= cfg.finetune_steps; ++step) {
    const auto start = Clock::now();
    const auto rows = cursor.next(state.rng);
    TrainLogRow row;
    row.stage = task_name(task);
    row.step = step;
    if (uses_triplets) {
      const TripletBatch<float> triplets = make_triplet_batch(data, rows);
      optimize(state, cfg, step, [&] {
        Tensor<float> loss = task == Task::kIrtf ? hmc_loss(state.model, triplets)
                                                 : rclm_loss(state.model, triplets, cfg.weights.lm_normalization);
        (task == Task::kIrtf ? row.parts.hmc : row.parts.rclm) = loss.item();
        row.parts.total = loss.item();
        return loss;
      });
    } else {
      std::vector<std::size_t> ids;
      for (std::size_t i : rows) ids.push_back(data.train_ids[i]);
      const PairBatch<float> pairs = make_pair_batch(data, ids);
      optimize(state, cfg, step, [&] {
        Tensor<float> loss;
        if (task == Task::kItr || task == Task::kTir) {
          loss = cmc_loss(state.model, pairs);
          row.parts.cmc = loss.item();
        } else if (task == Task::kIc) {
          loss = iclm_loss(state.model, pairs, cfg.weights.lm_normalization);
          row.parts.iclm = loss.item();
        } else {
          std::vector<int> targets;
          for (std::size_t id : ids) targets.push_back(static_cast<int>(labels[id]));
          loss = cross_entropy_with_logits(classify_logits(state.model, *state.head, pairs.images, pairs.captions),
                                           std::span<const int>(targets), -1);
          row.classification = loss.item();
        }
        row.parts.total = loss.item();
        return loss;
      });
    }
    ++state.finetune_steps;
    row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    state.log.push_back(row);
    report(cfg, row, cfg.finetune_steps);
    maybe_eval(cfg, row.stage, step);
  }
}

namespace {

NamedArray to_array(const std::string& name, const Tensor<float>& t) {
  return NamedArray{name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
}

void copy_from(const NamedArray& a, Tensor<float> dst) {
  if (a.shape != dst.shape()) throw CheckpointError("array '" + a.name + "' has shape " + shape_str(a.shape));
  std::copy(a.values.begin(), a.values.end(), dst.mutable_data().begin());
}

}  // namespace

Checkpoint to_checkpoint(const TrainerState& state, const Vocabulary& vocab) {
  Checkpoint c;
  c.config = state.model.config();
  c.vocabulary = vocab.words();
  std::vector<std::pair<std::string, Tensor<float>>> params(state.model.store().entries());
  if (state.head) {
    for (const auto& [name, t] : state.head->store.entries()) params.emplace_back("head." + name, t);
  }
  for (const auto& [name, t] : params)
    c.arrays.push_back(to_array(name.rfind("head.", 0) == 0 ? name : "model." + name, t));
  const auto& opt = state.optimizer;
  if (!opt.first_moment.empty()) {
    if (opt.first_moment.size() != params.size()) throw std::logic_error("optimizer state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.arrays.push_back(NamedArray{"adam.m." + params[i].first, params[i].second.shape(), opt.first_moment[i]});
      c.arrays.push_back(NamedArray{"adam.v." + params[i].first, params[i].second.shape(), opt.second_moment[i]});
    }
  }
  c.optimizer_step = opt.step;
  c.learning_rate = opt.hyper.learning_rate;
  std::ostringstream rng;
  rng << state.rng;
  c.rng_state = rng.str();
  c.counters = {{"stage1_steps", state.stage1_steps},
                {"stage2_steps", state.stage2_steps},
                {"finetune_steps", state.finetune_steps},
                {"bootstrapped_rows", state.bootstrapped_rows}};
  c.task = state.task;
  if (state.head) c.classes = state.head->classes;
  return c;
}

TrainerState state_from_checkpoint(const Checkpoint& ckpt) {
  TrainerState state(ckpt.config, 0);
  load_model_parameters(ckpt, state.model);
  std::vector<std::pair<std::string, Tensor<float>>> params(state.model.store().entries());
  state.task = ckpt.task;
  if (!ckpt.classes.empty()) {
    state.head.emplace(ckpt.config.width, ckpt.classes, 0);
    for (const auto& [name, t] : state.head->store.entries()) {
      const NamedArray* a = ckpt.find("head." + name);
      if (!a) throw CheckpointError("checkpoint lacks head parameter '" + name + "'");
      copy_from(*a, t);
      params.emplace_back("head." + name, t);
    }
  }
  if (ckpt.find("adam.m." + params.front().first)) {
    for (const auto& [name, t] : params) {
      const NamedArray* m = ckpt.find("adam.m." + name);
      const NamedArray* v = ckpt.find("adam.v." + name);
      if (!m || !v) throw CheckpointError("checkpoint lacks optimizer state for '" + name + "'");
      state.optimizer.first_moment.push_back(m->values);
      state.optimizer.second_moment.push_back(v->values);
    }
  }
  state.optimizer.step = ckpt.optimizer_step;
  state.optimizer.hyper.learning_rate = ckpt.learning_rate;
  std::istringstream rng(ckpt.rng_state);
  rng >> state.rng;
  if (!rng) throw CheckpointError("checkpoint rng state is unreadable");
  auto counter = [&](const char* k) {
    auto it = ckpt.counters.find(k);
    return it == ckpt.counters.end() ? std::uint64_t{0} : it->second;
  };
  state.stage1_steps = counter("stage1_steps");
  state.stage2_steps = counter("stage2_steps");
  state.finetune_steps = counter("finetune_steps");
  state.bootstrapped_rows = counter("bootstrapped_rows");
  return state;
}

}  // namespace fadvlp
