#include "fadvlp/pipeline.hpp"

#include <cmath>
#include <set>

#include "json.hpp"

namespace fadvlp {

using Json = nlohmann::ordered_json;

namespace {

// Typed, strict access to one JSON object; finish() rejects leftover keys.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void size(const char* key, std::size_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(name(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(name(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(name(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void flag(const char* key, bool& out) {
    if (const Json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(name(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void sizes(const char* key, std::vector<std::size_t>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) throw ConfigError(name(key) + " must be an array");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) throw ConfigError(name(key) + " entries must be non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  const Json* object(const char* key) { return take(key); }
  const Json* take(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + name(it.key().c_str()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* lm_norm_name(LmNormalization n) { return n == LmNormalization::kSumOverTokens ? "sum" : "mean"; }

}  // namespace

RunConfig::RunConfig() {
  // Contrastive logits at temperature 1 saturate slowly on unit vectors.
  model.temperature = 0.1;
}

void RunConfig::validate() const {
  try {
    if (data.items < 2) throw ConfigError("data.items must be at least 2");
    if (!(data.holdout_fraction > 0.0 && data.holdout_fraction < 1.0)) {
      throw ConfigError("data.holdout_fraction must be in (0, 1)");
    }
    if (triplets.sample_size == 0) throw ConfigError("triplets.sample_size must be positive");
    for (double w : {triplets.weights.image, triplets.weights.text, triplets.weights.tokens})
      if (!std::isfinite(w)) throw ConfigError("triplet weights must be finite");
    ModelConfig m = model;
    m.vocab_size = kNumSpecialTokens + 1;
    m.validate();
    train.validate();
    if (eval.protocol.candidates < 2) throw ConfigError("eval.candidates must be at least 2");
    if (eval.protocol.repeats == 0) throw ConfigError("eval.repeats must be positive");
    for (std::size_t k : eval.protocol.ks)
      if (k == 0 || k > eval.protocol.candidates) throw ConfigError("eval.ks must lie in [1, candidates]");
    for (std::size_t k : eval.irtf_ks)
      if (k == 0) throw ConfigError("eval.irtf_ks must be positive");
    if (eval.irtf_queries_per_ref == 0) throw ConfigError("eval.irtf_queries_per_ref must be positive");
    if (!(eval.ric_top_p > 0.0 && eval.ric_top_p <= 1.0)) throw ConfigError("eval.ric_top_p must be in (0, 1]");
    if (tasks.empty()) throw ConfigError("tasks must not be empty");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig run_config_from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(doc, "");
  root.u64("seed", c.seed);
  if (const Json* j = root.object("data")) {
    Section s(*j, "data");
    s.size("items", c.data.items);
    s.real("holdout_fraction", c.data.holdout_fraction);
    s.finish();
  }
  if (const Json* j = root.object("triplets")) {
    Section s(*j, "triplets");
    s.size("sample_size", c.triplets.sample_size);
    s.real("lambda_image", c.triplets.weights.image);
    s.real("lambda_text", c.triplets.weights.text);
    s.real("lambda_tokens", c.triplets.weights.tokens);
    s.finish();
  }
  if (const Json* j = root.object("model")) {
    Section s(*j, "model");
    s.size("image_size", c.model.image_size);
    s.size("image_channels", c.model.image_channels);
    s.sizes("stage_widths", c.model.stage_widths);
    s.sizes("stage_strides", c.model.stage_strides);
    s.size("width", c.model.width);
    s.size("text_layers", c.model.text_layers);
    s.size("multimodal_layers", c.model.multimodal_layers);
    s.size("heads", c.model.heads);
    s.size("ffn_width", c.model.ffn_width);
    s.size("joint_dim", c.model.joint_dim);
    s.size("max_text_len", c.model.max_text_len);
    s.real("dropout", c.model.dropout);
    s.real("temperature", c.model.temperature);
    s.finish();
  }
  if (const Json* j = root.object("train")) {
    Section s(*j, "train");
    s.size("stage1_steps", c.train.stage1_steps);
    s.size("stage2_steps", c.train.stage2_steps);
    s.size("finetune_steps", c.train.finetune_steps);
    s.size("batch_size", c.train.batch_size);
    s.real("learning_rate", c.train.learning_rate);
    if (const Json* w = s.object("loss_weights")) {
      Section ws(*w, "train.loss_weights");
      ws.real("cmc", c.train.weights.cmc);
      ws.real("iclm", c.train.weights.iclm);
      ws.real("hmc", c.train.weights.hmc);
      ws.real("rclm", c.train.weights.rclm);
      ws.finish();
    }
    if (const Json* n = s.take("lm_normalization")) {
      if (*n == "sum") {
        c.train.weights.lm_normalization = LmNormalization::kSumOverTokens;
      } else if (*n == "mean") {
        c.train.weights.lm_normalization = LmNormalization::kPerTokenMean;
      } else {
        throw ConfigError("train.lm_normalization must be \"sum\" or \"mean\"");
      }
    }
    s.flag("bootstrap", c.train.bootstrap);
    s.real("bootstrap_probability", c.train.bootstrap_probability);
    s.real("top_p", c.train.top_p);
    s.size("bootstrap_warmup", c.train.bootstrap_warmup);
    s.size("progress_every", c.train.progress_every);
    s.finish();
  }
  if (const Json* j = root.object("eval")) {
    Section s(*j, "eval");
    s.size("candidates", c.eval.protocol.candidates);
    s.size("repeats", c.eval.protocol.repeats);
    s.sizes("ks", c.eval.protocol.ks);
    s.sizes("irtf_ks", c.eval.irtf_ks);
    s.size("irtf_queries_per_ref", c.eval.irtf_queries_per_ref);
    s.real("ric_top_p", c.eval.ric_top_p);
    s.finish();
  }
  if (const Json* j = root.take("tasks")) {
    if (!j->is_array()) throw ConfigError("tasks must be an array of task names");
    c.tasks.clear();
    for (const auto& t : *j) {
      if (!t.is_string()) throw ConfigError("tasks must be an array of task names");
      try {
        c.tasks.push_back(task_from_name(t.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  root.finish();
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["data"] = {{"items", c.data.items}, {"holdout_fraction", c.data.holdout_fraction}};
  j["triplets"] = {{"sample_size", c.triplets.sample_size},
                   {"lambda_image", c.triplets.weights.image},
                   {"lambda_text", c.triplets.weights.text},
                   {"lambda_tokens", c.triplets.weights.tokens}};
  const ModelConfig& m = c.model;
  j["model"] = {{"image_size", m.image_size},
                {"image_channels", m.image_channels},
                {"stage_widths", m.stage_widths},
                {"stage_strides", m.stage_strides},
                {"width", m.width},
                {"text_layers", m.text_layers},
                {"multimodal_layers", m.multimodal_layers},
                {"heads", m.heads},
                {"ffn_width", m.ffn_width},
                {"joint_dim", m.joint_dim},
                {"max_text_len", m.max_text_len},
                {"dropout", m.dropout},
                {"temperature", m.temperature}};
  const TrainConfig& t = c.train;
  j["train"] = {{"stage1_steps", t.stage1_steps},
                {"stage2_steps", t.stage2_steps},
                {"finetune_steps", t.finetune_steps},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"loss_weights",
                 {{"cmc", t.weights.cmc}, {"iclm", t.weights.iclm}, {"hmc", t.weights.hmc}, {"rclm", t.weights.rclm}}},
                {"lm_normalization", lm_norm_name(t.weights.lm_normalization)},
                {"bootstrap", t.bootstrap},
                {"bootstrap_probability", t.bootstrap_probability},
                {"top_p", t.top_p},
                {"bootstrap_warmup", t.bootstrap_warmup},
                {"progress_every", t.progress_every}};
  j["eval"] = {{"candidates", c.eval.protocol.candidates},
               {"repeats", c.eval.protocol.repeats},
               {"ks", c.eval.protocol.ks},
               {"irtf_ks", c.eval.irtf_ks},
               {"irtf_queries_per_ref", c.eval.irtf_queries_per_ref},
               {"ric_top_p", c.eval.ric_top_p}};
  Json tasks = Json::array();
  for (Task task : c.tasks) tasks.push_back(task_name(task));
  j["tasks"] = tasks;
  return j.dump(2) + "\n";
}

std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& purpose) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : purpose) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(run_seed ^ splitmix64(h));
}

Corpus make_corpus(const RunConfig& config) {
  return generate_corpus(AttributeSchema::fashion_default(), config.data.items, derive_seed(config.seed, "corpus"));
}

TripletDataset make_triplets(const Corpus& corpus, const RunConfig& config) {
  TripletConfig tc = config.triplets;
  tc.seed = derive_seed(config.seed, "triplets");
  return build_triplet_dataset(make_catalog(corpus, corpus.schema.tagger()), tc);
}

HoldoutSplit make_split(const Corpus& corpus, const RunConfig& config) {
  return split_holdout(corpus.size(), config.data.holdout_fraction, derive_seed(config.seed, "split"));
}

ModelConfig effective_model_config(const RunConfig& config, const Vocabulary& vocab) {
  ModelConfig m = config.model;
  m.vocab_size = vocab.size();
  m.init_seed = derive_seed(config.seed, "init");
  return m;
}

TrainConfig effective_train_config(const RunConfig& config, const std::string& phase) {
  TrainConfig t = config.train;
  t.seed = derive_seed(config.seed, "train." + phase);
  return t;
}

std::vector<IrtfQuery> irtf_queries(const Corpus& corpus, const HoldoutSplit& split, const RunConfig& config) {
  const auto catalog = make_catalog(corpus, corpus.schema.tagger());
  TripletConfig tc = config.triplets;
  tc.seed = derive_seed(config.seed, "irtf-queries");
  const std::size_t threshold = scaled_frequency_threshold(catalog.size());
  const TripletIndex index(catalog, AttributeVocabulary::build(catalog, threshold));
  std::vector<IrtfQuery> out;
  for (const auto& t : build_query_triplets(index, split.holdout, tc, config.eval.irtf_queries_per_ref))
    out.push_back({t.ref_id, t.tgt_id, t.relative_caption, corpus.items[t.ref_id].category});
  return out;
}

namespace {

MetricsReport evaluate_ric(const TrainerState& state, const Corpus& corpus, const TrainingData& data,
                           const HoldoutSplit& split, const RunConfig& config) {
  const auto catalog = make_catalog(corpus, corpus.schema.tagger());
  TripletConfig tc = config.triplets;
  tc.seed = derive_seed(config.seed, "ric-queries");
  const TripletIndex index(catalog, AttributeVocabulary::build(catalog, scaled_frequency_threshold(catalog.size())));
  const auto pairs = build_query_triplets(index, split.holdout, tc, 1);
  if (pairs.empty()) throw std::runtime_error("no relative-caption queries on the holdout split");
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  std::vector<std::vector<std::string>> refs;
  for (const auto& t : pairs) {
    rows.emplace_back(t.ref_id, t.tgt_id);
    refs.push_back({join_pair(t.relative_caption, alternate_relative_caption(index, t))});
  }
  const auto a = generate_relative_captions(state.model, data, rows, config.eval.ric_top_p,
                                            derive_seed(config.seed, "ric-sample-a"));
  const auto b = generate_relative_captions(state.model, data, rows, config.eval.ric_top_p,
                                            derive_seed(config.seed, "ric-sample-b"));
  std::vector<std::string> hyps;
  for (std::size_t i = 0; i < rows.size(); ++i) hyps.push_back(join_pair(a[i], b[i]));
  MetricsReport report = caption_report(caption_metrics(hyps, refs), "ric");
  report.protocol = {{"queries", static_cast<double>(rows.size())}, {"top_p", config.eval.ric_top_p}};
  report.notes.push_back("two nucleus samples joined with \"and\" against the constructed caption joined with a "
                         "second template rendering");
  return report;
}

}  // namespace

MetricsReport evaluate_task(const TrainerState& state, Task task, const Corpus& corpus, const TrainingData& data,
                            const HoldoutSplit& split, const RunConfig& config) {
  if (split.holdout.empty()) throw std::invalid_argument("holdout split is empty");
  CandidateProtocol protocol = config.eval.protocol;
  protocol.seed = derive_seed(config.seed, "eval-protocol");
  switch (task) {
    case Task::kItr:
    case Task::kTir: {
      const auto images = image_embeddings(state.model, data);
      const auto texts = text_embeddings(state.model, data);
      return crossmodal_protocol(images, texts, split.holdout, ItemLabels::from_corpus(corpus),
                                 task == Task::kItr ? Direction::kImageToText : Direction::kTextToImage, protocol,
                                 task_name(task));
    }
    case Task::kIrtf: {
      const auto queries = irtf_queries(corpus, split, config);
      if (queries.empty()) throw std::runtime_error("no IRTF queries on the holdout split");
      const auto fused = fused_embeddings(state.model, data, queries);
      return irtf_rank(fused, image_embeddings(state.model, data), queries, config.eval.irtf_ks);
    }
    case Task::kCr:
    case Task::kSr: {
      if (!state.head || state.task != task_name(task)) {
        throw std::invalid_argument(std::string("checkpoint has no classifier head for ") + task_name(task));
      }
      const auto gold_all = class_labels(corpus, task);
      std::vector<std::size_t> gold;
      for (std::size_t id : split.holdout) gold.push_back(gold_all[id]);
      const auto pred = predict_classes(state.model, *state.head, data, split.holdout);
      return classification_report(pred, gold, state.head->classes.size(), task_name(task));
    }
    case Task::kIc: {
      const auto hyps = generate_captions(state.model, data, split.holdout);
      std::vector<std::vector<std::string>> refs;
      for (std::size_t id : split.holdout) refs.push_back({corpus.items[id].caption});
      MetricsReport report = caption_report(caption_metrics(hyps, refs), "ic");
      report.protocol = {{"items", static_cast<double>(split.holdout.size())}};
      report.notes.push_back("greedy decoding against the item caption");
      return report;
    }
    case Task::kRic:
      return evaluate_ric(state, corpus, data, split, config);
  }
  throw std::logic_error("unhandled task");
}

}  // namespace fadvlp
