#include "fadvlp/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "fadvlp/pipeline.hpp"
#include "fadvlp/runtime.hpp"
#include "json.hpp"

namespace fadvlp {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Raised while checking inputs; maps to kExitValidation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> threads;
};

struct Options {
  CommonOptions common;
  std::optional<std::size_t> items;
  std::optional<std::size_t> sample_size;
  std::string corpus;
  std::string triplets;
  std::string checkpoint;
  std::string task;
  std::vector<std::size_t> ids;
  std::optional<std::size_t> ref;
  std::optional<std::size_t> tgt;
  std::string text;
  std::size_t top_k = 5;
};

void progress(const std::string& line) { std::cerr << line << std::endl; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string(flag) + " is required");
  if (!fs::exists(value)) throw ValidationError(std::string(flag) + " '" + value + "' does not exist");
}

std::string schema_json(const AttributeSchema& schema) {
  Json j;
  Json axes = Json::array();
  for (const auto& a : schema.axes) axes.push_back({{"name", a.name}, {"values", a.values}});
  j["axes"] = axes;
  Json parents = Json::object();
  for (const auto& [sub, cat] : schema.subcategory_parent) parents[sub] = cat;
  j["subcategory_parent"] = parents;
  j["openers"] = schema.openers;
  j["fillers"] = schema.fillers;
  return j.dump(2) + "\n";
}

// Base config, then --config, then --seed.
RunConfig load_run_config(const CommonOptions& common) {
  RunConfig c;
  try {
    if (!common.config_path.empty()) c = run_config_from_json(read_file(common.config_path));
  } catch (const ConfigError& e) {
    throw ValidationError(e.what());
  }
  if (common.seed) c.seed = *common.seed;
  return c;
}

void validate_config(const RunConfig& c) {
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

Corpus read_corpus(const std::string& path) {
  try {
    return load_corpus(path, AttributeSchema::fashion_default());
  } catch (const std::exception& e) {
    throw ValidationError(std::string("corpus: ") + e.what());
  }
}

std::vector<PseudoTriplet> read_triplets(const std::string& path, const Corpus& corpus) {
  std::vector<PseudoTriplet> t;
  try {
    t = load_triplets(path);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("triplets: ") + e.what());
  }
  for (const auto& x : t)
    if (x.ref_id >= corpus.size() || x.tgt_id >= corpus.size()) {
      throw ValidationError("triplets reference items outside the corpus");
    }
  return t;
}

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

Task parse_task(const std::string& name) {
  try {
    return task_from_name(name);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

// Run seed and holdout size are stored with the weights so later commands
// evaluate on the split the model never trained on.
void stamp_split(Checkpoint& ckpt, const RunConfig& config, const HoldoutSplit& split) {
  ckpt.counters["run_seed"] = config.seed;
  ckpt.counters["holdout_items"] = split.holdout.size();
}

void check_split(const Checkpoint& ckpt, RunConfig& config, bool seed_given, const Corpus& corpus) {
  auto it = ckpt.counters.find("run_seed");
  if (it == ckpt.counters.end()) throw ValidationError("checkpoint carries no run seed");
  if (seed_given && config.seed != it->second) {
    throw ValidationError("--seed " + std::to_string(config.seed) + " differs from the checkpoint's run seed " +
                          std::to_string(it->second));
  }
  config.seed = it->second;
  auto h = ckpt.counters.find("holdout_items");
  if (h != ckpt.counters.end() && make_split(corpus, config).holdout.size() != h->second) {
    throw ValidationError("holdout fraction does not reproduce the checkpoint's split");
  }
}

TrainConfig with_progress(TrainConfig t) {
  t.on_progress = progress;
  return t;
}

void write_report(const fs::path& dir, const MetricsReport& r) {
  write_file(dir / ("metrics_" + r.task + ".json"), r.to_json());
  write_file(dir / ("metrics_" + r.task + ".csv"), r.to_csv());
}

// ---- subcommands: each validates everything, then returns the work ----

using Work = std::function<void()>;

Work prepare_gen_data(const Options& o) {
  RunConfig c = load_run_config(o.common);
  if (o.items) c.data.items = *o.items;
  validate_config(c);
  const fs::path out = o.common.out_dir;
  return [c, out] {
    progress("generating " + std::to_string(c.data.items) + " items");
    const Corpus corpus = make_corpus(c);
    fs::create_directories(out);
    save_corpus((out / "corpus.jsonl").string(), corpus);
    write_file(out / "schema.json", schema_json(corpus.schema));
    write_file(out / "config.json", run_config_to_json(c));
  };
}

Work prepare_build_triplets(const Options& o) {
  RunConfig c = load_run_config(o.common);
  if (o.sample_size) c.triplets.sample_size = *o.sample_size;
  validate_config(c);
  require_path(o.corpus, "--corpus");
  auto corpus = std::make_shared<Corpus>(read_corpus(o.corpus));
  const fs::path out = o.common.out_dir;
  return [c, corpus, out] {
    progress("building triplets over " + std::to_string(corpus->size()) + " items");
    const TripletDataset ds = make_triplets(*corpus, c);
    TripletConfig tc = c.triplets;
    tc.seed = derive_seed(c.seed, "triplets");
    fs::create_directories(out);
    save_triplets((out / "triplets.jsonl").string(), ds.triplets);
    write_file(out / "triplet_stats.json", triplet_stats_json(ds, tc));
    write_file(out / "config.json", run_config_to_json(c));
    progress("built " + std::to_string(ds.stats.built) + " triplets, skipped " + std::to_string(ds.stats.skipped));
  };
}

struct Loaded {
  Corpus corpus;
  std::vector<PseudoTriplet> triplets;
};

void run_pretrain(const RunConfig& c, const Loaded& in, const fs::path& out) {
  const HoldoutSplit split = make_split(in.corpus, c);
  const Vocabulary vocab = build_vocabulary(in.corpus, in.triplets);
  const TrainingData data(in.corpus, vocab, split.train, in.triplets, c.model.max_text_len);
  TrainerState state(effective_model_config(c, vocab), derive_seed(c.seed, "trainer"));
  progress("pre-training on " + std::to_string(split.train.size()) + " items, " +
           std::to_string(data.triplets.size()) + " triplets");
  pretrain(state, data, with_progress(effective_train_config(c, "pretrain")));
  Checkpoint ckpt = to_checkpoint(state, vocab);
  stamp_split(ckpt, c, split);
  fs::create_directories(out);
  save_checkpoint((out / "ckpt.bin").string(), ckpt);
  write_file(out / "train_log.csv", train_log_csv(state.log));
  write_file(out / "loss_curve.csv", loss_curve_csv(state.log));
}

Work prepare_pretrain(const Options& o) {
  RunConfig c = load_run_config(o.common);
  validate_config(c);
  require_path(o.corpus, "--corpus");
  require_path(o.triplets, "--triplets");
  auto in = std::make_shared<Loaded>();
  in->corpus = read_corpus(o.corpus);
  in->triplets = read_triplets(o.triplets, in->corpus);
  if (c.train.stage2_steps > 0 && in->triplets.empty()) throw ValidationError("stage 2 needs triplets");
  const fs::path out = o.common.out_dir;
  return [c, in, out] {
    fs::create_directories(out);
    write_file(out / "config.json", run_config_to_json(c));
    run_pretrain(c, *in, out);
  };
}

struct FromCheckpoint {
  RunConfig config;
  Corpus corpus;
  std::vector<PseudoTriplet> triplets;
  Checkpoint ckpt;
};

std::shared_ptr<FromCheckpoint> load_from_checkpoint(const Options& o, bool need_triplets) {
  auto f = std::make_shared<FromCheckpoint>();
  f->config = load_run_config(o.common);
  validate_config(f->config);
  require_path(o.checkpoint, "--checkpoint");
  require_path(o.corpus, "--corpus");
  f->ckpt = read_checkpoint(o.checkpoint);
  f->corpus = read_corpus(o.corpus);
  if (f->ckpt.config.image_size != kImageSide) throw ValidationError("checkpoint image size does not match the corpus");
  check_split(f->ckpt, f->config, o.common.seed.has_value(), f->corpus);
  if (need_triplets) {
    require_path(o.triplets, "--triplets");
    f->triplets = read_triplets(o.triplets, f->corpus);
  }
  f->config.model.temperature = f->ckpt.config.temperature;
  return f;
}

void run_finetune(const FromCheckpoint& f, Task task, const fs::path& out) {
  const HoldoutSplit split = make_split(f.corpus, f.config);
  const Vocabulary vocab(f.ckpt.vocabulary);
  const TrainingData data(f.corpus, vocab, split.train, f.triplets, f.ckpt.config.max_text_len);
  TrainerState state = state_from_checkpoint(f.ckpt);
  progress(std::string("fine-tuning ") + task_name(task));
  finetune(state, task, data, with_progress(effective_train_config(f.config, task_name(task))));
  Checkpoint ckpt = to_checkpoint(state, vocab);
  stamp_split(ckpt, f.config, split);
  fs::create_directories(out);
  const std::string name = task_name(task);
  save_checkpoint((out / ("ckpt_" + name + ".bin")).string(), ckpt);
  std::vector<TrainLogRow> rows;
  for (const auto& r : state.log)
    if (r.stage == name) rows.push_back(r);
  write_file(out / ("finetune_log_" + name + ".csv"), train_log_csv(rows));
  write_file(out / ("loss_curve_" + name + ".csv"), loss_curve_csv(rows));
}

Work prepare_finetune(const Options& o) {
  const Task task = parse_task(o.task);
  auto f = load_from_checkpoint(o, task == Task::kIrtf || task == Task::kRic);
  if ((task == Task::kIrtf || task == Task::kRic) && f->triplets.empty()) {
    throw ValidationError(std::string(task_name(task)) + " fine-tuning needs triplets");
  }
  const fs::path out = o.common.out_dir;
  return [f, task, out] { run_finetune(*f, task, out); };
}

MetricsReport run_eval(const FromCheckpoint& f, Task task) {
  const HoldoutSplit split = make_split(f.corpus, f.config);
  const TrainingData data(f.corpus, Vocabulary(f.ckpt.vocabulary), split.train, {}, f.ckpt.config.max_text_len);
  const TrainerState state = state_from_checkpoint(f.ckpt);
  progress(std::string("evaluating ") + task_name(task) + " on " + std::to_string(split.holdout.size()) +
           " holdout items");
  return evaluate_task(state, task, f.corpus, data, split, f.config);
}

Work prepare_eval(const Options& o) {
  const Task task = parse_task(o.task);
  auto f = load_from_checkpoint(o, false);
  if ((task == Task::kCr || task == Task::kSr) && f->ckpt.task != task_name(task)) {
    throw ValidationError(std::string("checkpoint has no ") + task_name(task) + " classifier head");
  }
  const fs::path out = o.common.out_dir;
  return [f, task, out] {
    const MetricsReport r = run_eval(*f, task);
    fs::create_directories(out);
    write_report(out, r);
  };
}

std::vector<std::size_t> top_k(const Embeddings& queries, std::size_t q, const Embeddings& gallery, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    double s = 0.0;
    for (std::size_t d = 0; d < gallery.dim; ++d)
      s += static_cast<double>(queries.row(q)[d]) * static_cast<double>(gallery.row(j)[d]);
    scored.emplace_back(-s, j);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

Work prepare_infer(const Options& o) {
  const Task task = parse_task(o.task);
  auto f = load_from_checkpoint(o, false);
  const std::size_t n = f->corpus.size();
  auto check_id = [n](std::size_t id, const char* flag) {
    if (id >= n) throw ValidationError(std::string(flag) + " " + std::to_string(id) + " is outside the corpus");
  };
  for (std::size_t id : o.ids) check_id(id, "--ids");
  if (o.top_k == 0) throw ValidationError("--top-k must be positive");
  switch (task) {
    case Task::kIc:
    case Task::kItr:
    case Task::kCr:
    case Task::kSr:
      if (o.ids.empty()) throw ValidationError(std::string(task_name(task)) + " inference needs --ids");
      break;
    case Task::kTir:
      if (o.text.empty()) throw ValidationError("tir inference needs --text");
      break;
    case Task::kIrtf:
      if (!o.ref || o.text.empty()) throw ValidationError("irtf inference needs --ref and --text");
      check_id(*o.ref, "--ref");
      break;
    case Task::kRic:
      if (!o.ref || !o.tgt) throw ValidationError("ric inference needs --ref and --tgt");
      check_id(*o.ref, "--ref");
      check_id(*o.tgt, "--tgt");
      break;
  }
  if ((task == Task::kCr || task == Task::kSr) && f->ckpt.task != task_name(task)) {
    throw ValidationError(std::string("checkpoint has no ") + task_name(task) + " classifier head");
  }
  const fs::path out = o.common.out_dir;
  return [f, task, out, o] {
    const HoldoutSplit split = make_split(f->corpus, f->config);
    const TrainingData data(f->corpus, Vocabulary(f->ckpt.vocabulary), split.train, {}, f->ckpt.config.max_text_len);
    const TrainerState state = state_from_checkpoint(f->ckpt);
    std::string lines;
    auto emit = [&lines](const Json& j) { lines += j.dump() + "\n"; };
    switch (task) {
      case Task::kIc: {
        const auto caps = generate_captions(state.model, data, o.ids);
        for (std::size_t i = 0; i < o.ids.size(); ++i) emit({{"id", o.ids[i]}, {"caption", caps[i]}});
        break;
      }
      case Task::kItr: {
        const auto images = image_embeddings(state.model, data);
        const auto texts = text_embeddings(state.model, data);
        for (std::size_t id : o.ids) {
          Json hits = Json::array();
          for (std::size_t j : top_k(images, id, texts, o.top_k))
            hits.push_back({{"id", j}, {"caption", f->corpus.items[j].caption}});
          emit({{"id", id}, {"captions", hits}});
        }
        break;
      }
      case Task::kTir: {
        Embeddings q;
        {
          NoGradScope<float> no_grad;
          const auto seq = encode_caption(data.vocab, o.text, state.model.config().max_text_len);
          const auto t = state.model.embed_text(
              state.model.encode_text(TextBatch::from_sequences({seq}, seq.size()), Mode::kAlign));
          q.dim = t.dim(1);
          q.rows.assign(t.data().begin(), t.data().end());
        }
        emit({{"text", o.text}, {"ids", top_k(q, 0, image_embeddings(state.model, data), o.top_k)}});
        break;
      }
      case Task::kIrtf: {
        const std::vector<IrtfQuery> queries{{*o.ref, *o.ref, o.text, ""}};
        const auto fused = fused_embeddings(state.model, data, queries);
        auto gallery = image_embeddings(state.model, data);
        auto ids = top_k(fused, 0, gallery, o.top_k + 1);
        ids.erase(std::remove(ids.begin(), ids.end(), *o.ref), ids.end());
        ids.resize(std::min(ids.size(), o.top_k));
        emit({{"ref", *o.ref}, {"text", o.text}, {"ids", ids}});
        break;
      }
      case Task::kRic: {
        const auto caps = generate_relative_captions(state.model, data, {{*o.ref, *o.tgt}}, f->config.eval.ric_top_p,
                                                     derive_seed(f->config.seed, "infer-ric"));
        emit({{"ref", *o.ref}, {"tgt", *o.tgt}, {"relative_caption", caps[0]}});
        break;
      }
      case Task::kCr:
      case Task::kSr: {
        const auto pred = predict_classes(state.model, *state.head, data, o.ids);
        for (std::size_t i = 0; i < o.ids.size(); ++i)
          emit({{"id", o.ids[i]}, {"class", state.head->classes[pred[i]]}});
        break;
      }
    }
    fs::create_directories(out);
    write_file(out / ("predictions_" + std::string(task_name(task)) + ".jsonl"), lines);
  };
}

Work prepare_pipeline(const Options& o) {
  RunConfig c = load_run_config(o.common);
  if (o.items) c.data.items = *o.items;
  if (o.sample_size) c.triplets.sample_size = *o.sample_size;
  validate_config(c);
  const fs::path out = o.common.out_dir;
  return [c, out] {
    fs::create_directories(out);
    write_file(out / "config.json", run_config_to_json(c));
    progress("[pipeline] gen-data");
    Loaded in;
    in.corpus = make_corpus(c);
    save_corpus((out / "corpus.jsonl").string(), in.corpus);
    write_file(out / "schema.json", schema_json(in.corpus.schema));
    progress("[pipeline] build-triplets");
    const TripletDataset ds = make_triplets(in.corpus, c);
    TripletConfig tc = c.triplets;
    tc.seed = derive_seed(c.seed, "triplets");
    in.triplets = ds.triplets;
    save_triplets((out / "triplets.jsonl").string(), ds.triplets);
    write_file(out / "triplet_stats.json", triplet_stats_json(ds, tc));
    progress("[pipeline] pretrain");
    run_pretrain(c, in, out);
    FromCheckpoint f{c, in.corpus, in.triplets, load_checkpoint((out / "ckpt.bin").string())};
    Json results = Json::object();
    std::string csv = "task,metric,value\n";
    for (Task task : c.tasks) {
      progress(std::string("[pipeline] finetune ") + task_name(task));
      run_finetune(f, task, out);
      FromCheckpoint tuned{c, in.corpus, {}, load_checkpoint((out / ("ckpt_" + std::string(task_name(task)) + ".bin")).string())};
      const MetricsReport r = run_eval(tuned, task);
      write_report(out, r);
      results[task_name(task)] = Json::parse(r.to_json())["metrics"];
      const std::string body = r.to_csv();
      csv += body.substr(body.find('\n') + 1);
    }
    write_file(out / "results.json", results.dump(2) + "\n");
    write_file(out / "results.csv", csv);
  };
}

void add_common(CLI::App* sub, CommonOptions& c) {
  sub->add_option("--config", c.config_path, "JSON run config (unknown keys rejected)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Run seed; every random stream derives from it");
  sub->add_option("--out-dir", c.out_dir, "Directory for all outputs")->required();
  sub->add_option("--threads", c.threads, "Worker threads (default: FADVLP_THREADS or all cores)");
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  configure_allocator();
  CLI::App app{"Fashion vision-language pre-training with weakly supervised triplets", "fadvlp"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic catalogue");
  add_common(gen, o.common);
  gen->add_option("--n", o.items, "Number of items");

  auto* trip = app.add_subcommand("build-triplets", "Build pseudo-triplets over a corpus");
  add_common(trip, o.common);
  trip->add_option("--corpus", o.corpus, "Corpus JSON-lines file")->required();
  trip->add_option("--sample-size", o.sample_size, "Candidates sampled per reference (default 1000)");

  auto* pre = app.add_subcommand("pretrain", "Two-stage pre-training");
  add_common(pre, o.common);
  pre->add_option("--corpus", o.corpus, "Corpus JSON-lines file")->required();
  pre->add_option("--triplets", o.triplets, "Triplet JSON-lines file")->required();

  auto* fine = app.add_subcommand("finetune", "Fine-tune a checkpoint on one task");
  add_common(fine, o.common);
  fine->add_option("--task", o.task, "itr, tir, irtf, cr, sr, ic or ric")->required();
  fine->add_option("--checkpoint", o.checkpoint, "Checkpoint to start from")->required();
  fine->add_option("--corpus", o.corpus, "Corpus JSON-lines file")->required();
  fine->add_option("--triplets", o.triplets, "Triplet file (irtf and ric)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the holdout split");
  add_common(ev, o.common);
  ev->add_option("--task", o.task, "itr, tir, irtf, cr, sr, ic or ric")->required();
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required();
  ev->add_option("--corpus,--gallery", o.corpus, "Corpus JSON-lines file (the gallery)")->required();

  auto* inf = app.add_subcommand("infer", "Run a checkpoint on chosen items");
  add_common(inf, o.common);
  inf->add_option("--task", o.task, "itr, tir, irtf, cr, sr, ic or ric")->required();
  inf->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  inf->add_option("--corpus,--gallery", o.corpus, "Corpus JSON-lines file")->required();
  inf->add_option("--ids", o.ids, "Item ids (ic, itr, cr, sr)")->delimiter(',');
  inf->add_option("--ref", o.ref, "Reference item (irtf, ric)");
  inf->add_option("--tgt", o.tgt, "Target item (ric)");
  inf->add_option("--text", o.text, "Query text (tir) or feedback (irtf)");
  inf->add_option("--top-k", o.top_k, "Retrieved items per query");

  auto* pipe = app.add_subcommand("pipeline", "gen-data, build-triplets, pretrain, then finetune and eval every task");
  add_common(pipe, o.common);
  pipe->add_option("--n", o.items, "Number of items");
  pipe->add_option("--sample-size", o.sample_size, "Candidates sampled per reference");

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  Work work;
  try {
    std::size_t threads = 0;
    if (o.common.threads) {
      threads = *o.common.threads;
    } else if (const char* env = std::getenv("FADVLP_THREADS")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0' || v == 0) throw ValidationError("FADVLP_THREADS must be a positive integer");
      threads = static_cast<std::size_t>(v);
    }
    if (o.common.threads && threads == 0) throw ValidationError("--threads must be positive");
    set_thread_count(threads);
    if (gen->parsed()) work = prepare_gen_data(o);
    if (trip->parsed()) work = prepare_build_triplets(o);
    if (pre->parsed()) work = prepare_pretrain(o);
    if (fine->parsed()) work = prepare_finetune(o);
    if (ev->parsed()) work = prepare_eval(o);
    if (inf->parsed()) work = prepare_infer(o);
    if (pipe->parsed()) work = prepare_pipeline(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  try {
    work();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace fadvlp
