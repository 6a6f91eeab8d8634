// Acceptance gate. Each criterion prints one PASS/FAIL line; the exit code
// is non-zero when any selected criterion fails.
//
//   fadvlp_acceptance [--criterion N]... [--cli PATH] [--work-dir DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fadvlp/evaluation.hpp"
#include "fadvlp/objectives.hpp"
#include "fadvlp/pipeline.hpp"
#include "fadvlp/runtime.hpp"
#include "grad_suite.hpp"
#include "metric_oracles.hpp"
#include "toy_model.hpp"
#include "triplet_oracle.hpp"

namespace fs = std::filesystem;
using namespace fadvlp;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string cli;
  fs::path work_dir = fs::temp_directory_path() / "fadvlp_acceptance";
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, a);
  return buf;
}

void note(const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); }

// ---- 1: gradient suite ----

Outcome gradient_suite(const Options&) {
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  const auto start = Clock::now();
  double worst_primitive = 0.0;
  std::string worst_name;
  for (const auto& c : testing::primitive_grad_cases()) {
    const double err = testing::worst_error(c, kInstances);
    note(c.name + " " + fmt("%.3g", err));
    if (err >= worst_primitive) worst_primitive = err, worst_name = c.name;
  }

  const ModelConfig toy = testing::toy_config();
  std::mt19937_64 rng(4);
  double worst[4] = {0, 0, 0, 0};
  for (int instance = 0; instance < kInstances; ++instance) {
    FadVlpModel<double> model(testing::toy_config(300 + instance));
    testing::jitter_parameters(model, 400 + instance);
    PairBatch<double> pairs;
    pairs.ids = {0, 1, 2};
    pairs.images = testing::random_images<double>(toy, 3, rng);
    pairs.captions = testing::random_text(toy, 3, rng, 1);
    TripletBatch<double> triplets;
    triplets.ref_ids = pairs.ids;
    triplets.tgt_ids = {100, 101, 102};
    triplets.ref_images = pairs.images;
    triplets.relative = testing::random_text(toy, 3, rng, 1);
    triplets.tgt_images = testing::random_images<double>(toy, 3, rng);
    pairs.images.set_requires_grad(true);
    triplets.tgt_images.set_requires_grad(true);
    auto tensors = model.parameters();
    tensors.push_back(pairs.images);
    tensors.push_back(triplets.tgt_images);
    const std::function<Tensor<double>()> losses[4] = {
        [&] { return cmc_loss(model, pairs); },
        [&] { return iclm_loss(model, pairs); },
        [&] { return hmc_loss(model, triplets); },
        [&] { return rclm_loss(model, triplets); },
    };
    for (int k = 0; k < 4; ++k)
      worst[k] = std::max(worst[k], testing::max_grad_error_sampled(losses[k], tensors, 3, rng));
  }
  const double elapsed = seconds_since(start);
  const double worst_composite = std::max({worst[0], worst[1], worst[2], worst[3]});
  Outcome o;
  o.pass = worst_primitive < kTol && worst_composite < kTol && elapsed < 120.0;
  o.detail = "worst primitive " + fmt("%.2e", worst_primitive) + " (" + worst_name + "), composite cmc " +
             fmt("%.2e", worst[0]) + " iclm " + fmt("%.2e", worst[1]) + " hmc " + fmt("%.2e", worst[2]) +
             " rclm " + fmt("%.2e", worst[3]) + ", 20 instances each, " + fmt("%.1f s", elapsed);
  return o;
}

// ---- 2: closed-form losses ----

Outcome closed_forms(const Options&) {
  double worst = 0.0;
  for (std::size_t b : {2u, 3u, 8u}) {
    for (double level : {-0.5, 0.0, 0.37, 4.0}) {
      const Tensor<double> sim = Tensor<double>::full({b, b}, level);
      const double lnb = std::log(static_cast<double>(b));
      worst = std::max(worst, std::abs(cmc_from_similarity(sim).item() - 2.0 * lnb));
      worst = std::max(worst, std::abs(hmc_from_similarity(sim).item() - lnb));
    }
  }
  return {worst < 1e-5, "B in {2,3,8}, four uniform levels, max |error| " + fmt("%.2e", worst)};
}

// ---- 3: triplet oracle equivalence and reproducibility ----

Outcome triplet_oracle(const Options&) {
  const auto start = Clock::now();
  const Corpus corpus = generate_corpus(AttributeSchema::fashion_default(), 200, 42);
  const auto entries = make_catalog(corpus, corpus.schema.tagger());
  const std::size_t threshold = scaled_frequency_threshold(entries.size());
  const TripletIndex index(entries, AttributeVocabulary::build(entries, threshold));
  const testing::BruteForce oracle(corpus, threshold);
  std::size_t matched = 0;
  for (std::size_t ref = 0; ref < corpus.size(); ++ref) {
    std::mt19937_64 rng(ref);
    matched += select_target(index, ref, 1000, DeltaWeights{}, rng) == oracle.argmin(ref);
  }
  TripletConfig cfg;
  cfg.seed = 17;
  const std::string a = triplets_to_jsonl(build_triplet_dataset(entries, cfg).triplets);
  const std::string b = triplets_to_jsonl(build_triplet_dataset(make_catalog(corpus, corpus.schema.tagger()), cfg).triplets);
  Outcome o;
  o.pass = matched == corpus.size() && a == b && !a.empty() && seconds_since(start) < 60.0;
  o.detail = std::to_string(matched) + "/" + std::to_string(corpus.size()) +
             " references match the exhaustive argmin (sample size 1000); rebuild " +
             (a == b ? "byte-identical" : "differs") + ", " + fmt("%.1f s", seconds_since(start));
  return o;
}

// ---- 4: delta arithmetic ----

Outcome delta_arithmetic(const Options&) {
  const double d = delta_score(0.8, 0.5, 4, DeltaWeights{1.0, 1.0, 1.0 / 16.0});
  const std::size_t h = hamming_distance({"red", "dress", "floral"}, {"blue", "dress"});
  return {std::abs(d - (-1.05)) < 1e-9 && h == 3,
          "delta " + fmt("%.12f", d) + " (want -1.05), hamming " + std::to_string(h) + " (want 3)"};
}

// ---- 5: end-to-end ITR/TIR learnability ----

Outcome learnability(const Options&) {
  const auto start = Clock::now();
  RunConfig rc;
  rc.seed = 7;
  const Corpus corpus = make_corpus(rc);
  const TripletDataset ds = make_triplets(corpus, rc);
  const HoldoutSplit split = make_split(corpus, rc);
  const Vocabulary vocab = build_vocabulary(corpus, ds.triplets);
  const TrainingData data(corpus, vocab, split.train, ds.triplets, rc.model.max_text_len);
  TrainerState state(effective_model_config(rc, vocab), derive_seed(rc.seed, "trainer"));
  TrainConfig tc = effective_train_config(rc, "pretrain");
  tc.progress_every = 500;
  tc.on_progress = note;
  pretrain(state, data, tc);
  TrainConfig fc = effective_train_config(rc, "itr");
  fc.progress_every = 200;
  fc.on_progress = note;
  finetune(state, Task::kItr, data, fc);
  const MetricsReport itr = evaluate_task(state, Task::kItr, corpus, data, split, rc);
  const MetricsReport tir = evaluate_task(state, Task::kTir, corpus, data, split, rc);

  // Chance control: random unit vectors on both sides, every item a query.
  std::vector<std::size_t> all(corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CandidateProtocol protocol = rc.eval.protocol;
  protocol.seed = derive_seed(rc.seed, "control");
  const MetricsReport control =
      crossmodal_protocol(random_unit_embeddings(corpus.size(), rc.model.joint_dim, 1),
                          random_unit_embeddings(corpus.size(), rc.model.joint_dim, 2), all,
                          ItemLabels::from_corpus(corpus), Direction::kImageToText, protocol, "control");
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = itr.at("R@10") >= 95 && itr.at("R@1") >= 70 && tir.at("R@10") >= 95 && tir.at("R@1") >= 70 &&
           std::abs(control.at("R@1") - 100.0 / 101.0) <= 0.5 && elapsed <= 1800.0;
  o.detail = "ITR R@1 " + fmt("%.2f", itr.at("R@1")) + " R@10 " + fmt("%.2f", itr.at("R@10")) + ", TIR R@1 " +
             fmt("%.2f", tir.at("R@1")) + " R@10 " + fmt("%.2f", tir.at("R@10")) + " over " +
             std::to_string(split.holdout.size()) + " holdout queries x 5 draws; random control R@1 " +
             fmt("%.3f", control.at("R@1")) + "; " + fmt("%.0f s", elapsed);
  return o;
}

// ---- 6: ablation trends on IRTF ----

struct AblationBudget {
  std::size_t stage1 = 1000;
  std::size_t stage2 = 1000;
  std::size_t finetune = 100;  // from-scratch IRTF saturates (R@10 ~97) by 400 steps
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

Outcome ablation(const Options&) {
  const auto start = Clock::now();
  const AblationBudget budget;
  RunConfig rc;
  rc.seed = 7;
  const Corpus corpus = make_corpus(rc);
  const TripletDataset ds = make_triplets(corpus, rc);
  const HoldoutSplit split = make_split(corpus, rc);
  const Vocabulary vocab = build_vocabulary(corpus, ds.triplets);
  const TrainingData data(corpus, vocab, split.train, ds.triplets, rc.model.max_text_len);

  std::map<std::string, double> sum;
  for (std::uint64_t seed : budget.seeds) {
    ModelConfig mc = effective_model_config(rc, vocab);
    mc.init_seed = derive_seed(seed, "ablation-init");
    TrainConfig tc = rc.train;
    tc.seed = derive_seed(seed, "ablation-train");
    auto irtf_r10 = [&](TrainerState state, const std::string& arm) {
      TrainConfig fc = tc;
      fc.finetune_steps = budget.finetune;
      finetune(state, Task::kIrtf, data, fc);
      const double r10 = evaluate_task(state, Task::kIrtf, corpus, data, split, rc).at("average.R@10");
      note("seed " + std::to_string(seed) + " " + arm + " IRTF R@10 " + fmt("%.2f", r10));
      sum[arm] += r10;
    };
    const std::uint64_t trainer_seed = derive_seed(seed, "ablation-trainer");
    irtf_r10(TrainerState(mc, trainer_seed), "none");

    TrainerState shared(mc, trainer_seed);
    TrainConfig s1 = tc;
    s1.stage1_steps = budget.stage1;
    s1.stage2_steps = 0;
    pretrain(shared, data, s1);
    {
      TrainerState paired = shared;  // paired-only: the stage-2 budget spent on more stage-1 steps
      TrainConfig more = s1;
      more.stage1_steps = budget.stage2;
      pretrain(paired, data, more);
      irtf_r10(std::move(paired), "paired");
    }
    for (bool boot : {false, true}) {
      TrainerState full = shared;
      TrainConfig s2 = tc;
      s2.stage1_steps = 0;
      s2.stage2_steps = budget.stage2;
      s2.bootstrap = boot;
      pretrain(full, data, s2);
      irtf_r10(std::move(full), boot ? "bootstrap" : "full");
    }
  }
  const double n = static_cast<double>(budget.seeds.size());
  const double none = sum["none"] / n, paired = sum["paired"] / n, full = sum["full"] / n, boot = sum["bootstrap"] / n;
  const bool a = paired > none, b = full - paired > 0.0, c = boot >= full - 1.0;
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = a && b && c && elapsed <= 5400.0;
  o.detail = "mean IRTF R@10 over " + std::to_string(budget.seeds.size()) + " seeds: none " + fmt("%.2f", none) +
             ", paired " + fmt("%.2f", paired) + ", +HMC/RCLM " + fmt("%.2f", full) + ", +bootstrap " +
             fmt("%.2f", boot) + "; (a) " + (a ? "yes" : "no") + " (b) " + (b ? "yes" : "no") + " (c) " +
             (c ? "yes" : "no") + "; " + fmt("%.0f s", elapsed);
  return o;
}

// ---- 7: gate identity ----

Outcome gate_identity(const Options&) {
  const Corpus corpus = generate_corpus(AttributeSchema::fashion_default(), 16, 3);
  const Vocabulary vocab = build_vocabulary(corpus, {});
  const TrainingData data(corpus, vocab, {}, {}, 24);
  std::size_t checked = 0, equal = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig c;
    c.vocab_size = vocab.size();
    c.init_seed = seed;
    FadVlpModel<float> model(c);
    testing::tie_mode_embeddings(model);
    const std::vector<std::size_t> refs{0, 1, 2, 3}, tgts{4, 5, 6, 7};
    const auto ref = model.encode_images(data.images.batch(refs));
    const auto tgt = model.encode_images(data.images.batch(tgts));
    const PairBatch<float> pairs = make_pair_batch(data, refs);
    const auto rel = model.relative_caption_logits(pairs.captions, ref, tgt);
    const auto cap = model.caption_logits(pairs.captions, ref);
    checked += rel.numel();
    for (std::size_t i = 0; i < rel.numel() && i < cap.numel(); ++i) equal += rel[i] == cap[i];
  }
  return {checked > 0 && equal == checked,
          std::to_string(equal) + "/" + std::to_string(checked) + " logits bit-identical over 3 initializations"};
}

// ---- 8: metric implementations ----

Outcome metric_oracles(const Options&) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto f = testing::caption_fixture(seed);
    worst = std::max(worst, std::abs(corpus_bleu4(f.hyps, f.refs) - testing::oracle_bleu(f.hyps, f.refs)));
    worst = std::max(worst, std::abs(cider_d(f.hyps, f.refs) - testing::oracle_cider(f.hyps, f.refs)));
    for (std::size_t i = 0; i < f.hyps.size(); ++i)
      worst = std::max(worst, std::abs(rouge_l(f.hyps[i], f.refs[i]) - testing::oracle_rouge(f.hyps[i], f.refs[i])));
    std::mt19937_64 rng(seed);
    const std::size_t k = 2 + rng() % 6, n = 1 + rng() % 40;
    std::vector<std::size_t> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = rng() % k;
      pred[i] = rng() % 3 == 0 ? gold[i] : rng() % k;
    }
    worst = std::max(worst, std::abs(classification_report(pred, gold, k, "cr").at("macro_f1") -
                                     testing::oracle_macro_f1(pred, gold, k)));
  }
  const auto id = caption_metrics({"a red floral dress with long sleeves ."}, {{"a red floral dress with long sleeves ."}});
  const bool identity = std::abs(id.bleu4 - 1.0) < 1e-12 && std::abs(id.rouge_l - 1.0) < 1e-12;
  return {worst < 1e-9 && identity, "max |difference| vs second implementations " + fmt("%.2e", worst) +
                                        " over 20 fixtures; identity BLEU-4 " + fmt("%.6f", id.bleu4) +
                                        " ROUGE-L " + fmt("%.6f", id.rouge_l)};
}

// ---- 9: protocol calibration ----

Outcome calibration(const Options&) {
  const Corpus corpus = generate_corpus(AttributeSchema::fashion_default(), 2000, 9);
  std::vector<std::size_t> queries(corpus.size());
  for (std::size_t i = 0; i < queries.size(); ++i) queries[i] = i;
  CandidateProtocol protocol;
  protocol.seed = 31;
  const auto r = crossmodal_protocol(random_unit_embeddings(corpus.size(), 32, 5),
                                     random_unit_embeddings(corpus.size(), 32, 6), queries,
                                     ItemLabels::from_corpus(corpus), Direction::kImageToText, protocol, "itr");
  const double draws = static_cast<double>(queries.size() * protocol.repeats);
  return {std::abs(r.at("R@1") - 100.0 / 101.0) <= 0.5,
          "R@1 " + fmt("%.3f", r.at("R@1")) + " vs 100/101 = 0.990 over " + fmt("%.0f", draws) + " draws"};
}

// ---- 10: determinism of the pipeline command ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const Options& opt) {
  if (opt.cli.empty() || !fs::exists(opt.cli)) return {false, "command-line tool not found (pass --cli)"};
  const fs::path root = opt.work_dir / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "config.json") << R"({
  "data": {"items": 400},
  "model": {"width": 32, "ffn_width": 64, "stage_widths": [8, 16, 32, 32], "joint_dim": 16, "heads": 2},
  "train": {"stage1_steps": 30, "stage2_steps": 30, "finetune_steps": 15, "batch_size": 16, "bootstrap": true,
            "bootstrap_warmup": 10}
})";
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + opt.cli + "\" pipeline --config \"" + (root / "config.json").string() +
                            "\" --seed 11 --out-dir \"" + (root / run).string() + "\" 2> \"" +
                            (root / (std::string(run) + ".log")).string() + "\"";
    if (std::system(cmd.c_str()) != 0) return {false, std::string("pipeline run ") + run + " failed"};
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    const std::string name = e.path().filename().string();
    const bool artifact = name == "corpus.jsonl" || name == "triplets.jsonl" || name == "triplet_stats.json" ||
                          name.rfind("ckpt", 0) == 0 || name.rfind("metrics_", 0) == 0 ||
                          name.rfind("results", 0) == 0 || name.rfind("loss_curve", 0) == 0 || name == "config.json";
    if (!artifact) continue;
    ++compared;
    if (!fs::exists(root / "b" / name) || slurp(e.path()) != slurp(root / "b" / name)) differing.push_back(name);
  }
  std::string detail = std::to_string(compared - differing.size()) + "/" + std::to_string(compared) +
                       " corpus, triplet, checkpoint and metrics files byte-identical";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {compared >= 20 && differing.empty(), detail};
}

struct Criterion {
  int id;
  const char* title;
  Outcome (*run)(const Options&);
};

const Criterion kCriteria[] = {
    {1, "gradient suite", gradient_suite},       {2, "closed-form losses", closed_forms},
    {3, "triplet oracle", triplet_oracle},       {4, "delta arithmetic", delta_arithmetic},
    {5, "ITR/TIR learnability", learnability},   {6, "ablation trends", ablation},
    {7, "gate identity", gate_identity},         {8, "metric implementations", metric_oracles},
    {9, "protocol calibration", calibration},    {10, "pipeline determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  Options opt;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      selected.insert(std::atoi(argv[++i]));
    } else if (a == "--cli" && i + 1 < argc) {
      opt.cli = argv[++i];
    } else if (a == "--work-dir" && i + 1 < argc) {
      opt.work_dir = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]... [--cli PATH] [--work-dir DIR]\n", argv[0]);
      return 2;
    }
  }
  bool all_pass = true;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run(opt);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %d %s: %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
