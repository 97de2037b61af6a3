#pragma once

// End-to-end orchestration. Workspace layout:
//   <ws>/config.json                      resolved configuration
//   <ws>/data/                            dataset (manifest.json written last)
//   <ws>/pretrain/F.ckpt, loss.csv        frozen network for the semantic term
//   <ws>/translation/translator.ckpt, loss.csv
//   <ws>/rounds/R<k>/<model>.ckpt, <model>_loss.csv
//   <ws>/rounds/R<k>/metrics.json         target-val scores of members and ensemble
//   <ws>/rounds/R<k>/pseudo.json          pseudo-label statistics, MC accuracy
//   <ws>/rounds/R<k>/state.json           round summary (written last)
//   <ws>/rounds/R<k>/variants/<name>/     extra single-model runs
//   <ws>/pseudo/R<k>/<id>.png, meta.json  pseudo-labels produced by round k
//   <ws>/report/                          report.json, report.csv, plots
// Every stage is skipped when its final artifact exists, so an interrupted run
// resumes from the last completed stage.

#include <cstdio>
#include <functional>
#include <future>
#include <set>

#include "studa/config.hpp"
#include "studa/core/plot.hpp"
#include "studa/metrics/evaluate.hpp"
#include "studa/metrics/report.hpp"
#include "studa/pseudo/pseudo.hpp"
#include "studa/segmentation/train.hpp"
#include "studa/synth/dataset.hpp"
#include "studa/translation/train.hpp"

namespace studa::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using SegModel = seg::SegmentationModel<float>;
using Translator = translation::TranslationModel<float>;

inline std::string sigma_tag(double sigma2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", sigma2);
  return buf;
}

inline std::string target_model_name(double sigma2) { return "F_target_s" + sigma_tag(sigma2); }
inline constexpr const char* kSourceModel = "F_source";
inline constexpr const char* kEnsemble = "ensemble";

struct Workspace {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path data() const { return root / "data"; }
  fs::path pretrain_ckpt() const { return root / "pretrain" / "F.ckpt"; }
  fs::path pretrain_log() const { return root / "pretrain" / "loss.csv"; }
  fs::path translator_ckpt() const { return root / "translation" / "translator.ckpt"; }
  fs::path translator_log() const { return root / "translation" / "loss.csv"; }
  fs::path round_dir(int r) const { return root / "rounds" / ("R" + std::to_string(r)); }
  fs::path round_state(int r) const { return round_dir(r) / "state.json"; }
  fs::path model_ckpt(int r, const std::string& m) const { return round_dir(r) / (m + ".ckpt"); }
  fs::path model_log(int r, const std::string& m) const { return round_dir(r) / (m + "_loss.csv"); }
  fs::path variant_dir(int r, const std::string& name) const { return round_dir(r) / "variants" / name; }
  fs::path pseudo_dir(int r) const { return root / "pseudo" / ("R" + std::to_string(r)); }
  fs::path report_dir() const { return root / "report"; }
};

// Called after every completed stage with its name (e.g. "round1/F_source").
// Tests use it to inject failures.
struct Hooks {
  std::function<void(const std::string&)> after_stage;
};

struct Context {
  PipelineConfig cfg;
  Workspace ws;
  int jobs = 1;
  Hooks hooks;
  std::function<void(const std::string&)> progress;  // optional human-readable log

  void done(const std::string& stage) const {
    if (progress) progress(stage);
    if (hooks.after_stage) hooks.after_stage(stage);
  }
};

// ---- stage seeds -----------------------------------------------------------

inline std::uint64_t stage_seed(const PipelineConfig& c, const std::string& stage, std::uint64_t index = 0) {
  return derive_seed(c.seed, stage, index);
}

// Per-image stream for Monte-Carlo style draws.
inline std::uint64_t mc_seed(const PipelineConfig& c, int round, const std::string& image_id) {
  return derive_seed(c.seed, "mc/" + image_id, static_cast<std::uint64_t>(round));
}

// ---- dataset ----------------------------------------------------------------

inline void ensure_dataset(const Context& ctx) {
  const auto manifest = ctx.ws.data() / "manifest.json";
  const auto want = json_hash(json(ctx.cfg.dataset));
  if (fs::exists(manifest)) {
    const auto m = synth::read_manifest(ctx.ws.data());
    if (m.json.at("config_hash").get<std::string>() != want)
      throw ConfigError("dataset in " + ctx.ws.data().string() + " was generated with a different configuration");
    return;
  }
  synth::generate_dataset(ctx.cfg.dataset, ctx.ws.data());
  ctx.done("datagen");
}

struct Data {
  std::vector<synth::LabeledImage> source_train, source_val, target_train, target_val;
};

inline Data load_data(const Context& ctx) {
  Data d;
  d.source_train = synth::load_dataset(ctx.ws.data(), "source-train");
  d.target_train = synth::load_dataset(ctx.ws.data(), "target-train");
  d.target_val = synth::load_dataset(ctx.ws.data(), "target-val");
  for (const auto& s : ctx.cfg.dataset.splits)
    if (s.name == "source-val") d.source_val = synth::load_dataset(ctx.ws.data(), "source-val");
  return d;
}

// ---- checkpoints ------------------------------------------------------------

inline SegModel load_seg(const fs::path& p) {
  if (!fs::exists(p)) throw PrerequisiteError("missing checkpoint " + p.string());
  return SegModel::from_checkpoint(Checkpoint::load(p));
}

inline Translator load_translator(const fs::path& p) {
  if (!fs::exists(p)) throw PrerequisiteError("missing translator checkpoint " + p.string());
  return Translator::from_checkpoint(Checkpoint::load(p));
}

inline void save_seg(const SegModel& m, const fs::path& p, const PipelineConfig& cfg) {
  auto ck = m.to_checkpoint();
  ck.meta["pipeline_config_hash"] = json_hash(json(cfg));
  ck.save(p);
}

// Runs `fn` with no withheld-label read allowed; verifies the read counter.
template <class Fn>
auto guarded_training(const std::string& stage, Fn&& fn) {
  const long before = synth::withheld_label_reads();
  auto out = fn();
  if (synth::withheld_label_reads() != before)
    throw LeakError("withheld labels were read during " + stage);
  return out;
}

// ---- pretraining and translation -------------------------------------------

inline void ensure_pretrained(const Context& ctx, const Data& d) {
  if (fs::exists(ctx.ws.pretrain_ckpt())) return;
  LossLog log;
  seg::TrainOptions o{ctx.cfg.pretrain, stage_seed(ctx.cfg, "pretrain"), nullptr, &log};
  auto F = guarded_training("pretrain", [&] { return seg::pretrain_semantic_net(o, {&d.source_train, &d.target_train}); });
  log.write_csv(ctx.ws.pretrain_log());
  save_seg(F, ctx.ws.pretrain_ckpt(), ctx.cfg);
  ctx.done("pretrain");
}

// Trains a translator into `ckpt` unless present. The semantic term uses the
// pretrained network when enabled.
inline void ensure_translator(const Context& ctx, const Data& d, const fs::path& ckpt, const fs::path& log_path,
                              const TranslationConfig& tcfg) {
  if (fs::exists(ckpt)) return;
  std::optional<SegModel> F;
  if (tcfg.use_sem && tcfg.iterations > 0) F.emplace(load_seg(ctx.ws.pretrain_ckpt()));
  LossLog log;
  auto tr = guarded_training("translation", [&] {
    return translation::train_translation(tcfg, {&d.source_train, &d.target_train}, stage_seed(ctx.cfg, "translation"),
                                          F ? &*F : nullptr, &log);
  });
  log.write_csv(log_path);
  auto ck = tr.to_checkpoint();
  ck.meta["config"] = tcfg;
  ck.meta["pipeline_config_hash"] = json_hash(json(ctx.cfg));
  ck.save(ckpt);
  ctx.done("translation");
}

// ---- round -----------------------------------------------------------------

struct ModelSpec {
  std::string name;
  seg::Role role = seg::Role::target;
  double sigma2 = 1.0;
  bool frozen_style = false;
};

inline std::vector<ModelSpec> triplet(const PipelineConfig& c) {
  std::vector<ModelSpec> out{{kSourceModel, seg::Role::source, 1.0, false}};
  for (double s : c.sigma2) out.push_back({target_model_name(s), seg::Role::target, s, false});
  return out;
}

struct RoundState {
  int round = 0;
  std::map<std::string, std::string> checkpoints;  // model -> path
  std::string pseudo_store;
  std::string translator_hash;
  json metrics = json::object();  // model -> summary (miou, pixel_accuracy, iou, ignored)
  json pseudo = json::object();   // thresholds, retention, accuracy on target-train
  json mc_accuracy = json::object();  // "K=<k>" -> pixel accuracy of F_source MC labels on target-train
  long withheld_reads_during_training = 0;

  double miou(const std::string& model) const { return metrics.at(model).at("miou").get<double>(); }
};

inline void to_json(json& j, const RoundState& s) {
  j = {{"round", s.round},
       {"checkpoints", s.checkpoints},
       {"pseudo_store", s.pseudo_store},
       {"translator_hash", s.translator_hash},
       {"metrics", s.metrics},
       {"pseudo", s.pseudo},
       {"mc_accuracy", s.mc_accuracy},
       {"withheld_reads_during_training", s.withheld_reads_during_training}};
}

inline void from_json(const json& j, RoundState& s) {
  s.round = j.at("round").get<int>();
  s.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
  s.pseudo_store = j.at("pseudo_store").get<std::string>();
  s.translator_hash = j.at("translator_hash").get<std::string>();
  s.metrics = j.at("metrics");
  s.pseudo = j.at("pseudo");
  s.mc_accuracy = j.at("mc_accuracy");
  s.withheld_reads_during_training = j.at("withheld_reads_during_training").get<long>();
}

inline void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw Error("cannot write " + tmp);
    f << j.dump(2) << '\n';
  }
  fs::rename(tmp, p);
}

inline json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw PrerequisiteError("cannot read " + p.string());
  return json::parse(f);
}

// Trains one segmentation network of round `round` into `ckpt`.
inline void train_model(const Context& ctx, const Data& d, const Translator& tr, const ModelSpec& spec, int round,
                        const seg::LabelIndex* pseudo, const fs::path& ckpt, const fs::path& log_path,
                        std::uint64_t seed) {
  if (fs::exists(ckpt)) return;
  std::optional<SegModel> init;
  if (ctx.cfg.fine_tune_from_previous && round > 0) init.emplace(load_seg(ctx.ws.model_ckpt(round - 1, spec.name)));
  LossLog log;
  const seg::TrainData data{&d.source_train, &d.target_train, pseudo};
  auto m = guarded_training(spec.name, [&] {
    if (spec.role == seg::Role::source) {
      seg::TrainOptions o{ctx.cfg.source, seed, init ? &*init : nullptr, &log};
      return seg::train_source_network(o, &tr, data);
    }
    if (spec.role == seg::Role::pretrain) {
      // No translation: raw source images, the target recipe otherwise.
      seg::TrainOptions o{ctx.cfg.target, seed, init ? &*init : nullptr, &log};
      return seg::pretrain_semantic_net(o, data);
    }
    seg::TrainOptions o{ctx.cfg.target, seed, init ? &*init : nullptr, &log};
    return seg::train_target_network(o, &tr, data, {spec.sigma2, spec.frozen_style});
  });
  m.info["round"] = round;
  m.info["model"] = spec.name;
  log.write_csv(log_path);
  save_seg(m, ckpt, ctx.cfg);
}

// Probability maps of one member on a batch of images, [N,C,H,W].
struct Member {
  std::string name;
  const SegModel* model;
  bool monte_carlo;  // F_source: average over K target->source translations
};

// Per-image predictions of every member plus prefix MC means at `report_at`.
struct BatchPrediction {
  std::map<std::string, Tensor<float>> members;  // [N,C,H,W]
  std::vector<Tensor<float>> mc_prefix;           // one per report_at entry
};

inline BatchPrediction predict_batch(const Context& ctx, const Translator& tr, const std::vector<Member>& members,
                                     const std::vector<const synth::LabeledImage*>& ims, int round,
                                     const std::vector<int>& report_at) {
  BatchPrediction out;
  const auto x = synth::batch_tensor<float>(ims);
  for (const auto& m : members) {
    if (!m.monte_carlo) {
      out.members[m.name] = m.model->predict(x);
      continue;
    }
    std::vector<std::vector<Tensor<float>>> styles;
    for (const auto* im : ims) {
      Rng rng(mc_seed(ctx.cfg, round, im->id));
      styles.push_back(pseudo::draw_styles<float>(ctx.cfg.pseudo.K, tr.arch().style_dim, 1.0, rng));
    }
    auto prefix = pseudo::mc_prefix_means(tr, *m.model, x, styles, report_at);
    out.members[m.name] = prefix.back();
    out.mc_prefix = std::move(prefix);
  }
  return out;
}

inline Tensor<float> ensemble_batch(const std::map<std::string, Tensor<float>>& members) {
  Tensor<float> sum;
  for (const auto& [_, p] : members) {
    if (sum.empty())
      sum = Tensor<float>(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) sum[i] += p[i] / static_cast<float>(members.size());
  }
  return sum;
}

inline std::vector<int> mc_report_points(int K) {
  std::set<int> s{1, std::min(5, K), K};
  return {s.begin(), s.end()};
}

inline constexpr int kEvalBatch = 16;

inline void require_round_inputs(const Context& ctx, int round) {
  const auto r = std::to_string(round);
  if (!fs::exists(ctx.ws.translator_ckpt())) throw PrerequisiteError("round " + r + " needs a trained translator");
  if (!fs::exists(ctx.ws.pretrain_ckpt())) throw PrerequisiteError("round " + r + " needs the pretrained network");
  if (round > 0 && !pseudo::store_complete(ctx.ws.pseudo_dir(round - 1)))
    throw PrerequisiteError("round " + r + " needs pseudo-labels of round " + std::to_string(round - 1));
}

inline std::optional<seg::LabelIndex> round_pseudo_labels(const Context& ctx, const Data& d, int round) {
  if (round == 0) return std::nullopt;
  std::vector<std::string> ids;
  for (const auto& im : d.target_train) ids.push_back(im.id);
  return pseudo::read_store(ctx.ws.pseudo_dir(round - 1), ids);
}

// Trains the triplet of round `round` (existing checkpoints are kept). Returns
// the number of withheld-label reads observed while training.
inline long train_round(const Context& ctx, const Data& d, int round) {
  require_round_inputs(ctx, round);
  const auto pseudo = round_pseudo_labels(ctx, d, round);
  const Translator tr = load_translator(ctx.ws.translator_ckpt());
  const long reads_before = synth::withheld_label_reads();
  const auto specs = triplet(ctx.cfg);
  auto train_one = [&](const ModelSpec& s) {
    train_model(ctx, d, tr, s, round, pseudo ? &*pseudo : nullptr, ctx.ws.model_ckpt(round, s.name),
                ctx.ws.model_log(round, s.name), stage_seed(ctx.cfg, "round/" + s.name, round));
  };
  std::vector<ModelSpec> todo;
  for (const auto& s : specs)
    if (!fs::exists(ctx.ws.model_ckpt(round, s.name))) todo.push_back(s);
  if (ctx.jobs > 1) {
    std::vector<std::future<void>> running;
    for (const auto& s : todo) {
      if (static_cast<int>(running.size()) >= ctx.jobs) {
        running.front().get();
        running.erase(running.begin());
      }
      running.push_back(std::async(std::launch::async, train_one, s));
    }
    for (auto& f : running) f.get();
    for (const auto& s : todo) ctx.done("round" + std::to_string(round) + "/" + s.name);
  } else {
    for (const auto& s : todo) {
      train_one(s);
      ctx.done("round" + std::to_string(round) + "/" + s.name);
    }
  }
  return synth::withheld_label_reads() - reads_before;
}

struct LoadedRound {
  Translator translator;
  std::vector<ModelSpec> specs;
  std::vector<SegModel> models;

  std::vector<Member> members() const {
    std::vector<Member> out;
    for (std::size_t i = 0; i < specs.size(); ++i)
      out.push_back({specs[i].name, &models[i], specs[i].role == seg::Role::source});
    return out;
  }
};

inline LoadedRound load_round(const Context& ctx, int round) {
  LoadedRound lr{load_translator(ctx.ws.translator_ckpt()), triplet(ctx.cfg), {}};
  lr.models.reserve(lr.specs.size());
  for (const auto& s : lr.specs) lr.models.push_back(load_seg(ctx.ws.model_ckpt(round, s.name)));
  return lr;
}

inline fs::path round_metrics_path(const Context& ctx, int round) { return ctx.ws.round_dir(round) / "metrics.json"; }
inline fs::path round_pseudo_path(const Context& ctx, int round) { return ctx.ws.round_dir(round) / "pseudo.json"; }

// Target-val mIoU of every member and of their uniform ensemble.
inline json evaluate_round(const Context& ctx, const Data& d, int round) {
  const auto path = round_metrics_path(ctx, round);
  if (fs::exists(path)) return read_json(path);
  const auto lr = load_round(ctx, round);
  const auto members = lr.members();
  std::map<std::string, metrics::ConfusionMatrix> cms;
  for (std::size_t b = 0; b < d.target_val.size(); b += kEvalBatch) {
    std::vector<const synth::LabeledImage*> ims;
    std::vector<std::uint8_t> gt;
    for (std::size_t i = b; i < std::min(d.target_val.size(), b + kEvalBatch); ++i) {
      ims.push_back(&d.target_val[i]);
      gt.insert(gt.end(), d.target_val[i].labels.begin(), d.target_val[i].labels.end());
    }
    const auto pred = predict_batch(ctx, lr.translator, members, ims, round, {ctx.cfg.pseudo.K});
    for (const auto& [name, p] : pred.members) cms[name].accumulate(metrics::argmax_channels(p), gt);
    cms[kEnsemble].accumulate(metrics::argmax_channels(ensemble_batch(pred.members)), gt);
  }
  json out = json::object();
  for (const auto& [name, cm] : cms) out[name] = metrics::summary_json(cm);
  write_json(path, out);
  ctx.done("round" + std::to_string(round) + "/ensemble");
  return out;
}

// Ensemble pseudo-labels on target-train into pseudo/R<round>, then (outside
// every training stage) their accuracy against the withheld ground truth and
// the accuracy of F_source Monte-Carlo labels for K in {1, 5, K}.
inline json pseudolabel_round(const Context& ctx, const Data& d, int round) {
  const auto path = round_pseudo_path(ctx, round);
  if (fs::exists(path) && pseudo::store_complete(ctx.ws.pseudo_dir(round))) return read_json(path);
  const auto lr = load_round(ctx, round);
  const auto members = lr.members();
  const auto report_at = mc_report_points(ctx.cfg.pseudo.K);
  const int C = synth::kNumClasses;
  pseudo::ThresholdCollector<float> collector(C);
  std::vector<seg::ProbabilityMap<float>> ens_maps;
  std::map<int, std::vector<std::uint8_t>> mc_labels;  // K -> F_source MC argmax over all images
  ens_maps.reserve(d.target_train.size());
  for (std::size_t b = 0; b < d.target_train.size(); b += kEvalBatch) {
    std::vector<const synth::LabeledImage*> ims;
    for (std::size_t i = b; i < std::min(d.target_train.size(), b + kEvalBatch); ++i) ims.push_back(&d.target_train[i]);
    const auto pred = predict_batch(ctx, lr.translator, members, ims, round, report_at);
    for (auto& m : seg::split_maps(ensemble_batch(pred.members))) {
      collector.add(m);
      ens_maps.push_back(std::move(m));
    }
    for (std::size_t k = 0; k < report_at.size(); ++k) {
      const auto l = metrics::argmax_channels(pred.mc_prefix[k]);
      auto& dst = mc_labels[report_at[k]];
      dst.insert(dst.end(), l.begin(), l.end());
    }
  }
  const double r = ctx.cfg.pseudo.r_for_round(round);
  const auto th = collector.finish(r, ctx.cfg.pseudo.max_threshold);
  std::vector<std::string> provenance;
  json contributing = json::object();
  for (const auto& s : lr.specs) {
    provenance.push_back(s.name);
    contributing[s.name] = {{"path", ctx.ws.model_ckpt(round, s.name).string()},
                            {"hash", file_hash(ctx.ws.model_ckpt(round, s.name))}};
  }
  std::map<std::string, pseudo::PseudoLabelMap> hard;
  for (std::size_t i = 0; i < d.target_train.size(); ++i)
    hard.emplace(d.target_train[i].id, pseudo::harden(ens_maps[i], th, round, provenance));
  const auto translator_hash = file_hash(ctx.ws.translator_ckpt());
  pseudo::write_store(ctx.ws.pseudo_dir(round), hard,
                      {{"round", round},
                       {"r", r},
                       {"thresholds", pseudo::thresholds_json(th)},
                       {"K", ctx.cfg.pseudo.K},
                       {"sigma2", ctx.cfg.sigma2},
                       {"contributing", contributing},
                       {"translator_hash", translator_hash},
                       {"seed", ctx.cfg.seed}});

  const auto gt = synth::load_withheld_labels(ctx.ws.data());
  metrics::ConfusionMatrix retained(C);
  long kept = 0, pixels = 0;
  std::vector<std::uint8_t> all_gt;
  for (const auto& g : gt) {
    const auto& h = hard.at(g.id).labels;
    std::vector<std::uint8_t> masked_gt = g.labels, pred(h.size());
    for (std::size_t p = 0; p < h.size(); ++p) {
      ++pixels;
      if (h[p] == synth::kIgnoreLabel) {
        masked_gt[p] = synth::kIgnoreLabel;
      } else {
        ++kept;
        pred[p] = h[p];
      }
    }
    retained.accumulate(pred, masked_gt);
    all_gt.insert(all_gt.end(), g.labels.begin(), g.labels.end());
  }
  json mc = json::object();
  for (const auto& [k, labels] : mc_labels) {
    metrics::ConfusionMatrix cm(C);
    cm.accumulate(labels, all_gt);
    mc["K=" + std::to_string(k)] = metrics::pixel_accuracy(cm);
  }
  json out = {{"store", ctx.ws.pseudo_dir(round).string()},
              {"r", r},
              {"theta", th.theta},
              {"counts", th.counts},
              {"retained_fraction", pixels ? static_cast<double>(kept) / static_cast<double>(pixels) : 0.0},
              {"retained_accuracy", metrics::pixel_accuracy(retained)},
              {"mc_accuracy", mc}};
  write_json(path, out);
  ctx.done("round" + std::to_string(round) + "/pseudo");
  return out;
}

// train -> ensemble evaluation -> pseudo-labels; state.json marks completion.
inline RoundState run_round(const Context& ctx, const Data& d, int round) {
  if (fs::exists(ctx.ws.round_state(round))) return read_json(ctx.ws.round_state(round)).get<RoundState>();
  RoundState st;
  st.round = round;
  st.withheld_reads_during_training = train_round(ctx, d, round);
  st.translator_hash = file_hash(ctx.ws.translator_ckpt());
  for (const auto& s : triplet(ctx.cfg)) st.checkpoints[s.name] = ctx.ws.model_ckpt(round, s.name).string();
  st.metrics = evaluate_round(ctx, d, round);
  auto p = pseudolabel_round(ctx, d, round);
  st.pseudo_store = p.at("store").get<std::string>();
  st.mc_accuracy = p.at("mc_accuracy");
  p.erase("mc_accuracy");
  p.erase("store");
  st.pseudo = p;
  write_json(ctx.ws.round_state(round), st);
  ctx.done("round" + std::to_string(round) + "/state");
  return st;
}

// ---- single-model variants ---------------------------------------------------

// Pixel accuracy of a source network's K-sample Monte-Carlo labels on
// target-train, against the withheld ground truth.
inline double source_mc_accuracy(const Context& ctx, const Data& d, const Translator& tr, const SegModel& m,
                                 int round) {
  const std::vector<Member> members{{kSourceModel, &m, true}};
  const auto gt = synth::load_withheld_labels(ctx.ws.data());
  std::map<std::string, const synth::LabeledImage*> by_id;
  for (const auto& g : gt) by_id[g.id] = &g;
  metrics::ConfusionMatrix cm;
  for (std::size_t b = 0; b < d.target_train.size(); b += kEvalBatch) {
    std::vector<const synth::LabeledImage*> ims;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = b; i < std::min(d.target_train.size(), b + kEvalBatch); ++i) {
      ims.push_back(&d.target_train[i]);
      const auto& l = by_id.at(d.target_train[i].id)->labels;
      labels.insert(labels.end(), l.begin(), l.end());
    }
    const auto pred = predict_batch(ctx, tr, members, ims, round, {ctx.cfg.pseudo.K});
    cm.accumulate(metrics::argmax_channels(pred.members.at(kSourceModel)), labels);
  }
  return metrics::pixel_accuracy(cm);
}

struct VariantSpec {
  std::string name;             // output directory under rounds/R<k>/variants
  ModelSpec model;              // network to train
  std::string seed_of;          // reuse the stage seed of this triplet member (paired runs)
  fs::path translator;          // empty: the workspace translator
  std::optional<bool> adversarial;  // override of the role's use_adversarial
};

// Trains one network outside the triplet and evaluates it on target-val.
// Returns {"miou", ...}; results are cached in <variant dir>/metrics.json.
inline json run_variant(const Context& ctx, const Data& d, int round, const VariantSpec& v) {
  const auto dir = ctx.ws.variant_dir(round, v.name);
  if (fs::exists(dir / "metrics.json")) return read_json(dir / "metrics.json");
  const fs::path tr_path = v.translator.empty() ? ctx.ws.translator_ckpt() : v.translator;
  const Translator tr = load_translator(tr_path);
  require_round_inputs(ctx, round);
  const auto pseudo = round_pseudo_labels(ctx, d, round);
  Context c2 = ctx;
  if (v.adversarial) {
    c2.cfg.source.use_adversarial = *v.adversarial;
    c2.cfg.target.use_adversarial = *v.adversarial;
  }
  const auto seed = stage_seed(ctx.cfg, "round/" + (v.seed_of.empty() ? v.model.name : v.seed_of), round);
  train_model(c2, d, tr, v.model, round, pseudo ? &*pseudo : nullptr, dir / "model.ckpt", dir / "loss.csv", seed);
  const auto m = load_seg(dir / "model.ckpt");
  json out;
  if (v.model.role == seg::Role::source) {
    // Source networks are scored through K-sample translation, as in the triplet.
    std::vector<Member> members{{v.model.name, &m, true}};
    metrics::ConfusionMatrix cm;
    for (std::size_t b = 0; b < d.target_val.size(); b += kEvalBatch) {
      std::vector<const synth::LabeledImage*> ims;
      std::vector<std::uint8_t> gt;
      for (std::size_t i = b; i < std::min(d.target_val.size(), b + kEvalBatch); ++i) {
        ims.push_back(&d.target_val[i]);
        gt.insert(gt.end(), d.target_val[i].labels.begin(), d.target_val[i].labels.end());
      }
      const auto pred = predict_batch(ctx, tr, members, ims, round, {ctx.cfg.pseudo.K});
      cm.accumulate(metrics::argmax_channels(pred.members.at(v.model.name)), gt);
    }
    out = metrics::summary_json(cm);
    out["target_train_mc_accuracy"] = source_mc_accuracy(ctx, d, tr, m, round);
  } else {
    out = metrics::summary_json(metrics::evaluate(m, d.target_val));
  }
  out["translator_hash"] = file_hash(tr_path);
  write_json(dir / "metrics.json", out);
  ctx.done("variant/" + v.name);
  return out;
}

// ---- report ------------------------------------------------------------------

inline json build_report(const Context& ctx, const std::vector<RoundState>& rounds) {
  json rep;
  rep["seed"] = ctx.cfg.seed;
  rep["config_hash"] = json_hash(json(ctx.cfg));
  rep["translator_hash"] = rounds.empty() ? "" : rounds.front().translator_hash;
  rep["rounds"] = json::array();
  for (const auto& s : rounds) {
    json r = {{"round", s.round},
              {"metrics", s.metrics},
              {"pseudo", s.pseudo},
              {"mc_accuracy", s.mc_accuracy},
              {"translator_hash", s.translator_hash},
              {"withheld_reads_during_training", s.withheld_reads_during_training}};
    rep["rounds"].push_back(r);
  }
  return rep;
}

// report.json, report.csv (round, model, miou, pixel_accuracy), per-class CSV,
// and plots: mIoU per round and model, training loss curves.
inline void write_report(const Context& ctx, const json& rep) {
  const auto dir = ctx.ws.report_dir();
  fs::create_directories(dir);
  write_json(dir / "report.json", rep);
  {
    std::ofstream f(dir / "report.csv");
    f << "round,model,miou,pixel_accuracy\n";
    f.precision(9);
    for (const auto& r : rep.at("rounds"))
      for (auto it = r.at("metrics").begin(); it != r.at("metrics").end(); ++it)
        f << r.at("round").get<int>() << ',' << it.key() << ',' << it.value().at("miou").get<double>() << ','
          << it.value().at("pixel_accuracy").get<double>() << '\n';
  }
  {
    std::ofstream f(dir / "class_iou.csv");
    f << "round,model,class,iou\n";
    f.precision(9);
    for (const auto& r : rep.at("rounds"))
      for (auto it = r.at("metrics").begin(); it != r.at("metrics").end(); ++it) {
        const auto& iou = it.value().at("iou");
        for (std::size_t c = 0; c < iou.size(); ++c) {
          f << r.at("round").get<int>() << ',' << it.key() << ',' << synth::kClassNames.at(c) << ',';
          if (!iou[c].is_null()) f << iou[c].get<double>();
          f << '\n';
        }
      }
  }
  // mIoU bars
  std::vector<std::string> groups, series;
  std::vector<std::vector<double>> values;
  for (const auto& s : triplet(ctx.cfg)) series.push_back(s.name);
  series.push_back(kEnsemble);
  for (const auto& r : rep.at("rounds")) {
    groups.push_back("R" + std::to_string(r.at("round").get<int>()));
    std::vector<double> row;
    for (const auto& s : series) row.push_back(r.at("metrics").at(s).at("miou").get<double>());
    values.push_back(row);
  }
  plot::bar_chart(dir / "miou_by_round.png", "TARGET-VAL MIOU PER ROUND", groups, series, values);
  // Loss curves (total loss of every trained network, translator generator total).
  auto curve = [](const fs::path& csv, const std::string& loss, const std::string& label) {
    plot::Series s{label, {}, {}};
    if (!fs::exists(csv)) return s;
    const auto log = LossLog::read_csv(csv);
    for (const auto& row : log.rows())
      if (row.name == loss) {
        s.x.push_back(static_cast<double>(row.iteration));
        s.y.push_back(row.value);
      }
    return s;
  };
  plot::line_chart(dir / "loss_translation.png", "TRANSLATOR LOSSES",
                   {curve(ctx.ws.translator_log(), "L_s", "L_s"), curve(ctx.ws.translator_log(), "L_t", "L_t"),
                    curve(ctx.ws.translator_log(), "L_cycle_content", "L_cycle_content"),
                    curve(ctx.ws.translator_log(), "L_cycle_style", "L_cycle_style")},
                   "ITERATION");
  for (const auto& r : rep.at("rounds")) {
    const int k = r.at("round").get<int>();
    std::vector<plot::Series> ss;
    for (const auto& s : triplet(ctx.cfg)) ss.push_back(curve(ctx.ws.model_log(k, s.name), "total", s.name));
    plot::line_chart(dir / ("loss_round" + std::to_string(k) + ".png"), "SEGMENTATION LOSS ROUND " + std::to_string(k),
                     ss, "ITERATION");
  }
}

inline void write_config(const Context& ctx) {
  if (fs::exists(ctx.ws.config())) {
    const auto old = read_json(ctx.ws.config());
    if (json_hash(old) != json_hash(json(ctx.cfg)))
      throw ConfigError("workspace " + ctx.ws.root.string() + " holds a run with a different configuration");
    return;
  }
  write_json(ctx.ws.config(), json(ctx.cfg));
}

// datagen -> F pretraining -> translation (once) -> rounds 0..R_max -> report.
inline json run_pipeline(const Context& ctx) {
  ctx.cfg.validate();
  fs::create_directories(ctx.ws.root);
  write_config(ctx);
  ensure_dataset(ctx);
  const Data d = load_data(ctx);
  ensure_pretrained(ctx, d);
  ensure_translator(ctx, d, ctx.ws.translator_ckpt(), ctx.ws.translator_log(), ctx.cfg.translation);
  std::vector<RoundState> rounds;
  for (int r = 0; r <= ctx.cfg.rounds; ++r) rounds.push_back(run_round(ctx, d, r));
  const auto rep = build_report(ctx, rounds);
  write_report(ctx, rep);
  return rep;
}

}  // namespace studa::pipeline
