// studa: command-line front end of the adaptation pipeline.
//
//   studa <subcommand> [--workspace DIR] [--config FILE] [--set key=value]... [--seed N]
//
// Every subcommand prints one JSON line on success. Exit status: 0 success,
// 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>
#include <iostream>

#include "studa/pipeline/pipeline.hpp"

namespace {

using namespace studa;
using nlohmann::json;
namespace fs = std::filesystem;
namespace pl = studa::pipeline;

struct Common {
  std::string workspace = "workspace";
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  int jobs = 1;
};

// Base: --config, else <ws>/config.json, else defaults; then --set, then --seed.
PipelineConfig resolve_config(const Common& c) {
  json j = json::object();
  if (!c.config.empty())
    j = read_json_file(c.config);
  else if (fs::exists(fs::path(c.workspace) / "config.json"))
    j = read_json_file((fs::path(c.workspace) / "config.json").string());
  apply_overrides(j, c.overrides);
  if (c.seed) j["seed"] = *c.seed;
  return parse_config(j);
}

pl::Context make_context(const Common& c) {
  pl::Context ctx;
  ctx.cfg = resolve_config(c);
  ctx.ws.root = c.workspace;
  ctx.jobs = c.jobs;
  if (!c.quiet) ctx.progress = [](const std::string& s) { std::cerr << "[studa] " << s << " done" << std::endl; };
  return ctx;
}

void require_dataset(const pl::Context& ctx) {
  if (!fs::exists(ctx.ws.data() / "manifest.json"))
    throw PrerequisiteError("no dataset in " + ctx.ws.data().string() + " (run datagen first)");
  pl::ensure_dataset(ctx);
}

pl::ModelSpec parse_model(const std::string& name, bool frozen) {
  if (frozen && name.rfind("F_target_s", 0) != 0) throw UsageError("--frozen-style applies to F_target_s<sigma2> only");
  if (name == pl::kSourceModel) return {name, seg::Role::source, 1.0, false};
  if (name == "F_plain") return {name, seg::Role::pretrain, 1.0, false};
  const std::string prefix = "F_target_s";
  if (name.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const double s = std::stod(name.substr(prefix.size()), &used);
      if (used == name.size() - prefix.size() && s > 0)
        return {frozen ? name + "_frozen" : name, seg::Role::target, s, frozen};
    } catch (const std::exception&) {
    }
  }
  throw UsageError("unknown model '" + name + "' (expected F_source, F_target_s<sigma2> or F_plain)");
}

json miou_table(const json& metrics) {
  json out = json::object();
  for (auto it = metrics.begin(); it != metrics.end(); ++it) out[it.key()] = it.value().at("miou");
  return out;
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

void print_schema(std::ostream& os) {
  os << "configuration keys (defaults):\n" << config_schema().dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic-translation domain adaptation toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-w,--workspace", common.workspace, "workspace directory");
    sub->add_option("-c,--config", common.config, "pipeline configuration JSON");
    sub->add_option("--set", common.overrides, "override key=value (dotted keys), repeatable");
    sub->add_option("--seed", common.seed, "master seed");
    sub->add_flag("-q,--quiet", common.quiet, "no progress on stderr");
  };

  auto* datagen = app.add_subcommand("datagen", "render the synthetic source/target dataset");
  add_common(datagen);
  datagen->add_option("-o,--out", common.workspace, "workspace directory (alias of --workspace)");

  auto* pretrain = app.add_subcommand("pretrain-sem", "train the network used by the semantic-consistency term");
  add_common(pretrain);

  std::string translation_out;
  auto* translate = app.add_subcommand("train-translation", "train the stochastic translator");
  add_common(translate);
  translate->add_option("-o,--out", translation_out, "output directory (default <ws>/translation)");

  int round = 0;
  std::string model_name, variant, translator_path, pair_with;
  bool frozen_style = false, no_adversarial = false;
  auto* train_round = app.add_subcommand("train-round", "train the networks of one self-training round");
  add_common(train_round);
  train_round->add_option("-r,--round", round, "round index")->check(CLI::NonNegativeNumber);
  train_round->add_option("-j,--jobs", common.jobs, "parallel trainers")->check(CLI::PositiveNumber);
  train_round->add_option("--variant", variant, "train a single extra network under rounds/R<k>/variants/<name>");
  train_round->add_option("--models", model_name,
                          "network of the variant: F_source, F_target_s<sigma2>, or F_plain (raw source images, "
                          "no translation)");
  train_round->add_option("--pair-with", pair_with, "reuse the seed of this triplet network (default: --models)");
  train_round->add_flag("--frozen-style", frozen_style, "variant uses a constant style code (deterministic translation)");
  train_round->add_option("--translator", translator_path, "variant translator checkpoint");
  train_round->add_flag("--no-adversarial", no_adversarial, "variant without the entropy discriminator");

  auto* pseudolabel = app.add_subcommand("pseudolabel", "write ensemble pseudo-labels of a round");
  add_common(pseudolabel);
  pseudolabel->add_option("-r,--round", round, "round index")->check(CLI::NonNegativeNumber);

  auto* ensemble = app.add_subcommand("ensemble", "score a round's networks and their ensemble on target-val");
  add_common(ensemble);
  ensemble->add_option("-r,--round", round, "round index")->check(CLI::NonNegativeNumber);

  std::string checkpoint, split = "target-val", class_csv, summary_path;
  auto* eval = app.add_subcommand("eval", "evaluate a segmentation checkpoint on a split");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "segmentation checkpoint")->required();
  eval->add_option("--split", split, "dataset split");
  eval->add_option("--class-csv", class_csv, "write per-class IoU CSV");
  eval->add_option("--summary", summary_path, "write the summary JSON");

  auto* run_all = app.add_subcommand("run-all", "datagen, pretraining, translation, all rounds, report");
  add_common(run_all);
  run_all->add_option("-j,--jobs", common.jobs, "parallel trainers")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "rebuild report files from completed rounds");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (datagen->parsed()) {
      auto ctx = make_context(common);
      fs::create_directories(ctx.ws.root);
      pl::write_config(ctx);
      pl::ensure_dataset(ctx);
      const auto m = synth::read_manifest(ctx.ws.data());
      json counts = json::object();
      for (auto it = m.json.at("splits").begin(); it != m.json.at("splits").end(); ++it)
        counts[it.key()] = it.value().at("count");
      emit({{"command", "datagen"},
            {"data", ctx.ws.data().string()},
            {"config_hash", m.json.at("config_hash")},
            {"splits", counts}});
    } else if (pretrain->parsed()) {
      auto ctx = make_context(common);
      require_dataset(ctx);
      const auto d = pl::load_data(ctx);
      pl::ensure_pretrained(ctx, d);
      const auto F = pl::load_seg(ctx.ws.pretrain_ckpt());
      emit({{"command", "pretrain-sem"},
            {"checkpoint", ctx.ws.pretrain_ckpt().string()},
            {"target_val_miou", metrics::miou(metrics::evaluate(F, d.target_val))}});
    } else if (translate->parsed()) {
      auto ctx = make_context(common);
      require_dataset(ctx);
      const auto d = pl::load_data(ctx);
      const fs::path dir = translation_out.empty() ? ctx.ws.translator_ckpt().parent_path() : fs::path(translation_out);
      const auto ckpt = dir / "translator.ckpt";
      if (ctx.cfg.translation.use_sem && ctx.cfg.translation.iterations > 0 && !fs::exists(ctx.ws.pretrain_ckpt()))
        throw PrerequisiteError("semantic consistency needs " + ctx.ws.pretrain_ckpt().string() +
                                " (run pretrain-sem or set translation.use_sem=false)");
      pl::ensure_translator(ctx, d, ckpt, dir / "loss.csv", ctx.cfg.translation);
      emit({{"command", "train-translation"},
            {"checkpoint", ckpt.string()},
            {"hash", file_hash(ckpt)},
            {"use_sem", ctx.cfg.translation.use_sem}});
    } else if (train_round->parsed()) {
      if (variant.empty() && (!model_name.empty() || frozen_style || !translator_path.empty() || no_adversarial ||
                              !pair_with.empty()))
        throw UsageError("--models, --frozen-style, --translator, --pair-with and --no-adversarial require --variant");
      if (!variant.empty() && model_name.empty()) throw UsageError("--variant needs --models");
      auto ctx = make_context(common);
      require_dataset(ctx);
      const auto d = pl::load_data(ctx);
      if (variant.empty()) {
        const long leaks = pl::train_round(ctx, d, round);
        json ck = json::object();
        for (const auto& s : pl::triplet(ctx.cfg)) ck[s.name] = ctx.ws.model_ckpt(round, s.name).string();
        emit({{"command", "train-round"}, {"round", round}, {"checkpoints", ck}, {"withheld_reads_during_training", leaks}});
      } else {
        pl::VariantSpec v;
        v.name = variant;
        v.model = parse_model(model_name, frozen_style);
        v.seed_of = pair_with.empty() ? model_name : pair_with;
        v.translator = translator_path;
        if (no_adversarial) v.adversarial = false;
        const auto out = pl::run_variant(ctx, d, round, v);
        emit({{"command", "train-round"},
              {"round", round},
              {"variant", variant},
              {"model", v.model.name},
              {"miou", out.at("miou")},
              {"translator_hash", out.at("translator_hash")}});
      }
    } else if (pseudolabel->parsed()) {
      auto ctx = make_context(common);
      require_dataset(ctx);
      const auto d = pl::load_data(ctx);
      auto out = pl::pseudolabel_round(ctx, d, round);
      emit({{"command", "pseudolabel"},
            {"round", round},
            {"store", out.at("store")},
            {"retained_fraction", out.at("retained_fraction")},
            {"retained_accuracy", out.at("retained_accuracy")},
            {"mc_accuracy", out.at("mc_accuracy")}});
    } else if (ensemble->parsed()) {
      auto ctx = make_context(common);
      require_dataset(ctx);
      const auto d = pl::load_data(ctx);
      emit({{"command", "ensemble"}, {"round", round}, {"miou", miou_table(pl::evaluate_round(ctx, d, round))}});
    } else if (eval->parsed()) {
      auto ctx = make_context(common);
      require_dataset(ctx);
      const auto m = pl::load_seg(checkpoint);
      const auto images = split == synth::kWithheldSplit ? synth::load_withheld_labels(ctx.ws.data())
                                                         : synth::load_dataset(ctx.ws.data(), split);
      const auto cm = metrics::evaluate(m, images);
      if (!class_csv.empty()) metrics::write_class_csv(class_csv, cm);
      if (!summary_path.empty()) metrics::write_summary_json(summary_path, cm);
      emit({{"command", "eval"},
            {"checkpoint", checkpoint},
            {"split", split},
            {"miou", metrics::miou(cm)},
            {"pixel_accuracy", metrics::pixel_accuracy(cm)}});
    } else if (run_all->parsed()) {
      auto ctx = make_context(common);
      const auto rep = pl::run_pipeline(ctx);
      json ens = json::array();
      for (const auto& r : rep.at("rounds")) ens.push_back(r.at("metrics").at(pl::kEnsemble).at("miou"));
      emit({{"command", "run-all"},
            {"seed", ctx.cfg.seed},
            {"report", (ctx.ws.report_dir() / "report.json").string()},
            {"ensemble_miou_by_round", ens}});
    } else if (report->parsed()) {
      auto ctx = make_context(common);
      std::vector<pl::RoundState> rounds;
      for (int r = 0; r <= ctx.cfg.rounds && fs::exists(ctx.ws.round_state(r)); ++r)
        rounds.push_back(pl::read_json(ctx.ws.round_state(r)).get<pl::RoundState>());
      if (rounds.empty()) throw PrerequisiteError("no completed round in " + ctx.ws.root.string());
      const auto rep = pl::build_report(ctx, rounds);
      pl::write_report(ctx, rep);
      emit({{"command", "report"}, {"dir", ctx.ws.report_dir().string()}, {"rounds", rounds.size()}});
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    print_schema(std::cerr);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
