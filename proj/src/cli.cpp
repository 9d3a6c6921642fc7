#include "rct/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rct/analysis.hpp"
#include "rct/checkpoint.hpp"
#include "rct/errors.hpp"
#include "rct/experiment.hpp"
#include "rct/run_config.hpp"
#include "rct/sweep.hpp"

namespace rct {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// data/x.jsonl -> data/x.<suffix>
std::string sidecar(const std::string& data_path, const std::string& suffix) {
  fs::path p(data_path);
  return (p.parent_path() / (p.stem().string() + "." + suffix)).string();
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

template <typename V>
std::vector<V> parse_numbers(const std::string& s, const char* what) {
  std::vector<V> out;
  for (const auto& part : split_list(s)) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      out.push_back(static_cast<V>(v));
    } catch (const std::logic_error&) {
      throw ValidationError(std::string(what) + ": '" + part + "' is not an integer");
    }
  }
  if (out.empty()) throw ValidationError(std::string(what) + " must list at least one integer");
  return out;
}

// Raw records of one split (or all of them) encoded with the checkpoint's
// preprocessing.
Dataset load_for_model(const LoadedCheckpoint& ckpt, const std::string& data_path, const std::string& schema_path,
                       const std::string& split) {
  const Regressor<float>& model = *ckpt.model;
  std::string schema_file = schema_path;
  if (schema_file.empty() && fs::exists(sidecar(data_path, "schema.json"))) {
    schema_file = sidecar(data_path, "schema.json");
  }
  if (!schema_file.empty() && !(resolve_schema(schema_file) == model.schema())) {
    throw CompatibilityError("data schema " + schema_file + " differs from the checkpoint schema");
  }
  Dataset raw;
  try {
    raw = load_dataset(data_path, model.schema());
  } catch (const ValidationError& e) {
    throw CompatibilityError(std::string("data does not match the checkpoint schema: ") + e.what());
  }
  if (split != "all") {
    const nlohmann::json& run = ckpt.run;
    if (!run.contains("split")) throw ValidationError("checkpoint does not record its data split; use --split all");
    SplitFractions f{run["split"].at("train").get<double>(), run["split"].at("val").get<double>(),
                     run["split"].at("test").get<double>()};
    DatasetSplit parts = split_dataset(raw, f, run.at("split_seed").get<std::uint64_t>());
    if (split == "train") {
      raw = std::move(parts.train);
      if (!run.at("train_limit").is_null()) raw = head(raw, run.at("train_limit").get<std::size_t>());
    } else if (split == "val") {
      raw = std::move(parts.val);
    } else {
      raw = std::move(parts.test);
    }
  }
  return apply_preprocess(raw, model.preprocess());
}

int cmd_generate(const std::string& config_path, const std::string& preset, const std::string& out_path,
                 std::optional<std::uint64_t> seed, std::optional<std::size_t> records, std::ostream& out) {
  FeatureSchema schema;
  GenConfig gen;
  if (!config_path.empty()) {
    const RunConfig cfg = RunConfig::load(config_path);
    if (!cfg.generator) throw ValidationError(config_path + ": data.generator is required for generate");
    schema = cfg.load_schema();
    gen = *cfg.generator;
  } else {
    if (preset != kSynthStd) throw ValidationError("unknown preset '" + preset + "' (available: synth-std)");
    schema = synth_std_schema();
    gen = synth_std_config();
  }
  if (seed) gen.seed = *seed;
  if (records) gen.n_records = *records;
  gen.validate(schema);

  const Dataset ds = generate(gen, schema);
  write_dataset(ds, out_path);
  nlohmann::ordered_json provenance;
  provenance["generator"] = gen.to_json();
  provenance["schema"] = schema.to_json();
  write_json(sidecar(out_path, "genconfig.json"), provenance);
  schema.save(sidecar(out_path, "schema.json"));

  std::vector<double> actual, heuristic;
  for (const auto& r : ds.records) {
    actual.push_back(*r.actual_cost);
    heuristic.push_back(r.heuristic_cost);
  }
  out << "wrote " << ds.size() << " records to " << out_path << '\n';
  try {
    out << "MAE% of actual cost: " << fmt(mae_percent(actual, actual, heuristic), 2) << '\n';
    out << "MAE% of heuristic cost: " << fmt(mae_percent(heuristic, actual, heuristic), 2) << '\n';
  } catch (const ValidationError& e) {
    out << "MAE% undefined: " << e.what() << '\n';
  }
  return kExitOk;
}

struct TrainOverrides {
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string kind;
  std::optional<std::size_t> train_limit;
  bool quiet = false;
};

int cmd_train(const std::string& config_path, const TrainOverrides& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = RunConfig::load(config_path);
  if (!o.data.empty()) {
    cfg.data_path = o.data;
    cfg.generator.reset();
  }
  if (!o.out.empty()) cfg.output = o.out;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.epochs) cfg.train.max_epochs = *o.epochs;
  if (!o.kind.empty()) cfg.model.kind = parse_model_kind(o.kind);
  if (o.train_limit) cfg.train_limit = *o.train_limit;
  if (cfg.output.empty()) throw ValidationError("no output directory (set \"output\" or pass --out)");
  cfg.validate();

  const FeatureSchema schema = cfg.load_schema();
  const Dataset raw = cfg.load_data(schema);
  const PreparedData data = prepare_data(raw, cfg.split, cfg.split_seed, cfg.train_limit);
  fs::create_directories(cfg.output);

  EvalCallback progress;
  if (!o.quiet) {
    progress = [&err](const HistoryRow& r) {
      err << "step " << r.step << "  train_loss " << fmt(r.train_loss, 5) << "  val_mae% " << fmt(r.val_mae_percent, 3)
          << "  lr " << r.lr << '\n';
    };
  }
  const RunOutcome run = run_experiment(data, cfg.model, cfg.train, progress);

  nlohmann::ordered_json run_info = split_to_json(cfg.split, cfg.split_seed, cfg.train_limit);
  run_info["train"] = cfg.train.to_json();
  const fs::path dir(cfg.output);
  save_checkpoint(*run.model, (dir / "model.ckpt").string(), run_info);
  write_history_csv((dir / "history.csv").string(), run.train.history);

  nlohmann::ordered_json summary;
  summary["model"] = std::string(to_string(cfg.model.kind));
  summary["test_mae_percent"] = run.test_mae_percent;
  summary["best_val_mae_percent"] = run.train.best_val_mae_percent;
  summary["params_count"] = run.model->parameters().scalar_count();
  summary["steps"] = run.train.steps;
  summary["wall_time"] = run.wall_seconds;
  write_json((dir / "summary.json").string(), summary);

  out << "test MAE%: " << fmt(run.test_mae_percent, 4) << "  (best val " << fmt(run.train.best_val_mae_percent, 4)
      << " at step " << run.train.best_step << ", " << run.train.steps << " steps, "
      << fmt(run.wall_seconds, 1) << " s)\n";
  out << "wrote " << (dir / "model.ckpt").string() << ", history.csv, summary.json\n";
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& schema_path,
             const std::string& split, std::ostream& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(model_path);
  const Dataset ds = load_for_model(ckpt, data_path, schema_path, split);
  const std::vector<double> pred = predict_costs(*ckpt.model, ds);
  std::vector<double> actual, heuristic;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!ds.records[i].actual_cost) throw ValidationError("record " + std::to_string(i) + " has no actual_cost");
    actual.push_back(*ds.records[i].actual_cost);
    heuristic.push_back(ds.records[i].heuristic_cost);
    abs_err += std::abs(actual.back() - pred[i]);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", mae_percent(pred, actual, heuristic));
  out << "records: " << ds.size() << '\n';
  out << "mae_percent: " << buf << '\n';
  out << "mae: " << fmt(abs_err / static_cast<double>(ds.size()), 6) << '\n';
  return kExitOk;
}

int cmd_analyze(const std::string& model_path, const std::string& data_path, const std::string& schema_path,
                const std::string& split, int layer, std::size_t top_k, const std::string& stratum,
                const std::string& out_path, std::ostream& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(model_path);
  Dataset ds = load_for_model(ckpt, data_path, schema_path, split);
  if (!stratum.empty()) {
    const auto counts = parse_numbers<std::size_t>(stratum, "--stratum");
    if (counts.size() != 2) throw ValidationError("--stratum takes ITEMS,CHARGES");
    ds = filter_stratum(ds, counts[0], counts[1]);
    if (ds.size() == 0) throw ValidationError("no records with " + stratum + " items,charges");
  }
  const HeatMap hm = attention_importance(*ckpt.model, ds, layer, top_k);
  hm.write_csv(out_path);
  out << "wrote heat map over " << ds.size() << " records (" << hm.values.rows() << " tokens x " << hm.values.cols()
      << " heads) to " << out_path << '\n';
  return kExitOk;
}

int cmd_export(const std::string& model_path, const std::string& data_path, const std::string& schema_path,
               const std::string& split, const std::string& out_path, std::ostream& out) {
  const LoadedCheckpoint ckpt = load_checkpoint(model_path);
  const Dataset ds = load_for_model(ckpt, data_path, schema_path, split);
  export_embeddings(*ckpt.model, ds, out_path);
  out << "wrote " << ds.size() << " embeddings to " << out_path << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& kind, const std::string& values,
              const std::string& seeds, const std::string& out_path, std::optional<unsigned> threads,
              std::ostream& out) {
  const RunConfig cfg = RunConfig::load(config_path);
  cfg.validate();
  SweepSpec spec;
  spec.kind = parse_sweep_kind(kind);
  spec.values = parse_numbers<std::int64_t>(values, "--values");
  spec.seeds = parse_numbers<std::uint64_t>(seeds, "--seeds");
  spec.model = cfg.model;
  spec.train = cfg.train;
  spec.fractions = cfg.split;
  spec.split_seed = cfg.split_seed;
  spec.validate();
  const FeatureSchema schema = cfg.load_schema();
  const Dataset raw = cfg.load_data(schema);
  const SweepReport report = run_sweep(spec, raw, threads.value_or(sweep_threads()));
  report.write_csv(out_path);
  for (const auto& s : report.summaries) {
    out << to_string(spec.kind) << '=' << s.value << "  test MAE% " << fmt(s.mean, 3) << " +- " << fmt(s.std, 3)
        << '\n';
  }
  out << "wrote " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rate card transformer: synthetic data, training, evaluation and analysis", "rct"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as JSON Lines");
  std::string gen_config, gen_preset = kSynthStd, gen_out;
  std::optional<std::uint64_t> gen_seed;
  std::optional<std::size_t> gen_records;
  gen->add_option("--config", gen_config, "Run config whose data.generator and schema are used");
  gen->add_option("--preset", gen_preset, "Built-in generator config")->capture_default_str();
  gen->add_option("--out", gen_out, "Output JSONL file")->required();
  gen->add_option("--seed", gen_seed, "Override the generator seed");
  gen->add_option("--records", gen_records, "Override the record count");

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint, history and summary");
  std::string tr_config;
  TrainOverrides tro;
  tr->add_option("--config", tr_config, "Run config JSON")->required();
  tr->add_option("--data", tro.data, "Dataset JSONL (overrides data in the config)");
  tr->add_option("--out", tro.out, "Output directory (overrides output)");
  tr->add_option("--seed", tro.seed, "Override train.seed");
  tr->add_option("--epochs", tro.epochs, "Override train.max_epochs");
  tr->add_option("--model", tro.kind, "Override model.kind (rct, flat_transformer, feedforward, hybrid)");
  tr->add_option("--train-limit", tro.train_limit, "Keep only the first N training records");
  tr->add_flag("--quiet", tro.quiet, "Do not print progress");

  std::string model_path, data_path, schema_path, split = "all", out_path;
  auto add_model_data = [&](CLI::App* sub) {
    sub->add_option("--model", model_path, "Checkpoint file")->required();
    sub->add_option("--data", data_path, "Dataset JSONL")->required();
    sub->add_option("--schema", schema_path, "Schema of the data (default: sidecar <data>.schema.json if present)");
    sub->add_option("--split", split, "Records to use: all, train, val or test (as split at training time)")
        ->check(CLI::IsMember({"all", "train", "val", "test"}))
        ->capture_default_str();
  };

  auto* ev = app.add_subcommand("eval", "Print MAE% and MAE of a checkpoint on a dataset");
  add_model_data(ev);

  auto* an = app.add_subcommand("analyze", "Attention-importance heat map (CSV)");
  add_model_data(an);
  int layer = -1;
  std::size_t top_k = 5;
  std::string stratum;
  an->add_option("--layer", layer, "Encoder layer (-1: last)")->capture_default_str();
  an->add_option("--topk", top_k, "Interactions counted per record and head")->capture_default_str();
  an->add_option("--stratum", stratum, "Keep records with exactly ITEMS,CHARGES entries");
  an->add_option("--out", out_path, "Output CSV")->required();

  auto* ex = app.add_subcommand("export", "Pooled rate-card embeddings (CSV)");
  add_model_data(ex);
  ex->add_option("--out", out_path, "Output CSV")->required();

  auto* sw = app.add_subcommand("sweep", "Train over head counts, depths or training sizes");
  std::string sw_config, sw_kind, sw_values, sw_seeds = "0";
  std::optional<unsigned> sw_threads;
  sw->add_option("--config", sw_config, "Run config JSON")->required();
  sw->add_option("--kind", sw_kind, "heads, layers or datascale")->required();
  sw->add_option("--values", sw_values, "Comma-separated values")->required();
  sw->add_option("--seeds", sw_seeds, "Comma-separated seeds")->capture_default_str();
  sw->add_option("--out", out_path, "Output CSV")->required();
  sw->add_option("--threads", sw_threads, "Parallel cells (default: RCT_THREADS or core count)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(gen_config, gen_preset, gen_out, gen_seed, gen_records, out);
    if (*tr) return cmd_train(tr_config, tro, out, err);
    if (*ev) return cmd_eval(model_path, data_path, schema_path, split, out);
    if (*an) return cmd_analyze(model_path, data_path, schema_path, split, layer, top_k, stratum, out_path, out);
    if (*ex) return cmd_export(model_path, data_path, schema_path, split, out_path, out);
    if (*sw) return cmd_sweep(sw_config, sw_kind, sw_values, sw_seeds, out_path, sw_threads, out);
  } catch (const CompatibilityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCompatibility;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace rct
