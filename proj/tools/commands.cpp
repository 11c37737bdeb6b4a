#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "hndh/codes.hpp"
#include "hndh/error.hpp"
#include "hndh/eval.hpp"
#include "hndh/model.hpp"

namespace hndh::cli {

namespace {

using nlohmann::json;

// One JSON object per line with a strictly increasing sequence number. Lines
// go to <path>.tmp, which is renamed to <path> by commit().
class MetricsStream {
 public:
  MetricsStream(std::filesystem::path path, std::ostream* echo)
      : path_(std::move(path)), tmp_(path_.string() + ".tmp"), file_(tmp_, std::ios::trunc), echo_(echo) {
    if (!file_) throw IoError("cannot open " + tmp_.string());
  }

  void emit(const std::string& event, json fields) {
    fields["seq"] = ++seq_;
    fields["event"] = event;
    fields["timestamp"] =
        std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    const auto line = fields.dump();
    file_ << line << '\n';
    file_.flush();
    if (!file_) throw IoError("write failed: " + tmp_.string());
    if (echo_) *echo_ << line << '\n';
  }

  void commit() {
    file_.close();
    std::filesystem::rename(tmp_, path_);
  }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream file_;
  std::ostream* echo_;
  std::uint64_t seq_ = 0;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out.string() + ": " + ec.message());
}

Dataset load_input(const RunConfig& cfg) {
  return load_dataset(cfg.dataset_file(), cfg.data_format, cfg.data_classes);
}

HashHeadParams load_model(const RunConfig& cfg, const Dataset& data) {
  auto params = load_checkpoint(cfg.model_file());
  if (params.input_dim() != data.features().d()) {
    throw ValidationError("model expects " + std::to_string(params.input_dim()) + " features, dataset has " +
                          std::to_string(data.features().d()));
  }
  return params;
}

const Dataset& pick_set(const RunConfig& cfg, const Dataset& all, const DatasetSplit& parts) {
  switch (cfg.encode_set) {
    case EncodeSet::all: return all;
    case EncodeSet::query: return parts.query;
    case EncodeSet::retrieval: return parts.retrieval;
    case EncodeSet::train: return parts.train;
  }
  return all;
}

json epoch_json(const EpochRecord& r) {
  json j = {{"epoch", r.epoch}, {"j", r.j},   {"j1", r.j1},          {"j2", r.j2},
            {"j_norm", r.j_norm}, {"lr", r.lr}, {"seconds", r.seconds}};
  if (r.eval_map) j["map"] = *r.eval_map;
  return j;
}

}  // namespace

void cmd_synth(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  save_dataset(generate_synthetic(cfg.synth), cfg.dataset_file(), cfg.data_format);
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto data = load_input(cfg);
  const auto parts = split_dataset(data, cfg.split);
  TrainConfig tcfg = cfg.train;
  tcfg.head.input_dim = data.features().d();
  tcfg.validate();
  ensure_out_dir(cfg);

  MetricsStream metrics(cfg.out / "metrics.jsonl", cfg.metrics_stdout ? &out : nullptr);
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochRecord& record, const HashHeadParams& params) {
    metrics.emit("epoch", epoch_json(record));
    if (cfg.checkpoint_every > 0 && (record.epoch + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(params, cfg.out / ("checkpoint-epoch-" + std::to_string(record.epoch + 1) + ".hndm"));
    }
  };
  if (cfg.eval_every > 0) {
    callbacks.eval_every = cfg.eval_every;
    callbacks.evaluate = [&](const HashHeadParams& params) {
      return evaluate_retrieval(params, parts.query, parts.retrieval, cfg.cutoff, {}, cfg.threads).map;
    };
  }
  const auto result = train(parts.train, tcfg, callbacks);
  save_checkpoint(result.params, cfg.model_file());
  metrics.emit("done", {{"epochs", result.history.epochs.size()}, {"train_size", parts.train.size()}});
  metrics.commit();
}

void cmd_encode(const RunConfig& cfg) {
  const auto data = load_input(cfg);
  const auto params = load_model(cfg, data);
  const auto parts = split_dataset(data, cfg.split);
  ensure_out_dir(cfg);
  save_code_database(encode_dataset(params, pick_set(cfg, data, parts), cfg.threads), cfg.codes_file());
}

void cmd_retrieve(const RunConfig& cfg, std::ostream& out) {
  if (cfg.retrieve_ids.empty() && cfg.retrieve_vector.empty()) {
    throw ValidationError("retrieve needs query ids (retrieve.ids) or a query vector (retrieve.vector)");
  }
  const auto db = load_code_database(cfg.codes_file());
  const auto params = load_checkpoint(cfg.model_file());
  if (params.code_length() != db.r()) throw ValidationError("model code length does not match the code database");

  std::vector<std::pair<std::string, PackedCode>> queries;
  if (!cfg.retrieve_ids.empty()) {
    const auto data = load_input(cfg);
    if (params.input_dim() != data.features().d()) throw ValidationError("model does not match dataset features");
    std::unordered_map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data.ids()[i], i);
    for (auto id : cfg.retrieve_ids) {
      const auto it = index.find(id);
      if (it == index.end()) throw ValidationError("query id " + std::to_string(id) + " not in dataset");
      queries.emplace_back(std::to_string(id), encode_sample(params, data.features().row(it->second)));
    }
  }
  if (!cfg.retrieve_vector.empty()) {
    queries.emplace_back("vector", encode_sample(params, cfg.retrieve_vector));
  }

  out << "query\trank\tid\tdistance\n";
  for (const auto& [name, code] : queries) {
    const auto top = search_topk(code, db, cfg.top_k);
    for (std::size_t k = 0; k < top.size(); ++k) {
      out << name << '\t' << k + 1 << '\t' << db.id(top[k]) << '\t'
          << hamming_words(code.words, db.code_words(top[k])) << '\n';
    }
  }
}

void cmd_eval(const RunConfig& cfg) {
  const auto data = load_input(cfg);
  const auto params = load_model(cfg, data);
  const auto parts = split_dataset(data, cfg.split);

  EvalReport report;
  report.config = config_echo(cfg);
  if (cfg.eval_db.empty()) {
    report.results.push_back(
        evaluate_retrieval(params, parts.query, parts.retrieval, cfg.cutoff, cfg.precision_ks, cfg.threads));
  } else {
    const auto db = load_code_database(cfg.eval_db);
    if (db.r() != params.code_length()) throw ValidationError("model code length does not match the code database");
    std::unordered_map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data.ids()[i], i);
    std::vector<std::size_t> rows;
    for (auto id : db.ids()) {
      const auto it = index.find(id);
      if (it == index.end()) throw ValidationError("database id " + std::to_string(id) + " not in dataset");
      rows.push_back(it->second);
    }
    const auto db_set = data.subset(rows);
    const auto queries = encode_codes(params, parts.query.features(), cfg.threads);
    const RelevanceOracle oracle(parts.query.labels(), db_set.labels());
    auto map = mean_average_precision(queries, db, oracle, cfg.cutoff, cfg.threads);
    BitLengthResult result;
    result.r = db.r();
    result.map = map.map;
    result.cutoff = cfg.cutoff;
    result.per_query_ap = std::move(map.per_query_ap);
    result.precision_at_k = precision_curve(queries, db, oracle, cfg.precision_ks, cfg.threads);
    report.results.push_back(std::move(result));
  }
  ensure_out_dir(cfg);
  write_text(cfg.out / "report.json", to_json(report));
}

void cmd_ablate(const RunConfig& cfg) {
  const auto data = load_input(cfg);
  TrainConfig base = cfg.train;
  base.head.input_dim = data.features().d();
  const auto table = ablation_run(data, base, cfg.split, cfg.ablate_bits, cfg.ablate_variants, cfg.cutoff);
  ensure_out_dir(cfg);
  write_text(cfg.out / "ablation.json", to_json(table));
  write_text(cfg.out / "ablation.csv", to_csv(table));
}

void cmd_export_embeddings(const RunConfig& cfg) {
  const auto data = load_input(cfg);
  const auto params = load_model(cfg, data);
  const auto parts = split_dataset(data, cfg.split);
  ensure_out_dir(cfg);
  export_embeddings(params, pick_set(cfg, data, parts), cfg.out / "embeddings.csv", cfg.threads);
}

namespace {

struct Failure {
  ExitCode code;
  const char* kind;
};

Failure classify(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return {kConfigError, "validation"};
  if (dynamic_cast<const LoadError*>(&e)) return {kIoError, "load"};
  if (dynamic_cast<const IoError*>(&e)) return {kIoError, "io"};
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return {kIoError, "io"};
  if (dynamic_cast<const TrainingError*>(&e)) return {kTrainingError, "training"};
  if (dynamic_cast<const EmptyClassError*>(&e)) return {kTrainingError, "training"};
  if (dynamic_cast<const NonFiniteError*>(&e)) return {kTrainingError, "training"};
  return {kInternalError, "internal"};
}

int report_failure(std::ostream& err, ExitCode code, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", static_cast<int>(code)}}}}.dump()
      << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"hndh: supervised binary hashing for single- and multi-label retrieval"};
  app.name("hndh");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
  bool metrics_stdout = false;
  app.add_option("--config", config_path, "Config file (key = value, [section] headers)");
  app.add_option("--seed", seed, "Random seed for synthesis, splitting, init and shuffling");
  app.add_option("--threads", threads, "Worker threads (results do not depend on this)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", overrides, "Override a config key: --set train.epochs=50")->take_all();
  app.add_flag("--metrics-stdout", metrics_stdout, "Echo the metrics stream to stdout");

  std::optional<std::size_t> cutoff;
  std::optional<std::size_t> top_k;
  std::string ids;
  std::string vector;
  std::string subset;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  auto* train_cmd = app.add_subcommand("train", "Split the dataset and train a hash head");
  auto* encode_cmd = app.add_subcommand("encode", "Encode a dataset split into a code database");
  encode_cmd->add_option("--subset", subset, "all, query, retrieval or train");
  auto* retrieve = app.add_subcommand("retrieve", "Rank database codes for query ids or a vector");
  retrieve->add_option("--ids", ids, "Comma-separated dataset ids to query with");
  retrieve->add_option("--vector", vector, "Comma-separated feature vector to query with");
  retrieve->add_option("--k", top_k, "Results per query");
  auto* eval_cmd = app.add_subcommand("eval", "Mean average precision of the trained model");
  eval_cmd->add_option("--cutoff", cutoff, "Evaluate MAP@K at this cutoff (0 = full ranking)");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate J1/J2 ablation cells");
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write real-valued embeddings as CSV");
  export_cmd->add_option("--subset", subset, "all, query, retrieval or train");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report_failure(err, kConfigError, "usage", e.what());
  }

  try {
    Settings settings;
    if (!config_path.empty()) settings = read_settings_file(config_path);
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got \"" + item + "\"");
      settings[item.substr(0, eq)] = item.substr(eq + 1);
    }
    if (seed) settings["run.seed"] = std::to_string(*seed);
    if (threads) settings["run.threads"] = std::to_string(*threads);
    if (out_dir) settings["run.out"] = *out_dir;
    if (metrics_stdout) settings["run.metrics_stdout"] = "true";
    if (cutoff) settings["eval.cutoff"] = std::to_string(*cutoff);
    if (top_k) settings["retrieve.top_k"] = std::to_string(*top_k);
    if (!ids.empty()) settings["retrieve.ids"] = ids;
    if (!vector.empty()) settings["retrieve.vector"] = vector;
    if (!subset.empty()) settings["encode.set"] = subset;
    const RunConfig cfg = build_run_config(settings);

    if (synth->parsed()) cmd_synth(cfg);
    if (train_cmd->parsed()) cmd_train(cfg, out);
    if (encode_cmd->parsed()) cmd_encode(cfg);
    if (retrieve->parsed()) cmd_retrieve(cfg, out);
    if (eval_cmd->parsed()) cmd_eval(cfg);
    if (ablate->parsed()) cmd_ablate(cfg);
    if (export_cmd->parsed()) cmd_export_embeddings(cfg);
  } catch (const std::exception& e) {
    const auto failure = classify(e);
    return report_failure(err, failure.code, failure.kind, e.what());
  }
  return kOk;
}

}  // namespace hndh::cli
