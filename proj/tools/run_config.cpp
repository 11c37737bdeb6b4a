#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>

#include "hndh/error.hpp"

namespace hndh::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw ValidationError("bad value for " + key + ": \"" + text + "\"");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError("bad boolean for " + key + ": \"" + text + "\"");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_value<T>(key, trim(item)));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter set_number(T RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_value<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.seed", set_number(&RunConfig::seed)},
      {"run.threads", set_number(&RunConfig::threads)},
      {"run.out", [](RunConfig& c, const auto&, const auto& v) { c.out = v; }},
      {"run.metrics_stdout", [](RunConfig& c, const auto& k, const auto& v) { c.metrics_stdout = parse_bool(k, v); }},

      {"data.path", [](RunConfig& c, const auto&, const auto& v) { c.data_path = v; }},
      {"data.format",
       [](RunConfig& c, const auto& k, const auto& v) {
         if (v == "binary") {
           c.data_format = DatasetFormat::binary;
         } else if (v == "csv") {
           c.data_format = DatasetFormat::csv;
         } else {
           throw ValidationError("bad value for " + k + ": \"" + v + "\" (binary, csv)");
         }
       }},
      {"data.classes", set_number(&RunConfig::data_classes)},

      {"synth.n_per_class", [](RunConfig& c, const auto& k, const auto& v) { c.synth.n_per_class = parse_value<std::size_t>(k, v); }},
      {"synth.classes", [](RunConfig& c, const auto& k, const auto& v) { c.synth.classes = parse_value<std::size_t>(k, v); }},
      {"synth.dim", [](RunConfig& c, const auto& k, const auto& v) { c.synth.dim = parse_value<std::size_t>(k, v); }},
      {"synth.multi_label_fraction", [](RunConfig& c, const auto& k, const auto& v) { c.synth.multi_label_fraction = parse_value<double>(k, v); }},
      {"synth.cluster_sep", [](RunConfig& c, const auto& k, const auto& v) { c.synth.cluster_sep = parse_value<double>(k, v); }},
      {"synth.noise_sigma", [](RunConfig& c, const auto& k, const auto& v) { c.synth.noise_sigma = parse_value<double>(k, v); }},

      {"split.query_per_class", [](RunConfig& c, const auto& k, const auto& v) { c.split.query_per_class = parse_value<std::size_t>(k, v); }},
      {"split.train_per_class", [](RunConfig& c, const auto& k, const auto& v) { c.split.train_per_class = parse_value<std::size_t>(k, v); }},

      {"model.code_length", [](RunConfig& c, const auto& k, const auto& v) { c.train.head.code_length = parse_value<std::size_t>(k, v); }},
      {"model.hidden_dims", [](RunConfig& c, const auto& k, const auto& v) { c.train.head.hidden_dims = parse_list<std::size_t>(k, v); }},
      {"model.init_sigma", [](RunConfig& c, const auto& k, const auto& v) { c.train.head.init_sigma = parse_value<double>(k, v); }},
      {"model.path", [](RunConfig& c, const auto&, const auto& v) { c.model_path = v; }},

      {"train.epochs", [](RunConfig& c, const auto& k, const auto& v) { c.train.epochs = parse_value<std::size_t>(k, v); }},
      {"train.batch_size", [](RunConfig& c, const auto& k, const auto& v) { c.train.batch_size = parse_value<std::size_t>(k, v); }},
      {"train.lr_start", [](RunConfig& c, const auto& k, const auto& v) { c.train.lr_start = parse_value<double>(k, v); }},
      {"train.lr_end", [](RunConfig& c, const auto& k, const auto& v) { c.train.lr_end = parse_value<double>(k, v); }},
      {"train.lambda", [](RunConfig& c, const auto& k, const auto& v) { c.train.lambda = parse_value<double>(k, v); }},
      {"train.center_refresh",
       [](RunConfig& c, const auto& k, const auto& v) {
         if (v == "per_epoch") {
           c.train.center_refresh = CenterRefresh::per_epoch;
         } else if (v == "per_batch") {
           c.train.center_refresh = CenterRefresh::per_batch;
         } else {
           throw ValidationError("bad value for " + k + ": \"" + v + "\" (per_epoch, per_batch)");
         }
       }},
      {"train.grad_scale",
       [](RunConfig& c, const auto& k, const auto& v) {
         if (v == "mean") {
           c.train.grad_scale = GradScale::mean;
         } else if (v == "sum") {
           c.train.grad_scale = GradScale::sum;
         } else {
           throw ValidationError("bad value for " + k + ": \"" + v + "\" (mean, sum)");
         }
       }},
      {"train.checkpoint_every", set_number(&RunConfig::checkpoint_every)},
      {"train.eval_every", set_number(&RunConfig::eval_every)},

      {"encode.set",
       [](RunConfig& c, const auto& k, const auto& v) {
         static const std::map<std::string, EncodeSet> names = {{"all", EncodeSet::all},
                                                                {"query", EncodeSet::query},
                                                                {"retrieval", EncodeSet::retrieval},
                                                                {"train", EncodeSet::train}};
         const auto it = names.find(v);
         if (it == names.end()) throw ValidationError("bad value for " + k + ": \"" + v + "\"");
         c.encode_set = it->second;
       }},
      {"encode.path", [](RunConfig& c, const auto&, const auto& v) { c.codes_path = v; }},

      {"eval.cutoff",
       [](RunConfig& c, const auto& k, const auto& v) {
         const auto cutoff = parse_value<std::size_t>(k, v);
         c.cutoff = cutoff == 0 ? std::nullopt : std::optional<std::size_t>(cutoff);
       }},
      {"eval.precision_k", [](RunConfig& c, const auto& k, const auto& v) { c.precision_ks = parse_list<std::size_t>(k, v); }},
      {"eval.db", [](RunConfig& c, const auto&, const auto& v) { c.eval_db = v; }},

      {"ablate.bit_lengths", [](RunConfig& c, const auto& k, const auto& v) { c.ablate_bits = parse_list<std::size_t>(k, v); }},
      {"ablate.variants",
       [](RunConfig& c, const auto&, const auto& v) {
         c.ablate_variants.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) c.ablate_variants.push_back(parse_ablation_variant(trim(item)));
       }},

      {"retrieve.ids", [](RunConfig& c, const auto& k, const auto& v) { c.retrieve_ids = parse_list<std::uint64_t>(k, v); }},
      {"retrieve.vector", [](RunConfig& c, const auto& k, const auto& v) { c.retrieve_vector = parse_list<double>(k, v); }},
      {"retrieve.top_k", set_number(&RunConfig::top_k)},
  };
  return table;
}

RunConfig defaults() {
  RunConfig cfg;
  // Desk-scale benchmark: 8 well-separated classes, 200 train / 50 query each.
  cfg.synth.n_per_class = 250;
  cfg.synth.classes = 8;
  cfg.synth.dim = 32;
  cfg.synth.multi_label_fraction = 0.0;
  cfg.synth.cluster_sep = 10.0;
  cfg.synth.noise_sigma = 1.0;
  cfg.split.query_per_class = 50;
  cfg.split.train_per_class = 200;
  cfg.train.head.code_length = 48;
  return cfg;
}

}  // namespace

Settings parse_settings(const std::string& text) {
  Settings settings;
  std::stringstream ss(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto content = trim(line);
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') throw ValidationError("line " + std::to_string(line_no) + ": bad section header");
      section = trim(std::string_view(content).substr(1, content.size() - 2));
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = trim(std::string_view(content).substr(0, eq));
    if (key.empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    settings[key] = trim(std::string_view(content).substr(eq + 1));
  }
  return settings;
}

Settings read_settings_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

RunConfig build_run_config(const Settings& settings) {
  RunConfig cfg = defaults();
  const auto& table = setters();
  for (const auto& [key, value] : settings) {
    const auto it = table.find(key);
    if (it == table.end()) throw ValidationError("unknown config key \"" + key + "\"");
    it->second(cfg, key, value);
  }
  cfg.split.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.train.head.seed = cfg.seed;
  cfg.train.threads = cfg.threads;
  cfg.validate();
  return cfg;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, setter] : setters()) keys.push_back(key);
  return keys;
}

void RunConfig::validate() const {
  if (threads < 1) throw ValidationError("run.threads must be >= 1");
  if (out.empty()) throw ValidationError("run.out must not be empty");
  synth.validate();
  split.validate();
  // input_dim is taken from the dataset; validate the rest with a placeholder.
  TrainConfig probe = train;
  if (probe.head.input_dim == 0) probe.head.input_dim = 1;
  probe.validate();
  if (top_k < 1) throw ValidationError("retrieve.top_k must be >= 1");
  for (auto k : precision_ks) {
    if (k < 1) throw ValidationError("eval.precision_k entries must be >= 1");
  }
  if (ablate_bits.empty()) throw ValidationError("ablate.bit_lengths must not be empty");
  for (auto bits : ablate_bits) {
    if (bits < 1) throw ValidationError("ablate.bit_lengths entries must be >= 1");
  }
  if (ablate_variants.empty()) throw ValidationError("ablate.variants must not be empty");
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg) {
  auto num = [](auto v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  std::string hidden;
  for (std::size_t i = 0; i < cfg.train.head.hidden_dims.size(); ++i) {
    hidden += (i ? "," : "") + std::to_string(cfg.train.head.hidden_dims[i]);
  }
  return {
      {"run.seed", num(cfg.seed)},
      {"split.query_per_class", num(cfg.split.query_per_class)},
      {"split.train_per_class", num(cfg.split.train_per_class)},
      {"model.code_length", num(cfg.train.head.code_length)},
      {"model.hidden_dims", hidden},
      {"model.init_sigma", num(cfg.train.head.init_sigma)},
      {"train.epochs", num(cfg.train.epochs)},
      {"train.batch_size", num(cfg.train.batch_size)},
      {"train.lr_start", num(cfg.train.lr_start)},
      {"train.lr_end", num(cfg.train.lr_end)},
      {"train.lambda", num(cfg.train.lambda)},
      {"train.center_refresh", cfg.train.center_refresh == CenterRefresh::per_epoch ? "per_epoch" : "per_batch"},
      {"train.grad_scale", cfg.train.grad_scale == GradScale::mean ? "mean" : "sum"},
      {"eval.cutoff", cfg.cutoff ? num(*cfg.cutoff) : "none"},
  };
}

}  // namespace hndh::cli
