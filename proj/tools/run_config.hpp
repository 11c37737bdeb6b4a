#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hndh/data.hpp"
#include "hndh/eval.hpp"
#include "hndh/trainer.hpp"

namespace hndh::cli {

// Flat key=value settings; "[section]" headers prefix the keys that follow
// with "section.".
using Settings = std::map<std::string, std::string>;

Settings parse_settings(const std::string& text);
Settings read_settings_file(const std::filesystem::path& path);

enum class EncodeSet { all, query, retrieval, train };

struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::filesystem::path out = ".";
  bool metrics_stdout = false;

  std::filesystem::path data_path;  // empty: <out>/dataset.hndh (or .csv)
  DatasetFormat data_format = DatasetFormat::binary;
  std::size_t data_classes = 0;

  SyntheticSpec synth;
  SplitSpec split;
  TrainConfig train;
  std::size_t checkpoint_every = 0;
  std::size_t eval_every = 0;

  std::filesystem::path model_path;  // empty: <out>/model.hndm
  std::filesystem::path codes_path;  // empty: <out>/codes.hndb
  EncodeSet encode_set = EncodeSet::retrieval;

  std::optional<std::size_t> cutoff;
  std::vector<std::size_t> precision_ks;
  std::filesystem::path eval_db;  // empty: encode the retrieval set on the fly

  std::vector<std::size_t> ablate_bits{12, 24, 32, 48};
  std::vector<AblationVariant> ablate_variants{AblationVariant::combined, AblationVariant::j1_only,
                                              AblationVariant::j2_only};

  std::vector<std::uint64_t> retrieve_ids;
  std::vector<double> retrieve_vector;
  std::size_t top_k = 10;

  std::filesystem::path dataset_file() const {
    if (!data_path.empty()) return data_path;
    return out / (data_format == DatasetFormat::csv ? "dataset.csv" : "dataset.hndh");
  }
  std::filesystem::path model_file() const { return model_path.empty() ? out / "model.hndm" : model_path; }
  std::filesystem::path codes_file() const { return codes_path.empty() ? out / "codes.hndb" : codes_path; }

  void validate() const;
};

// Defaults, then settings in key order. Unknown keys and malformed values
// throw ValidationError.
RunConfig build_run_config(const Settings& settings);

std::vector<std::string> known_keys();

// Hyperparameters echoed into reports. Paths and thread count are left out so
// reports are comparable across machines and thread counts.
std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg);

}  // namespace hndh::cli
