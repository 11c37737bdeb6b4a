#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hndh/codes.hpp"
#include "hndh/data.hpp"
#include "hndh/model.hpp"
#include "hndh/trainer.hpp"

namespace hndh {

// Ground-truth relevance: a query and a database item are relevant iff they
// share a class label.
class RelevanceOracle {
 public:
  RelevanceOracle(LabelMatrix query_labels, LabelMatrix db_labels);

  std::size_t query_count() const noexcept { return query_.n(); }
  std::size_t db_count() const noexcept { return db_.n(); }
  bool relevant(std::size_t query, std::size_t item) const;
  std::size_t total_relevant(std::size_t query) const { return totals_[query]; }

 private:
  LabelMatrix query_;
  LabelMatrix db_;
  std::vector<std::size_t> totals_;
};

// Mean of precision@k over the relevant positions k <= cutoff. Divides by
// total_relevant without a cutoff, or by the relevant count inside the cutoff
// with one; 0 when that divisor is 0.
double average_precision(std::span<const std::uint8_t> relevance_ranked, std::size_t total_relevant,
                         std::optional<std::size_t> cutoff = std::nullopt);

// Positions past the end of the list count as irrelevant.
double precision_at_k(std::span<const std::uint8_t> relevance_ranked, std::size_t k);

struct MapResult {
  double map = 0.0;
  std::vector<double> per_query_ap;
};

MapResult mean_average_precision(std::span<const PackedCode> queries, const CodeDatabase& db,
                                 const RelevanceOracle& oracle, std::optional<std::size_t> cutoff = std::nullopt,
                                 unsigned threads = 1, TieBreak tie = TieBreak::index);

// Mean precision@k over queries for each k.
std::vector<std::pair<std::size_t, double>> precision_curve(std::span<const PackedCode> queries,
                                                            const CodeDatabase& db, const RelevanceOracle& oracle,
                                                            std::span<const std::size_t> ks, unsigned threads = 1);

PackedCode encode_sample(const HashHeadParams& params, std::span<const double> x);
std::vector<PackedCode> encode_codes(const HashHeadParams& params, const FeatureMatrix& features,
                                     unsigned threads = 1);
CodeDatabase encode_dataset(const HashHeadParams& params, const Dataset& dataset, unsigned threads = 1);

struct BitLengthResult {
  std::size_t r = 0;
  double map = 0.0;
  std::optional<std::size_t> cutoff;
  std::vector<std::pair<std::size_t, double>> precision_at_k;
  std::vector<double> per_query_ap;
};

struct EvalReport {
  std::vector<BitLengthResult> results;
  std::vector<std::pair<std::string, std::string>> config;
};

// Encodes query and retrieval sets with `params` and scores the Hamming ranking.
BitLengthResult evaluate_retrieval(const HashHeadParams& params, const Dataset& query, const Dataset& retrieval,
                                   std::optional<std::size_t> cutoff, std::span<const std::size_t> precision_ks = {},
                                   unsigned threads = 1);

std::string to_json(const EvalReport& report);

enum class AblationVariant { combined, j1_only, j2_only };

const char* to_string(AblationVariant variant);
AblationVariant parse_ablation_variant(const std::string& name);

// Training configuration of one ablation cell.
TrainConfig ablation_config(const TrainConfig& base, AblationVariant variant, std::size_t code_length);

struct AblationCell {
  std::optional<double> map;
  std::string error;  // set when training or evaluation of this cell failed
};

struct AblationTable {
  std::vector<AblationVariant> variants;
  std::vector<std::size_t> bit_lengths;
  std::vector<std::vector<AblationCell>> cells;  // [variant][bit length]
  std::optional<std::size_t> cutoff;
};

// Trains and evaluates every (variant, code length) cell from the same seed.
// A failing cell records its error and the remaining cells still run.
AblationTable ablation_run(const Dataset& dataset, const TrainConfig& base_cfg, const SplitSpec& split,
                           std::span<const std::size_t> bit_lengths, std::span<const AblationVariant> variants,
                           std::optional<std::size_t> cutoff = std::nullopt);

std::string to_json(const AblationTable& table);
// Variant rows by bit-length columns.
std::string to_csv(const AblationTable& table);

struct EmbeddingRow {
  std::uint64_t id = 0;
  std::vector<std::size_t> classes;
  std::vector<double> values;
};

// CSV with header id,labels,e0..e{r-1}; labels are semicolon-joined indices.
void export_embeddings(const HashHeadParams& params, const Dataset& dataset, const std::filesystem::path& path,
                       unsigned threads = 1);
std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path);

}  // namespace hndh
