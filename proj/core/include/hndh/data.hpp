#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <tuple>
#include <vector>

namespace hndh {

using LabelColumn = std::span<const std::uint8_t>;

// n x d sample features, row-major. Entries are always finite.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n, std::size_t d, std::vector<double> values);

  std::size_t n() const noexcept { return n_; }
  std::size_t d() const noexcept { return d_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> values_;
};

// l x n binary label matrix. Storage is sample-major: column(i) is contiguous.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(std::size_t l, std::size_t n, std::vector<std::uint8_t> values);

  // One-hot matrix from class indices.
  static LabelMatrix from_classes(std::size_t l, std::span<const std::size_t> classes);

  std::size_t l() const noexcept { return l_; }
  std::size_t n() const noexcept { return n_; }
  LabelColumn column(std::size_t i) const { return {values_.data() + i * l_, l_}; }
  bool has(std::size_t k, std::size_t i) const { return values_[i * l_ + k] != 0; }
  std::vector<std::size_t> classes_of(std::size_t i) const;
  bool is_single_label() const;
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::size_t l_ = 0;
  std::size_t n_ = 0;
  std::vector<std::uint8_t> values_;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(FeatureMatrix features, LabelMatrix labels, std::vector<std::uint64_t> ids);

  const FeatureMatrix& features() const noexcept { return features_; }
  const LabelMatrix& labels() const noexcept { return labels_; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }

  // Rows at `indices`, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  FeatureMatrix features_;
  LabelMatrix labels_;
  std::vector<std::uint64_t> ids_;
};

enum class DatasetFormat { binary, csv };

struct SplitSpec {
  std::size_t query_per_class = 100;
  std::size_t train_per_class = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplit {
  Dataset query;
  Dataset retrieval;
  Dataset train;
};

struct SyntheticSpec {
  std::size_t n_per_class = 100;
  std::size_t classes = 10;
  std::size_t dim = 32;
  double multi_label_fraction = 0.0;
  double cluster_sep = 10.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// `num_classes` is only consulted for csv, which does not record l; 0 infers
// it as the largest class index + 1.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     std::size_t num_classes = 0);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path, DatasetFormat format);

Dataset generate_synthetic(const SyntheticSpec& spec);

// 1 iff the two label columns share an active class.
int pair_similarity(LabelColumn a, LabelColumn b);

DatasetSplit split_dataset(const Dataset& dataset, const SplitSpec& spec);

}  // namespace hndh
