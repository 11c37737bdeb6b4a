#include "hndh/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>

#include "binary_io.hpp"
#include "hndh/error.hpp"

namespace hndh {

namespace {

constexpr std::string_view kDatasetMagic = "HNDH";
constexpr std::uint8_t kDatasetVersion = 1;

std::string format_float(float value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

template <typename T>
T parse_number(std::string_view text, std::size_t line) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw LoadError(LoadErrorKind::parse,
                    "line " + std::to_string(line) + ": bad number \"" + std::string(text) + "\"");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

Dataset load_binary(const std::filesystem::path& path) {
  io::Reader in(io::read_file(path));
  in.expect_magic(kDatasetMagic, "dataset");
  const auto version = in.get<std::uint8_t>("version");
  if (version != kDatasetVersion) {
    throw LoadError(LoadErrorKind::unsupported_version, "dataset version " + std::to_string(version));
  }
  const std::size_t n = in.get<std::uint32_t>("n");
  const std::size_t d = in.get<std::uint32_t>("d");
  const std::size_t l = in.get<std::uint32_t>("l");
  if (n == 0 || d == 0 || l == 0) {
    throw LoadError(LoadErrorKind::dimension_mismatch,
                    "header declares n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                        ", l=" + std::to_string(l));
  }
  const std::size_t label_bytes = (l + 7) / 8;
  const std::size_t expected = n * d * sizeof(float) + n * label_bytes + n * sizeof(std::uint64_t);
  in.require(expected, "dataset body");
  if (in.remaining() != expected) {
    throw LoadError(LoadErrorKind::dimension_mismatch,
                    std::to_string(in.remaining() - expected) + " trailing bytes after dataset body");
  }

  std::vector<double> features(n * d);
  for (auto& v : features) v = static_cast<double>(in.get<float>("features"));

  std::vector<std::uint8_t> labels(n * l, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < label_bytes; ++b) {
      const auto byte = in.get<std::uint8_t>("labels");
      for (std::size_t bit = 0; bit < 8; ++bit) {
        const std::size_t k = b * 8 + bit;
        if ((byte >> bit) & 1u) {
          if (k >= l) {
            throw LoadError(LoadErrorKind::invariant_violation,
                            "sample " + std::to_string(i) + " sets padding label bit " + std::to_string(k));
          }
          labels[i * l + k] = 1;
        }
      }
    }
  }

  std::vector<std::uint64_t> ids(n);
  for (auto& id : ids) id = in.get<std::uint64_t>("ids");

  try {
    return Dataset(FeatureMatrix(n, d, std::move(features)), LabelMatrix(l, n, std::move(labels)),
                   std::move(ids));
  } catch (const ValidationError& e) {
    throw LoadError(LoadErrorKind::invariant_violation, e.what());
  }
}

void save_binary(const Dataset& dataset, const std::filesystem::path& path) {
  const std::size_t n = dataset.size();
  const std::size_t d = dataset.features().d();
  const std::size_t l = dataset.labels().l();
  io::Writer out;
  out.bytes(kDatasetMagic);
  out.put<std::uint8_t>(kDatasetVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(n));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(l));
  for (double v : dataset.features().values()) out.put<float>(static_cast<float>(v));
  const std::size_t label_bytes = (l + 7) / 8;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < label_bytes; ++b) {
      std::uint8_t byte = 0;
      for (std::size_t bit = 0; bit < 8 && b * 8 + bit < l; ++bit) {
        if (dataset.labels().has(b * 8 + bit, i)) byte |= static_cast<std::uint8_t>(1u << bit);
      }
      out.put<std::uint8_t>(byte);
    }
  }
  for (auto id : dataset.ids()) out.put<std::uint64_t>(id);
  io::write_file_atomic(path, out.buffer());
}

Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes) {
  const auto raw = io::read_file(path);
  std::string_view text(raw.data(), raw.size());
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  if (lines.empty()) throw LoadError(LoadErrorKind::truncated, "csv has no header");

  const auto header = split(lines[0], ',');
  if (header.size() < 3 || header.front() != "id" || header.back() != "labels") {
    throw LoadError(LoadErrorKind::bad_magic, "csv header must be id,f0..f{d-1},labels");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t f = 0; f < d; ++f) {
    if (header[f + 1] != "f" + std::to_string(f)) {
      throw LoadError(LoadErrorKind::bad_magic, "csv header column " + std::to_string(f + 1) +
                                                    " should be f" + std::to_string(f));
    }
  }
  const std::size_t n = lines.size() - 1;
  if (n == 0) throw LoadError(LoadErrorKind::dimension_mismatch, "csv has no samples");

  std::vector<double> features;
  features.reserve(n * d);
  std::vector<std::uint64_t> ids;
  std::vector<std::vector<std::size_t>> classes(n);
  std::size_t max_class = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t line_no = i + 2;
    const auto cells = split(lines[i + 1], ',');
    if (cells.size() != d + 2) {
      throw LoadError(LoadErrorKind::dimension_mismatch,
                      "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                          " fields, expected " + std::to_string(d + 2));
    }
    ids.push_back(parse_number<std::uint64_t>(cells[0], line_no));
    for (std::size_t f = 0; f < d; ++f) {
      features.push_back(static_cast<double>(parse_number<float>(cells[f + 1], line_no)));
    }
    if (!cells.back().empty()) {
      for (auto token : split(cells.back(), ';')) {
        const auto k = parse_number<std::size_t>(token, line_no);
        classes[i].push_back(k);
        max_class = std::max(max_class, k);
      }
    }
  }
  const std::size_t l = num_classes == 0 ? max_class + 1 : num_classes;
  std::vector<std::uint8_t> labels(n * l, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto k : classes[i]) {
      if (k >= l) {
        throw LoadError(LoadErrorKind::dimension_mismatch,
                        "class index " + std::to_string(k) + " >= " + std::to_string(l));
      }
      labels[i * l + k] = 1;
    }
  }
  try {
    return Dataset(FeatureMatrix(n, d, std::move(features)), LabelMatrix(l, n, std::move(labels)),
                   std::move(ids));
  } catch (const ValidationError& e) {
    throw LoadError(LoadErrorKind::invariant_violation, e.what());
  }
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  const std::size_t d = dataset.features().d();
  std::ostringstream out;
  out << "id";
  for (std::size_t f = 0; f < d; ++f) out << ",f" << f;
  out << ",labels\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.ids()[i];
    for (double v : dataset.features().row(i)) out << ',' << format_float(static_cast<float>(v));
    out << ',';
    const auto classes = dataset.labels().classes_of(i);
    for (std::size_t c = 0; c < classes.size(); ++c) out << (c ? ";" : "") << classes[c];
    out << '\n';
  }
  io::write_file_atomic(path, out.str());
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t n, std::size_t d, std::vector<double> values)
    : n_(n), d_(d), values_(std::move(values)) {
  if (n == 0 || d == 0) throw ValidationError("feature matrix needs n >= 1 and d >= 1");
  if (values_.size() != n * d) throw ValidationError("feature matrix size does not match n*d");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError("non-finite feature at sample " + std::to_string(i / d) + ", dim " +
                            std::to_string(i % d));
    }
  }
}

LabelMatrix::LabelMatrix(std::size_t l, std::size_t n, std::vector<std::uint8_t> values)
    : l_(l), n_(n), values_(std::move(values)) {
  if (l == 0 || n == 0) throw ValidationError("label matrix needs l >= 1 and n >= 1");
  if (values_.size() != l * n) throw ValidationError("label matrix size does not match l*n");
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t active = 0;
    for (std::size_t k = 0; k < l; ++k) {
      const auto v = values_[i * l + k];
      if (v > 1) throw ValidationError("label entry is not 0/1 at sample " + std::to_string(i));
      active += v;
    }
    if (active == 0) throw ValidationError("sample " + std::to_string(i) + " has no labels");
  }
}

LabelMatrix LabelMatrix::from_classes(std::size_t l, std::span<const std::size_t> classes) {
  std::vector<std::uint8_t> values(l * classes.size(), 0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= l) throw ValidationError("class index out of range");
    values[i * l + classes[i]] = 1;
  }
  return LabelMatrix(l, classes.size(), std::move(values));
}

std::vector<std::size_t> LabelMatrix::classes_of(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < l_; ++k) {
    if (has(k, i)) out.push_back(k);
  }
  return out;
}

bool LabelMatrix::is_single_label() const {
  for (std::size_t i = 0; i < n_; ++i) {
    const auto col = column(i);
    if (std::count(col.begin(), col.end(), std::uint8_t{1}) != 1) return false;
  }
  return true;
}

Dataset::Dataset(FeatureMatrix features, LabelMatrix labels, std::vector<std::uint64_t> ids)
    : features_(std::move(features)), labels_(std::move(labels)), ids_(std::move(ids)) {
  if (features_.n() != labels_.n() || features_.n() != ids_.size()) {
    throw ValidationError("dataset parts disagree on sample count");
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(ids_.size());
  for (auto id : ids_) {
    if (!seen.insert(id).second) throw ValidationError("duplicate sample id " + std::to_string(id));
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t d = features_.d();
  const std::size_t l = labels_.l();
  std::vector<double> features;
  features.reserve(indices.size() * d);
  std::vector<std::uint8_t> labels;
  labels.reserve(indices.size() * l);
  std::vector<std::uint64_t> ids;
  ids.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw ValidationError("subset index out of range");
    const auto row = features_.row(i);
    features.insert(features.end(), row.begin(), row.end());
    const auto col = labels_.column(i);
    labels.insert(labels.end(), col.begin(), col.end());
    ids.push_back(ids_[i]);
  }
  return Dataset(FeatureMatrix(indices.size(), d, std::move(features)),
                 LabelMatrix(l, indices.size(), std::move(labels)), std::move(ids));
}

void SplitSpec::validate() const {
  if (query_per_class < 1) throw ValidationError("query_per_class must be >= 1");
  if (train_per_class < 1) throw ValidationError("train_per_class must be >= 1");
}

void SyntheticSpec::validate() const {
  if (n_per_class < 1) throw ValidationError("n_per_class must be >= 1");
  if (classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (dim < 2) throw ValidationError("synthetic data needs dim >= 2");
  if (!(multi_label_fraction >= 0.0 && multi_label_fraction <= 1.0)) {
    throw ValidationError("multi_label_fraction must lie in [0, 1]");
  }
  if (!(cluster_sep > 0.0) || !std::isfinite(cluster_sep)) throw ValidationError("cluster_sep must be positive");
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw ValidationError("noise_sigma must be positive");
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, std::size_t num_classes) {
  if (path.empty()) throw IoError("empty dataset path");
  return format == DatasetFormat::binary ? load_binary(path) : load_csv(path, num_classes);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path, DatasetFormat format) {
  if (path.empty()) throw IoError("empty dataset path");
  if (format == DatasetFormat::binary) {
    save_binary(dataset, path);
  } else {
    save_csv(dataset, path);
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t l = spec.classes;
  const std::size_t d = spec.dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Class means uniformly on the sphere of radius cluster_sep.
  std::vector<double> means(l * d);
  for (std::size_t k = 0; k < l; ++k) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t f = 0; f < d; ++f) {
        means[k * d + f] = gauss(rng);
        norm += means[k * d + f] * means[k * d + f];
      }
    } while (norm == 0.0);
    const double scale = spec.cluster_sep / std::sqrt(norm);
    for (std::size_t f = 0; f < d; ++f) means[k * d + f] *= scale;
  }

  const auto n_multi = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.n_per_class) * spec.multi_label_fraction));
  const std::size_t n = spec.n_per_class * l;
  std::vector<double> features(n * d);
  std::vector<std::uint8_t> labels(n * l, 0);
  std::uniform_int_distribution<std::size_t> partner_dist(0, l - 2);

  std::size_t i = 0;
  for (std::size_t k = 0; k < l; ++k) {
    for (std::size_t s = 0; s < spec.n_per_class; ++s, ++i) {
      labels[i * l + k] = 1;
      std::size_t partner = k;
      if (s < n_multi) {
        partner = partner_dist(rng);
        if (partner >= k) ++partner;
        labels[i * l + partner] = 1;
      }
      for (std::size_t f = 0; f < d; ++f) {
        const double center = 0.5 * (means[k * d + f] + means[partner * d + f]);
        // Stored at 32-bit precision so on-disk round trips are exact.
        features[i * d + f] = static_cast<float>(center + spec.noise_sigma * gauss(rng));
      }
    }
  }

  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  return Dataset(FeatureMatrix(n, d, std::move(features)), LabelMatrix(l, n, std::move(labels)),
                 std::move(ids));
}

int pair_similarity(LabelColumn a, LabelColumn b) {
  if (a.size() != b.size()) {
    throw ValidationError("label columns differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] && b[k]) return 1;
  }
  return 0;
}

namespace {

// Greedy per-class fill in class-index order over a shuffled candidate order.
// A sample is taken at most once and counts only for the class that took it.
std::vector<std::size_t> draw_per_class(const LabelMatrix& labels, std::span<const std::size_t> order,
                                        std::vector<bool>& taken, std::size_t per_class,
                                        const char* role) {
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < labels.l(); ++k) {
    std::size_t count = 0;
    for (auto i : order) {
      if (count == per_class) break;
      if (taken[i] || !labels.has(k, i)) continue;
      taken[i] = true;
      picked.push_back(i);
      ++count;
    }
    if (count < per_class) {
      throw ValidationError(std::string("class ") + std::to_string(k) + " has only " +
                            std::to_string(count) + " samples available for the " + role +
                            " set, needs " + std::to_string(per_class));
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

DatasetSplit split_dataset(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> in_query(n, false);
  const auto query = draw_per_class(dataset.labels(), order, in_query, spec.query_per_class, "query");

  std::vector<std::size_t> retrieval;
  retrieval.reserve(n - query.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_query[i]) retrieval.push_back(i);
  }

  // Train draws from retrieval only; query members are pre-marked as taken.
  std::vector<bool> taken = in_query;
  const auto train = draw_per_class(dataset.labels(), order, taken, spec.train_per_class, "train");

  return DatasetSplit{dataset.subset(query), dataset.subset(retrieval), dataset.subset(train)};
}

}  // namespace hndh
