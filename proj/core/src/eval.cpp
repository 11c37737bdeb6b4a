#include "hndh/eval.hpp"

#include <charconv>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "binary_io.hpp"
#include "hndh/error.hpp"
#include "hndh/parallel.hpp"

namespace hndh {

using nlohmann::json;

RelevanceOracle::RelevanceOracle(LabelMatrix query_labels, LabelMatrix db_labels)
    : query_(std::move(query_labels)), db_(std::move(db_labels)), totals_(query_.n(), 0) {
  if (query_.l() != db_.l()) {
    throw ValidationError("query labels have " + std::to_string(query_.l()) + " classes, database " +
                          std::to_string(db_.l()));
  }
  for (std::size_t q = 0; q < query_.n(); ++q) {
    for (std::size_t j = 0; j < db_.n(); ++j) totals_[q] += relevant(q, j) ? 1 : 0;
  }
}

bool RelevanceOracle::relevant(std::size_t query, std::size_t item) const {
  return pair_similarity(query_.column(query), db_.column(item)) == 1;
}

double average_precision(std::span<const std::uint8_t> relevance_ranked, std::size_t total_relevant,
                         std::optional<std::size_t> cutoff) {
  const std::size_t depth = cutoff ? std::min(*cutoff, relevance_ranked.size()) : relevance_ranked.size();
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < depth; ++k) {
    if (relevance_ranked[k] > 1) throw ValidationError("relevance entries must be 0 or 1");
    if (relevance_ranked[k]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits > total_relevant) {
    throw ValidationError("ranked list has " + std::to_string(hits) + " relevant items but total_relevant is " +
                          std::to_string(total_relevant));
  }
  const std::size_t denominator = cutoff ? hits : total_relevant;
  return denominator == 0 ? 0.0 : sum / static_cast<double>(denominator);
}

double precision_at_k(std::span<const std::uint8_t> relevance_ranked, std::size_t k) {
  if (k == 0) throw ValidationError("precision@k needs k >= 1");
  const std::size_t depth = std::min(k, relevance_ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i) hits += relevance_ranked[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

namespace {

void check_dimensions(std::span<const PackedCode> queries, const CodeDatabase& db, const RelevanceOracle& oracle) {
  if (queries.size() != oracle.query_count() || db.size() != oracle.db_count()) {
    throw ValidationError("codes cover " + std::to_string(queries.size()) + " queries / " +
                          std::to_string(db.size()) + " items, oracle " + std::to_string(oracle.query_count()) +
                          " / " + std::to_string(oracle.db_count()));
  }
}

std::vector<std::uint8_t> ranked_relevance(const PackedCode& query, std::size_t q, const CodeDatabase& db,
                                           const RelevanceOracle& oracle, std::optional<std::size_t> depth,
                                           TieBreak tie) {
  const auto order = depth ? search_topk(query, db, *depth, tie) : rank(query, db, tie);
  std::vector<std::uint8_t> rel(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) rel[k] = oracle.relevant(q, order[k]) ? 1 : 0;
  return rel;
}

}  // namespace

MapResult mean_average_precision(std::span<const PackedCode> queries, const CodeDatabase& db,
                                 const RelevanceOracle& oracle, std::optional<std::size_t> cutoff, unsigned threads,
                                 TieBreak tie) {
  check_dimensions(queries, db, oracle);
  if (queries.empty()) throw ValidationError("no queries to evaluate");
  if (cutoff && *cutoff == 0) throw ValidationError("cutoff must be >= 1");
  MapResult result;
  result.per_query_ap.resize(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    const auto rel = ranked_relevance(queries[q], q, db, oracle, cutoff, tie);
    result.per_query_ap[q] = average_precision(rel, oracle.total_relevant(q), cutoff);
  });
  double sum = 0.0;
  for (double ap : result.per_query_ap) sum += ap;
  result.map = sum / static_cast<double>(queries.size());
  return result;
}

std::vector<std::pair<std::size_t, double>> precision_curve(std::span<const PackedCode> queries,
                                                            const CodeDatabase& db, const RelevanceOracle& oracle,
                                                            std::span<const std::size_t> ks, unsigned threads) {
  check_dimensions(queries, db, oracle);
  if (ks.empty() || queries.empty()) return {};
  const std::size_t depth = *std::max_element(ks.begin(), ks.end());
  std::vector<std::vector<double>> per_query(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    const auto rel = ranked_relevance(queries[q], q, db, oracle, depth, TieBreak::index);
    for (auto k : ks) per_query[q].push_back(precision_at_k(rel, k));
  });
  std::vector<std::pair<std::size_t, double>> curve;
  for (std::size_t t = 0; t < ks.size(); ++t) {
    double sum = 0.0;
    for (const auto& row : per_query) sum += row[t];
    curve.emplace_back(ks[t], sum / static_cast<double>(queries.size()));
  }
  return curve;
}

PackedCode encode_sample(const HashHeadParams& params, std::span<const double> x) {
  return pack(encode(forward(params, x)));
}

std::vector<PackedCode> encode_codes(const HashHeadParams& params, const FeatureMatrix& features, unsigned threads) {
  std::vector<PackedCode> codes(features.n());
  parallel_for(features.n(), threads, [&](std::size_t i) { codes[i] = encode_sample(params, features.row(i)); });
  return codes;
}

CodeDatabase encode_dataset(const HashHeadParams& params, const Dataset& dataset, unsigned threads) {
  const auto codes = encode_codes(params, dataset.features(), threads);
  CodeDatabase db(params.code_length());
  for (std::size_t i = 0; i < codes.size(); ++i) db.add(codes[i], dataset.ids()[i]);
  return db;
}

BitLengthResult evaluate_retrieval(const HashHeadParams& params, const Dataset& query, const Dataset& retrieval,
                                   std::optional<std::size_t> cutoff, std::span<const std::size_t> precision_ks,
                                   unsigned threads) {
  const auto queries = encode_codes(params, query.features(), threads);
  const auto db = encode_dataset(params, retrieval, threads);
  const RelevanceOracle oracle(query.labels(), retrieval.labels());
  auto map = mean_average_precision(queries, db, oracle, cutoff, threads);
  BitLengthResult result;
  result.r = params.code_length();
  result.map = map.map;
  result.cutoff = cutoff;
  result.per_query_ap = std::move(map.per_query_ap);
  result.precision_at_k = precision_curve(queries, db, oracle, precision_ks, threads);
  return result;
}

namespace {

json cutoff_json(std::optional<std::size_t> cutoff) { return cutoff ? json(*cutoff) : json(nullptr); }

}  // namespace

std::string to_json(const EvalReport& report) {
  json doc;
  json config = json::object();
  for (const auto& [key, value] : report.config) config[key] = value;
  doc["config"] = config;
  json results = json::array();
  for (const auto& r : report.results) {
    json entry;
    entry["bits"] = r.r;
    entry["cutoff"] = cutoff_json(r.cutoff);
    entry[r.cutoff ? "map_at_k" : "map"] = r.map;
    json curve = json::array();
    for (const auto& [k, p] : r.precision_at_k) curve.push_back({{"k", k}, {"precision", p}});
    entry["precision_at_k"] = curve;
    entry["per_query_ap"] = r.per_query_ap;
    results.push_back(entry);
  }
  doc["results"] = results;
  return doc.dump(2) + "\n";
}

const char* to_string(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::combined: return "combined";
    case AblationVariant::j1_only: return "j1_only";
    case AblationVariant::j2_only: return "j2_only";
  }
  return "unknown";
}

AblationVariant parse_ablation_variant(const std::string& name) {
  if (name == "combined") return AblationVariant::combined;
  if (name == "j1_only") return AblationVariant::j1_only;
  if (name == "j2_only") return AblationVariant::j2_only;
  throw ValidationError("unknown ablation variant \"" + name + "\" (combined, j1_only, j2_only)");
}

TrainConfig ablation_config(const TrainConfig& base, AblationVariant variant, std::size_t code_length) {
  TrainConfig cfg = base;
  cfg.head.code_length = code_length;
  switch (variant) {
    case AblationVariant::combined: break;
    case AblationVariant::j1_only: cfg.lambda = 0.0; break;
    case AblationVariant::j2_only: cfg.coarse_term = false; break;
  }
  return cfg;
}

AblationTable ablation_run(const Dataset& dataset, const TrainConfig& base_cfg, const SplitSpec& split,
                           std::span<const std::size_t> bit_lengths, std::span<const AblationVariant> variants,
                           std::optional<std::size_t> cutoff) {
  if (bit_lengths.empty() || variants.empty()) throw ValidationError("ablation needs bit lengths and variants");
  const auto parts = split_dataset(dataset, split);
  AblationTable table;
  table.variants.assign(variants.begin(), variants.end());
  table.bit_lengths.assign(bit_lengths.begin(), bit_lengths.end());
  table.cutoff = cutoff;
  for (auto variant : variants) {
    auto& row = table.cells.emplace_back();
    for (auto bits : bit_lengths) {
      AblationCell cell;
      try {
        const auto cfg = ablation_config(base_cfg, variant, bits);
        const auto trained = train(parts.train, cfg);
        cell.map = evaluate_retrieval(trained.params, parts.query, parts.retrieval, cutoff, {}, cfg.threads).map;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      row.push_back(std::move(cell));
    }
  }
  return table;
}

std::string to_json(const AblationTable& table) {
  json doc;
  doc["bit_lengths"] = table.bit_lengths;
  doc["cutoff"] = cutoff_json(table.cutoff);
  json rows = json::array();
  for (std::size_t v = 0; v < table.variants.size(); ++v) {
    json row;
    row["variant"] = to_string(table.variants[v]);
    json maps = json::array();
    json errors = json::array();
    for (const auto& cell : table.cells[v]) {
      maps.push_back(cell.map ? json(*cell.map) : json(nullptr));
      errors.push_back(cell.error.empty() ? json(nullptr) : json(cell.error));
    }
    row["map"] = maps;
    row["errors"] = errors;
    rows.push_back(row);
  }
  doc["rows"] = rows;
  return doc.dump(2) + "\n";
}

std::string to_csv(const AblationTable& table) {
  std::ostringstream out;
  out << "variant";
  for (auto bits : table.bit_lengths) out << ',' << bits << "_bits";
  out << '\n';
  out.precision(4);
  out << std::fixed;
  for (std::size_t v = 0; v < table.variants.size(); ++v) {
    out << to_string(table.variants[v]);
    for (const auto& cell : table.cells[v]) {
      out << ',';
      if (cell.map) out << *cell.map;
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::string format_float(float value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

template <typename T>
T parse_field(std::string_view text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw LoadError(LoadErrorKind::parse, "bad number \"" + std::string(text) + "\"");
  }
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find(sep, start)) != std::string_view::npos; start = pos + 1) {
    out.push_back(line.substr(start, pos - start));
  }
  out.push_back(line.substr(start));
  return out;
}

}  // namespace

void export_embeddings(const HashHeadParams& params, const Dataset& dataset, const std::filesystem::path& path,
                       unsigned threads) {
  params.validate();
  std::vector<Embedding> rows(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) { rows[i] = forward(params, dataset.features().row(i)); });
  std::ostringstream out;
  out << "id,labels";
  for (std::size_t k = 0; k < params.code_length(); ++k) out << ",e" << k;
  out << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.ids()[i] << ',';
    const auto classes = dataset.labels().classes_of(i);
    for (std::size_t c = 0; c < classes.size(); ++c) out << (c ? ";" : "") << classes[c];
    for (double v : rows[i]) out << ',' << format_float(static_cast<float>(v));
    out << '\n';
  }
  io::write_file_atomic(path, out.str());
}

std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path) {
  const auto raw = io::read_file(path);
  const std::string_view text(raw.data(), raw.size());
  auto lines = split_fields(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw LoadError(LoadErrorKind::truncated, "embedding csv has no header");
  const auto header = split_fields(lines[0], ',');
  if (header.size() < 3 || header[0] != "id" || header[1] != "labels") {
    throw LoadError(LoadErrorKind::bad_magic, "embedding csv header must start with id,labels");
  }
  const std::size_t r = header.size() - 2;
  std::vector<EmbeddingRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_fields(lines[li], ',');
    if (cells.size() != r + 2) {
      throw LoadError(LoadErrorKind::dimension_mismatch, "embedding row " + std::to_string(li) + " has " +
                                                             std::to_string(cells.size()) + " fields");
    }
    EmbeddingRow row;
    row.id = parse_field<std::uint64_t>(cells[0]);
    if (!cells[1].empty()) {
      for (auto token : split_fields(cells[1], ';')) row.classes.push_back(parse_field<std::size_t>(token));
    }
    for (std::size_t k = 0; k < r; ++k) row.values.push_back(static_cast<double>(parse_field<float>(cells[k + 2])));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hndh
