#include "hndh/codes.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <string_view>

#include "binary_io.hpp"
#include "hndh/error.hpp"

namespace hndh {

namespace {

constexpr std::string_view kCodesMagic = "HNDB";
constexpr std::uint8_t kCodesVersion = 1;

void check_canonical(const PackedCode& code) {
  if (code.words.size() != words_for_bits(code.r)) throw ValidationError("packed code has wrong word count");
  if (code.r % 64 != 0 && !code.words.empty()) {
    const std::uint64_t padding = ~std::uint64_t{0} << (code.r % 64);
    if (code.words.back() & padding) throw ValidationError("packed code has nonzero padding bits");
  }
}

}  // namespace

PackedCode pack(std::span<const std::int8_t> bits) {
  PackedCode code{bits.size(), std::vector<std::uint64_t>(words_for_bits(bits.size()), 0)};
  for (std::size_t k = 0; k < bits.size(); ++k) {
    if (bits[k] == 1) {
      code.words[k / 64] |= std::uint64_t{1} << (k % 64);
    } else if (bits[k] != -1) {
      throw ValidationError("code component " + std::to_string(k) + " is not -1 or +1");
    }
  }
  return code;
}

std::vector<std::int8_t> unpack(const PackedCode& code) {
  std::vector<std::int8_t> bits(code.r);
  for (std::size_t k = 0; k < code.r; ++k) bits[k] = (code.words[k / 64] >> (k % 64)) & 1u ? 1 : -1;
  return bits;
}

std::size_t hamming(const PackedCode& a, const PackedCode& b) {
  if (a.r != b.r) {
    throw ValidationError("code lengths differ: " + std::to_string(a.r) + " vs " + std::to_string(b.r));
  }
  return hamming_words(a.words, b.words);
}

CodeDatabase::CodeDatabase(std::size_t r) : r_(r), words_per_code_(words_for_bits(r)) {
  if (r == 0) throw ValidationError("code length must be >= 1");
}

void CodeDatabase::add(const PackedCode& code, std::uint64_t id) {
  if (code.r != r_) {
    throw ValidationError("code length " + std::to_string(code.r) + " does not match database r=" +
                          std::to_string(r_));
  }
  check_canonical(code);
  words_.insert(words_.end(), code.words.begin(), code.words.end());
  ids_.push_back(id);
}

PackedCode CodeDatabase::code(std::size_t i) const {
  const auto w = code_words(i);
  return PackedCode{r_, std::vector<std::uint64_t>(w.begin(), w.end())};
}

std::vector<std::size_t> hamming_distances(const PackedCode& query, const CodeDatabase& db) {
  if (query.r != db.r()) {
    throw ValidationError("query has r=" + std::to_string(query.r) + ", database r=" + std::to_string(db.r()));
  }
  check_canonical(query);
  std::vector<std::size_t> distances(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) distances[i] = hamming_words(query.words, db.code_words(i));
  return distances;
}

std::vector<std::size_t> rank(const PackedCode& query, const CodeDatabase& db, TieBreak tie) {
  const auto distances = hamming_distances(query, db);
  std::vector<std::size_t> order(db.size());
  if (tie == TieBreak::index) {
    // Counting sort over distances 0..r: linear and stable by position.
    std::vector<std::size_t> offsets(db.r() + 2, 0);
    for (auto d : distances) ++offsets[d + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    for (std::size_t i = 0; i < distances.size(); ++i) order[offsets[distances[i]]++] = i;
    return order;
  }
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (distances[a] != distances[b]) return distances[a] < distances[b];
    if (db.id(a) != db.id(b)) return db.id(a) < db.id(b);
    return a < b;
  });
  return order;
}

std::vector<std::size_t> search_topk(const PackedCode& query, const CodeDatabase& db, std::size_t k, TieBreak tie) {
  if (k == 0) throw ValidationError("k must be >= 1");
  if (tie == TieBreak::id || k >= db.size()) {
    auto order = rank(query, db, tie);
    order.resize(std::min(k, order.size()));
    return order;
  }
  // Find the distance cutoff from a histogram, then collect in position order.
  const auto distances = hamming_distances(query, db);
  std::vector<std::size_t> histogram(db.r() + 1, 0);
  for (auto d : distances) ++histogram[d];
  std::size_t cutoff = 0;
  for (std::size_t seen = 0; cutoff <= db.r(); ++cutoff) {
    seen += histogram[cutoff];
    if (seen >= k) break;
  }
  std::vector<std::size_t> offsets(cutoff + 2, 0);
  for (std::size_t d = 0; d <= cutoff; ++d) offsets[d + 1] = offsets[d] + histogram[d];
  std::vector<std::size_t> order(offsets[cutoff + 1]);
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] <= cutoff) order[offsets[distances[i]]++] = i;
  }
  order.resize(k);
  return order;
}

void save_code_database(const CodeDatabase& db, const std::filesystem::path& path) {
  if (db.r() == 0) throw ValidationError("cannot save a database without a code length");
  io::Writer out;
  out.bytes(kCodesMagic);
  out.put<std::uint8_t>(kCodesVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(db.r()));
  out.put<std::uint64_t>(db.size());
  for (auto w : db.words()) out.put<std::uint64_t>(w);
  for (auto id : db.ids()) out.put<std::uint64_t>(id);
  io::write_file_atomic(path, out.buffer());
}

CodeDatabase load_code_database(const std::filesystem::path& path) {
  io::Reader in(io::read_file(path));
  in.expect_magic(kCodesMagic, "code database");
  const auto version = in.get<std::uint8_t>("version");
  if (version != kCodesVersion) {
    throw LoadError(LoadErrorKind::unsupported_version, "code database version " + std::to_string(version));
  }
  const std::size_t r = in.get<std::uint32_t>("r");
  const auto count = in.get<std::uint64_t>("count");
  if (r == 0) throw LoadError(LoadErrorKind::dimension_mismatch, "code database declares r=0");
  const std::size_t wpc = words_for_bits(r);
  in.require(count * (wpc + 1) * sizeof(std::uint64_t), "code database body");
  if (in.remaining() != count * (wpc + 1) * sizeof(std::uint64_t)) {
    throw LoadError(LoadErrorKind::dimension_mismatch, "trailing bytes after code database");
  }
  std::vector<PackedCode> codes(count, PackedCode{r, std::vector<std::uint64_t>(wpc)});
  for (auto& code : codes) {
    for (auto& w : code.words) w = in.get<std::uint64_t>("codes");
  }
  CodeDatabase db(r);
  for (auto& code : codes) {
    const auto id = in.get<std::uint64_t>("ids");
    try {
      db.add(code, id);
    } catch (const ValidationError& e) {
      throw LoadError(LoadErrorKind::invariant_violation, e.what());
    }
  }
  return db;
}

}  // namespace hndh
