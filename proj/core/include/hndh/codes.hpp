#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hndh {

// r bits packed into 64-bit words; bit k set means component k is +1. Bits at
// positions >= r are always zero.
struct PackedCode {
  std::size_t r = 0;
  std::vector<std::uint64_t> words;

  friend bool operator==(const PackedCode&, const PackedCode&) = default;
};

constexpr std::size_t words_for_bits(std::size_t r) noexcept { return (r + 63) / 64; }

PackedCode pack(std::span<const std::int8_t> bits);
std::vector<std::int8_t> unpack(const PackedCode& code);

inline std::size_t hamming_words(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) noexcept {
  std::size_t distance = 0;
  for (std::size_t w = 0; w < a.size(); ++w) distance += static_cast<std::size_t>(std::popcount(a[w] ^ b[w]));
  return distance;
}

std::size_t hamming(const PackedCode& a, const PackedCode& b);

// Contiguous packed codes with one id per code.
class CodeDatabase {
 public:
  CodeDatabase() = default;
  explicit CodeDatabase(std::size_t r);

  std::size_t r() const noexcept { return r_; }
  std::size_t words_per_code() const noexcept { return words_per_code_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  void add(const PackedCode& code, std::uint64_t id);
  std::span<const std::uint64_t> code_words(std::size_t i) const {
    return {words_.data() + i * words_per_code_, words_per_code_};
  }
  PackedCode code(std::size_t i) const;
  std::uint64_t id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  friend bool operator==(const CodeDatabase&, const CodeDatabase&) = default;

 private:
  std::size_t r_ = 0;
  std::size_t words_per_code_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<std::uint64_t> ids_;
};

enum class TieBreak {
  index,  // equal distances ordered by position in the database
  id,     // equal distances ordered by stored id
};

std::vector<std::size_t> hamming_distances(const PackedCode& query, const CodeDatabase& db);

// Database positions sorted by ascending Hamming distance.
std::vector<std::size_t> rank(const PackedCode& query, const CodeDatabase& db, TieBreak tie = TieBreak::index);

// The first min(k, |db|) entries of rank(query, db, tie).
std::vector<std::size_t> search_topk(const PackedCode& query, const CodeDatabase& db, std::size_t k,
                                     TieBreak tie = TieBreak::index);

void save_code_database(const CodeDatabase& db, const std::filesystem::path& path);
CodeDatabase load_code_database(const std::filesystem::path& path);

}  // namespace hndh
