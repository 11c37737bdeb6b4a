#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<Vec> centers(const std::vector<Vec>& u, const Labels& y, std::size_t classes) {
  std::vector<Vec> c(classes, Vec(u.front().size(), 0.0));
  for (std::size_t k = 0; k < classes; ++k) {
    double count = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!y[i][k]) continue;
      count += 1.0;
      for (std::size_t b = 0; b < u[i].size(); ++b) c[k][b] += u[i][b];
    }
    for (auto& v : c[k]) v /= count;
  }
  return c;
}

bool similar(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] && b[k]) return true;
  }
  return false;
}

double coarse_term(const std::vector<Vec>& c, const Vec& u, const std::vector<int>& y) {
  long double all = 0.0L;
  long double hit = 0.0L;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const long double e = std::exp(static_cast<long double>(0.5 * dot(c[k], u)));
    all += e;
    if (y[k]) hit += e;
  }
  return static_cast<double>(-std::log(hit / all));
}

double objective(const std::vector<Vec>& u, const Labels& y, const std::vector<Vec>& c,
                 const std::vector<std::size_t>& batch, double lambda, double n_total) {
  long double j1 = 0.0L;
  long double j2 = 0.0L;
  for (auto i : batch) {
    j1 += coarse_term(c, u[i], y[i]);
    for (std::size_t j = 0; j < u.size(); ++j) {
      const long double theta = 0.5L * static_cast<long double>(dot(u[i], u[j]));
      const long double s = similar(y[i], y[j]) ? 1.0L : 0.0L;
      j2 += std::log1p(std::exp(theta)) - s * theta;
    }
  }
  return static_cast<double>(n_total * j1 + lambda * j2);
}

double cross_entropy(const std::vector<Vec>& c, const Vec& u, std::size_t label) {
  long double z = 0.0L;
  for (const auto& ck : c) z += std::exp(static_cast<long double>(0.5 * dot(ck, u)));
  return static_cast<double>(std::log(z) - 0.5L * static_cast<long double>(dot(c[label], u)));
}

int hamming_pm(const std::vector<std::int8_t>& a, const std::vector<std::int8_t>& b) {
  int inner = 0;
  for (std::size_t k = 0; k < a.size(); ++k) inner += a[k] * b[k];
  return (static_cast<int>(a.size()) - inner) / 2;
}

double average_precision(const std::vector<int>& rel, std::size_t total, std::optional<std::size_t> cutoff) {
  const std::size_t end = cutoff ? std::min(*cutoff, rel.size()) : rel.size();
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < end; ++k) {
    if (!rel[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  const std::size_t denom = cutoff ? hits : total;
  return denom == 0 ? 0.0 : sum / static_cast<double>(denom);
}

MapOut brute_force_map(const std::vector<std::vector<std::int8_t>>& queries,
                       const std::vector<std::vector<std::int8_t>>& db, const Labels& query_labels,
                       const Labels& db_labels, std::optional<std::size_t> cutoff) {
  MapOut out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::size_t> order(db.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return hamming_pm(queries[q], db[a]) < hamming_pm(queries[q], db[b]);
    });
    std::vector<int> rel;
    std::size_t total = 0;
    for (auto j : order) rel.push_back(similar(query_labels[q], db_labels[j]) ? 1 : 0);
    for (auto v : rel) total += static_cast<std::size_t>(v);
    out.ap.push_back(average_precision(rel, total, cutoff));
  }
  double sum = 0.0;
  for (auto a : out.ap) sum += a;
  out.map = out.ap.empty() ? 0.0 : sum / static_cast<double>(out.ap.size());
  return out;
}

std::vector<std::int8_t> random_code(std::size_t r, std::mt19937_64& rng) {
  std::vector<std::int8_t> code(r);
  for (auto& v : code) v = (rng() & 1U) ? 1 : -1;
  return code;
}

}  // namespace oracle
