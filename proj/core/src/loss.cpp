#include "hndh/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hndh/error.hpp"
#include "hndh/parallel.hpp"

namespace hndh {

namespace {

double log_sum_exp(std::span<const double> scores, LabelColumn mask = {}) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (mask.empty() || mask[k]) hi = std::max(hi, scores[k]);
  }
  if (!std::isfinite(hi)) throw NonFiniteError("log-sum-exp over empty or non-finite scores");
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (mask.empty() || mask[k]) sum += std::exp(scores[k] - hi);
  }
  return hi + std::log(sum);
}

void check_scores(std::span<const double> scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw NonFiniteError("non-finite center score");
  }
}

void check_label_column(LabelColumn y, std::size_t l) {
  if (y.size() != l) {
    throw ValidationError("label column has " + std::to_string(y.size()) + " entries, expected " +
                          std::to_string(l));
  }
  if (std::none_of(y.begin(), y.end(), [](auto v) { return v != 0; })) {
    throw ValidationError("label column has no active class");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

void check_batch(const EmbeddingStore& store, const LabelMatrix& labels, std::span<const std::size_t> batch) {
  if (store.n() != labels.n()) {
    throw ValidationError("store has " + std::to_string(store.n()) + " columns but labels cover " +
                          std::to_string(labels.n()) + " samples");
  }
  for (auto i : batch) {
    if (i >= store.n()) throw ValidationError("batch index " + std::to_string(i) + " out of range");
  }
}

// Pairwise similarity lookups. Label columns are folded into 64-bit masks
// when L <= 64; wider label sets fall back to pair_similarity.
class SimilarityTable {
 public:
  explicit SimilarityTable(const LabelMatrix& labels) : labels_(labels) {
    if (labels.l() > 64) return;
    masks_.resize(labels.n(), 0);
    for (std::size_t i = 0; i < labels.n(); ++i) {
      for (std::size_t k = 0; k < labels.l(); ++k) {
        if (labels.has(k, i)) masks_[i] |= std::uint64_t{1} << k;
      }
    }
  }

  int operator()(std::size_t i, std::size_t j) const {
    if (!masks_.empty()) return (masks_[i] & masks_[j]) != 0 ? 1 : 0;
    return pair_similarity(labels_.column(i), labels_.column(j));
  }

 private:
  const LabelMatrix& labels_;
  std::vector<std::uint64_t> masks_;
};

// Coarse-term pieces for one sample: P (softmax), Q (label-masked softmax) and
// -log(sum of P over the label support).
double coarse_parts(const ClassCenters& centers, std::span<const double> u, LabelColumn y,
                    std::span<double> p, std::span<double> q) {
  const auto scores = center_scores(centers, u);
  check_scores(scores);
  const double lse_all = log_sum_exp(scores);
  const double lse_masked = log_sum_exp(scores, y);
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp(scores[k] - lse_all);
    q[k] = y[k] ? std::exp(scores[k] - lse_masked) : 0.0;
  }
  return lse_all - lse_masked;
}

}  // namespace

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ClassCenters::ClassCenters(std::size_t r, std::size_t l, std::vector<double> values)
    : r_(r), l_(l), values_(std::move(values)) {
  if (values_.size() != r * l) throw ValidationError("center storage does not match r*L");
  for (double v : values_) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite class center");
  }
}

EmbeddingStore::EmbeddingStore(std::size_t r, std::size_t n)
    : r_(r), n_(n), values_(r * n, 0.0), stamps_(n, 0) {}

void EmbeddingStore::set_column(std::size_t i, std::span<const double> u, std::uint32_t epoch) {
  if (i >= n_) throw ValidationError("store column " + std::to_string(i) + " out of range");
  if (u.size() != r_) throw ValidationError("embedding length does not match store");
  for (double v : u) {
    if (!(v > -1.0 && v < 1.0)) throw NonFiniteError("embedding component outside (-1, 1)");
  }
  std::copy(u.begin(), u.end(), values_.begin() + static_cast<std::ptrdiff_t>(i * r_));
  stamps_[i] = epoch;
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(n_total >= 0.0) || !std::isfinite(n_total)) throw ValidationError("n_total must be >= 0");
}

ClassCenters compute_centers(const EmbeddingStore& store, const LabelMatrix& labels, unsigned threads) {
  if (store.n() != labels.n()) throw ValidationError("store and labels disagree on sample count");
  const std::size_t r = store.r();
  const std::size_t l = labels.l();
  for (std::size_t k = 0; k < l; ++k) {
    bool any = false;
    for (std::size_t i = 0; i < labels.n() && !any; ++i) any = labels.has(k, i);
    if (!any) throw EmptyClassError(k);
  }
  std::vector<double> values(r * l, 0.0);
  parallel_for(l, threads, [&](std::size_t k) {
    double* c = values.data() + k * r;
    std::size_t count = 0;
    for (std::size_t i = 0; i < store.n(); ++i) {
      if (!labels.has(k, i)) continue;
      const auto u = store.column(i);
      for (std::size_t t = 0; t < r; ++t) c[t] += u[t];
      ++count;
    }
    for (std::size_t t = 0; t < r; ++t) c[t] /= static_cast<double>(count);
  });
  return ClassCenters(r, l, std::move(values));
}

std::vector<double> center_scores(const ClassCenters& centers, std::span<const double> u) {
  if (u.size() != centers.r()) {
    throw ValidationError("embedding length " + std::to_string(u.size()) + " does not match centers r=" +
                          std::to_string(centers.r()));
  }
  std::vector<double> scores(centers.l());
  for (std::size_t k = 0; k < centers.l(); ++k) scores[k] = 0.5 * dot(centers.column(k), u);
  return scores;
}

std::vector<double> softmax(std::span<const double> scores) {
  check_scores(scores);
  const double hi = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp(scores[k] - hi);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<double> neighbor_probs(const ClassCenters& centers, std::span<const double> u) {
  return softmax(center_scores(centers, u));
}

double correct_class_prob(const ClassCenters& centers, std::span<const double> u, LabelColumn y) {
  check_label_column(y, centers.l());
  const auto scores = center_scores(centers, u);
  check_scores(scores);
  return std::exp(log_sum_exp(scores, y) - log_sum_exp(scores));
}

double coarse_loss(const ClassCenters& centers, std::span<const Embedding> batch_u,
                   std::span<const LabelColumn> batch_y) {
  if (batch_u.empty()) throw ValidationError("coarse loss needs a nonempty batch");
  if (batch_u.size() != batch_y.size()) throw ValidationError("batch embeddings and labels differ in size");
  double j1 = 0.0;
  for (std::size_t b = 0; b < batch_u.size(); ++b) {
    check_label_column(batch_y[b], centers.l());
    const auto scores = center_scores(centers, batch_u[b]);
    check_scores(scores);
    j1 += log_sum_exp(scores) - log_sum_exp(scores, batch_y[b]);
  }
  return j1;
}

double fined_loss(std::span<const BatchEmbedding> batch, const EmbeddingStore& store,
                  const LabelMatrix& labels) {
  if (store.n() != labels.n()) throw ValidationError("store and labels disagree on sample count");
  double j2 = 0.0;
  for (const auto& entry : batch) {
    if (entry.index >= store.n()) {
      throw ValidationError("batch index " + std::to_string(entry.index) + " out of range");
    }
    if (entry.u.size() != store.r()) throw ValidationError("batch embedding length does not match store");
    const auto yi = labels.column(entry.index);
    for (std::size_t j = 0; j < store.n(); ++j) {
      const double theta = 0.5 * dot(entry.u, store.column(j));
      const double s = pair_similarity(yi, labels.column(j));
      j2 += softplus(theta) - s * theta;
    }
  }
  return j2;
}

double total_objective(double j1, double j2, const LossConfig& cfg) { return cfg.n_total * j1 + cfg.lambda * j2; }

ObjectiveTerms batch_objective(const ClassCenters& centers, const EmbeddingStore& store,
                               const LabelMatrix& labels, std::span<const std::size_t> batch,
                               const LossConfig& cfg, unsigned threads) {
  cfg.validate();
  check_batch(store, labels, batch);
  const bool coarse = cfg.n_total != 0.0;
  const SimilarityTable similar(labels);
  std::vector<double> j1(batch.size(), 0.0);
  std::vector<double> j2(batch.size(), 0.0);
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    const std::size_t i = batch[b];
    const auto ui = store.column(i);
    const auto yi = labels.column(i);
    if (coarse) {
      const auto scores = center_scores(centers, ui);
      check_scores(scores);
      j1[b] = log_sum_exp(scores) - log_sum_exp(scores, yi);
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < store.n(); ++j) {
      const double theta = 0.5 * dot(ui, store.column(j));
      acc += softplus(theta) - similar(i, j) * theta;
    }
    j2[b] = acc;
  });
  ObjectiveTerms terms;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    terms.j1 += j1[b];
    terms.j2 += j2[b];
  }
  return terms;
}

std::vector<Embedding> grad_embedding(const ClassCenters& centers, const EmbeddingStore& store,
                                      const LabelMatrix& labels, std::span<const std::size_t> batch,
                                      const LossConfig& cfg, GradientWorkspace* workspace, unsigned threads) {
  cfg.validate();
  check_batch(store, labels, batch);
  const bool coarse = cfg.n_total != 0.0;
  if (coarse && (centers.l() != labels.l() || centers.r() != store.r())) {
    throw ValidationError("centers are inconsistent with labels or store");
  }
  const std::size_t r = store.r();
  const std::size_t n = store.n();
  const std::size_t m = batch.size();
  const std::size_t l = labels.l();

  GradientWorkspace local;
  GradientWorkspace& ws = workspace ? *workspace : local;
  ws.l = l;
  ws.m = m;
  ws.n = n;
  ws.p.assign(coarse ? m * l : 0, 0.0);
  ws.q.assign(coarse ? m * l : 0, 0.0);
  ws.a.assign(m * n, 0.0);

  std::vector<double> j1(m, 0.0);
  std::vector<double> j2(m, 0.0);
  std::vector<std::uint8_t> sim(m * n, 0);
  const SimilarityTable similar(labels);

  // Phase 1: per-sample probabilities, pairwise sigmoids and loss terms.
  parallel_for(m, threads, [&](std::size_t b) {
    const std::size_t i = batch[b];
    const auto ui = store.column(i);
    const auto yi = labels.column(i);
    if (coarse) {
      j1[b] = coarse_parts(centers, ui, yi, {ws.p.data() + b * l, l}, {ws.q.data() + b * l, l});
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double theta = 0.5 * dot(ui, store.column(j));
      const int s = similar(i, j);
      sim[b * n + j] = static_cast<std::uint8_t>(s);
      // softplus and sigmoid share exp(-|theta|).
      const double e = std::exp(-std::abs(theta));
      ws.a[b * n + j] = theta >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      acc += std::max(theta, 0.0) + std::log1p(e) - s * theta;
    }
    j2[b] = acc;
  });

  // Phase 2: gradients. The second pairwise sum runs over batch members only:
  // those are the rows of J2 in which u_i appears as the partner u_j.
  std::vector<Embedding> grads(m, Embedding(r, 0.0));
  parallel_for(m, threads, [&](std::size_t b) {
    auto& g = grads[b];
    const std::size_t i = batch[b];
    if (coarse) {
      for (std::size_t k = 0; k < l; ++k) {
        const double w = 0.5 * cfg.n_total * (ws.p[b * l + k] - ws.q[b * l + k]);
        const auto c = centers.column(k);
        for (std::size_t t = 0; t < r; ++t) g[t] += w * c[t];
      }
    }
    if (cfg.lambda != 0.0) {
      const double half_lambda = 0.5 * cfg.lambda;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = half_lambda * (ws.a[b * n + j] - sim[b * n + j]);
        const auto uj = store.column(j);
        for (std::size_t t = 0; t < r; ++t) g[t] += w * uj[t];
      }
      for (std::size_t bp = 0; bp < m; ++bp) {
        const double w = half_lambda * (ws.a[bp * n + i] - sim[bp * n + i]);
        const auto up = store.column(batch[bp]);
        for (std::size_t t = 0; t < r; ++t) g[t] += w * up[t];
      }
    }
  });

  ws.terms = {};
  for (std::size_t b = 0; b < m; ++b) {
    ws.terms.j1 += j1[b];
    ws.terms.j2 += j2[b];
  }
  return grads;
}

HashHeadParams grad_params(const HashHeadParams& params, std::span<const std::span<const double>> batch_x,
                           std::span<const Embedding> batch_gu, unsigned threads) {
  params.validate();
  if (batch_x.size() != batch_gu.size()) throw ValidationError("batch inputs and gradients differ in size");
  const std::size_t m = batch_x.size();
  const std::size_t depth = params.layers.size();
  for (std::size_t s = 0; s < m; ++s) {
    if (batch_gu[s].size() != params.code_length()) {
      throw ValidationError("embedding gradient length does not match code length");
    }
  }

  // Per sample: the activations feeding each layer and dJ/dz at each layer.
  std::vector<std::vector<std::vector<double>>> inputs(m);
  std::vector<std::vector<std::vector<double>>> deltas(m);
  parallel_for(m, threads, [&](std::size_t s) {
    auto trace = forward_trace(params, batch_x[s]);
    auto& delta = deltas[s];
    delta.resize(depth);
    std::vector<double> d(params.code_length());
    const auto& u = trace.activations.back();
    for (std::size_t t = 0; t < d.size(); ++t) d[t] = batch_gu[s][t] * (1.0 - u[t] * u[t]);
    for (std::size_t li = depth; li-- > 0;) {
      delta[li] = d;
      if (li == 0) break;
      const auto& layer = params.layers[li];
      const auto& h = trace.activations[li];
      std::vector<double> below(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const auto w = layer.row(o);
        for (std::size_t j = 0; j < layer.in; ++j) below[j] += w[j] * d[o];
      }
      for (std::size_t j = 0; j < layer.in; ++j) below[j] *= 1.0 - h[j] * h[j];
      d = std::move(below);
    }
    trace.activations.pop_back();
    inputs[s] = std::move(trace.activations);
  });

  // Reduce over samples in batch order, one output row per task.
  HashHeadParams grad = params.zeros_like();
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (std::size_t li = 0; li < depth; ++li) {
    for (std::size_t o = 0; o < params.layers[li].out; ++o) rows.emplace_back(li, o);
  }
  parallel_for(rows.size(), threads, [&](std::size_t task) {
    const auto [li, o] = rows[task];
    auto& layer = grad.layers[li];
    double* w = layer.weights.data() + o * layer.in;
    double bias = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
      const double d = deltas[s][li][o];
      const auto& h = inputs[s][li];
      for (std::size_t j = 0; j < layer.in; ++j) w[j] += d * h[j];
      bias += d;
    }
    layer.bias[o] = bias;
  });
  return grad;
}

}  // namespace hndh
