#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hndh/data.hpp"
#include "hndh/model.hpp"

namespace hndh {

// r x L matrix of sub-class centroids; column k is c_k.
class ClassCenters {
 public:
  ClassCenters() = default;
  ClassCenters(std::size_t r, std::size_t l, std::vector<double> values);

  std::size_t r() const noexcept { return r_; }
  std::size_t l() const noexcept { return l_; }
  bool empty() const noexcept { return l_ == 0; }
  std::span<const double> column(std::size_t k) const { return {values_.data() + k * r_, r_}; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t r_ = 0;
  std::size_t l_ = 0;
  std::vector<double> values_;
};

// r x N matrix of current embeddings of every training sample, plus the epoch
// at which each column was last written.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t r, std::size_t n);

  std::size_t r() const noexcept { return r_; }
  std::size_t n() const noexcept { return n_; }
  std::span<const double> column(std::size_t i) const { return {values_.data() + i * r_, r_}; }
  std::uint32_t epoch_stamp(std::size_t i) const { return stamps_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }

  // Throws unless u has length r and every component lies in (-1, 1).
  void set_column(std::size_t i, std::span<const double> u, std::uint32_t epoch);

 private:
  std::size_t r_ = 0;
  std::size_t n_ = 0;
  std::vector<double> values_;
  std::vector<std::uint32_t> stamps_;
};

struct LossConfig {
  double lambda = 1.0;
  // Multiplier on J1; the training-set size N. Zero disables the coarse term.
  double n_total = 1.0;

  void validate() const;
};

struct ObjectiveTerms {
  double j1 = 0.0;
  double j2 = 0.0;
};

// Intermediate values of one gradient evaluation. p and q hold one
// probability vector of length l per batch sample; a holds sigma(Theta_ij)
// for every batch sample i against all n store columns.
struct GradientWorkspace {
  std::size_t l = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> p;
  std::vector<double> q;
  std::vector<double> a;
  ObjectiveTerms terms;

  std::span<const double> p_column(std::size_t b) const { return {p.data() + b * l, l}; }
  std::span<const double> q_column(std::size_t b) const { return {q.data() + b * l, l}; }
  std::span<const double> a_row(std::size_t b) const { return {a.data() + b * n, n}; }
};

struct BatchEmbedding {
  std::size_t index = 0;
  Embedding u;
};

ClassCenters compute_centers(const EmbeddingStore& store, const LabelMatrix& labels, unsigned threads = 1);

// Edge weights 1/2 c_k^T u for every class.
std::vector<double> center_scores(const ClassCenters& centers, std::span<const double> u);

// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> scores);

std::vector<double> neighbor_probs(const ClassCenters& centers, std::span<const double> u);

// Probability mass on the classes active in y.
double correct_class_prob(const ClassCenters& centers, std::span<const double> u, LabelColumn y);

double coarse_loss(const ClassCenters& centers, std::span<const Embedding> batch_u,
                   std::span<const LabelColumn> batch_y);

// Pairwise likelihood loss of each batch embedding against every store column.
double fined_loss(std::span<const BatchEmbedding> batch, const EmbeddingStore& store,
                  const LabelMatrix& labels);

double total_objective(double j1, double j2, const LossConfig& cfg);

// J1 and J2 for a batch whose embeddings are the store columns at `batch`.
// Centers are not read when cfg.n_total == 0.
ObjectiveTerms batch_objective(const ClassCenters& centers, const EmbeddingStore& store,
                               const LabelMatrix& labels, std::span<const std::size_t> batch,
                               const LossConfig& cfg, unsigned threads = 1);

// dJ/du_i for every batch member i, where J = n_total * J1 + lambda * J2 and
// the batch embeddings are the store columns at `batch` (so a sample's batch
// embedding and its store column are one variable). Centers are constants.
// Fills `workspace` (including the objective terms) when given.
std::vector<Embedding> grad_embedding(const ClassCenters& centers, const EmbeddingStore& store,
                                      const LabelMatrix& labels, std::span<const std::size_t> batch,
                                      const LossConfig& cfg, GradientWorkspace* workspace = nullptr,
                                      unsigned threads = 1);

// Backpropagates per-sample embedding gradients through the head. The result
// has the same shapes as params and sums over the batch in input order.
HashHeadParams grad_params(const HashHeadParams& params, std::span<const std::span<const double>> batch_x,
                           std::span<const Embedding> batch_gu, unsigned threads = 1);

double softplus(double x);
double sigmoid(double x);

}  // namespace hndh
