#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "hndh/data.hpp"
#include "hndh/loss.hpp"
#include "hndh/model.hpp"

namespace hndh {

enum class CenterRefresh { per_epoch, per_batch };

// How the objective gradient is scaled before the SGD step. `mean` divides by
// N * batch size (per-pair average); `sum` steps on the raw gradient of J.
enum class GradScale { mean, sum };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  double lambda = 1.0;
  // false drops the N * J1 term entirely (J2-only training, no centers).
  bool coarse_term = true;
  HashHeadConfig head;
  std::uint64_t seed = 0;
  CenterRefresh center_refresh = CenterRefresh::per_epoch;
  GradScale grad_scale = GradScale::mean;
  unsigned threads = 1;

  std::size_t code_length() const noexcept { return head.code_length; }
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double j = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;
  double j_norm = 0.0;  // j / N
  double lr = 0.0;
  double seconds = 0.0;
  std::optional<double> eval_map;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  HashHeadParams params;
  TrainHistory history;
};

struct TrainCallbacks {
  // Called after every epoch with the record and the parameters at epoch end.
  std::function<void(const EpochRecord&, const HashHeadParams&)> on_epoch;
  // Optional periodic evaluation, stored in EpochRecord::eval_map.
  std::function<double(const HashHeadParams&)> evaluate;
  std::size_t eval_every = 0;
};

// Geometric interpolation from lr_start at epoch 0 to lr_end at the last epoch.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

EmbeddingStore refresh_store(const HashHeadParams& params, const FeatureMatrix& features,
                             std::uint32_t epoch = 0, unsigned threads = 1);

// Alternating optimization: per epoch, refresh the store and recompute class
// centers with the head fixed, then run shuffled mini-batch SGD on the head
// with the centers fixed.
TrainResult train(const Dataset& train_set, const TrainConfig& cfg, const TrainCallbacks& callbacks = {});

// Same loop starting from given parameters.
TrainResult train_from(const Dataset& train_set, const TrainConfig& cfg, HashHeadParams params,
                       const TrainCallbacks& callbacks = {});

struct EpochOutcome {
  EpochRecord record;
  EmbeddingStore store;                 // store as left at the end of the epoch
  std::vector<std::size_t> last_batch;  // members of the final mini-batch
};

// One epoch of the loop at an explicit learning rate, updating params in
// place. `shuffle_rng` supplies the mini-batch order.
EpochOutcome run_epoch(const Dataset& train_set, const TrainConfig& cfg, HashHeadParams& params,
                       std::size_t epoch, double lr, std::mt19937_64& shuffle_rng);

}  // namespace hndh
