#include "hndh/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hndh/error.hpp"
#include "hndh/parallel.hpp"

namespace hndh {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(lr_end > 0.0) || !std::isfinite(lr_end)) throw ValidationError("lr_end must be > 0");
  if (!(lr_start >= lr_end) || !std::isfinite(lr_start)) throw ValidationError("lr_start must be >= lr_end");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!coarse_term && lambda == 0.0) throw ValidationError("J1 disabled and lambda = 0 leaves no objective");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  head.validate();
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) {
    throw ValidationError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  if (epoch == 0 || cfg.epochs == 1) return cfg.lr_start;
  if (epoch == cfg.epochs - 1) return cfg.lr_end;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, t);
}

EmbeddingStore refresh_store(const HashHeadParams& params, const FeatureMatrix& features, std::uint32_t epoch,
                             unsigned threads) {
  if (params.input_dim() != features.d()) {
    throw ValidationError("head expects " + std::to_string(params.input_dim()) + " features, data has " +
                          std::to_string(features.d()));
  }
  EmbeddingStore store(params.code_length(), features.n());
  parallel_for(features.n(), threads,
               [&](std::size_t i) { store.set_column(i, forward(params, features.row(i)), epoch); });
  return store;
}

namespace {

void sgd_step(HashHeadParams& params, const HashHeadParams& grad, double step) {
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& layer = params.layers[li];
    const auto& g = grad.layers[li];
    for (std::size_t k = 0; k < layer.weights.size(); ++k) layer.weights[k] -= step * g.weights[k];
    for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] -= step * g.bias[k];
  }
}

void write_batch_columns(EmbeddingStore& store, const HashHeadParams& params, const FeatureMatrix& features,
                         std::span<const std::size_t> batch, std::uint32_t epoch, unsigned threads) {
  std::vector<Embedding> fresh(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t b) { fresh[b] = forward(params, features.row(batch[b])); });
  for (std::size_t b = 0; b < batch.size(); ++b) store.set_column(batch[b], fresh[b], epoch);
}

}  // namespace

TrainResult train(const Dataset& train_set, const TrainConfig& cfg, const TrainCallbacks& callbacks) {
  TrainConfig resolved = cfg;
  if (resolved.head.input_dim == 0) resolved.head.input_dim = train_set.features().d();
  resolved.validate();
  return train_from(train_set, resolved, init_params(resolved.head), callbacks);
}

EpochOutcome run_epoch(const Dataset& train_set, const TrainConfig& cfg, HashHeadParams& params,
                       std::size_t epoch, double lr, std::mt19937_64& shuffle_rng) {
  const auto& features = train_set.features();
  const auto& labels = train_set.labels();
  const std::size_t n = train_set.size();
  if (params.input_dim() != features.d()) throw ValidationError("head input_dim does not match the features");

  const LossConfig loss_cfg{cfg.lambda, cfg.coarse_term ? static_cast<double>(n) : 0.0};
  const auto start = std::chrono::steady_clock::now();
  const auto stamp = static_cast<std::uint32_t>(epoch);

  EpochOutcome out;
  out.store = refresh_store(params, features, stamp, cfg.threads);
  EmbeddingStore& store = out.store;
  ClassCenters centers;
  if (cfg.coarse_term) centers = compute_centers(store, labels, cfg.threads);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  EpochRecord& record = out.record;
  record.epoch = epoch;
  record.lr = lr;

  for (std::size_t first = 0, batch_no = 0; first < n; first += cfg.batch_size, ++batch_no) {
    const std::span<const std::size_t> batch(order.data() + first, std::min(cfg.batch_size, n - first));
    try {
      write_batch_columns(store, params, features, batch, stamp, cfg.threads);
      if (cfg.coarse_term && cfg.center_refresh == CenterRefresh::per_batch && batch_no > 0) {
        centers = compute_centers(store, labels, cfg.threads);
      }

      GradientWorkspace ws;
      const auto gu = grad_embedding(centers, store, labels, batch, loss_cfg, &ws, cfg.threads);
      if (!std::isfinite(ws.terms.j1) || !std::isfinite(ws.terms.j2)) {
        throw NonFiniteError("non-finite loss (J1=" + std::to_string(ws.terms.j1) +
                             ", J2=" + std::to_string(ws.terms.j2) + ")");
      }
      record.j1 += ws.terms.j1;
      record.j2 += ws.terms.j2;

      std::vector<std::span<const double>> xs;
      xs.reserve(batch.size());
      for (auto i : batch) xs.push_back(features.row(i));
      const auto grad = grad_params(params, xs, gu, cfg.threads);
      const double step = cfg.grad_scale == GradScale::mean
                              ? lr / (static_cast<double>(n) * static_cast<double>(batch.size()))
                              : lr;
      sgd_step(params, grad, step);
      params.validate();

      write_batch_columns(store, params, features, batch, stamp, cfg.threads);
    } catch (const Error& e) {
      throw TrainingError(epoch, batch_no, e.what());
    }
    if (first + cfg.batch_size >= n) out.last_batch.assign(batch.begin(), batch.end());
  }

  record.j = total_objective(record.j1, record.j2, loss_cfg);
  record.j_norm = record.j / static_cast<double>(n);
  record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TrainResult train_from(const Dataset& train_set, const TrainConfig& cfg, HashHeadParams params,
                       const TrainCallbacks& callbacks) {
  params.validate();
  TrainConfig shape_checked = cfg;
  shape_checked.head.input_dim = params.input_dim();
  shape_checked.head.code_length = params.code_length();
  shape_checked.validate();
  const auto& labels = train_set.labels();
  for (std::size_t k = 0; k < labels.l(); ++k) {
    bool any = false;
    for (std::size_t i = 0; i < labels.n() && !any; ++i) any = labels.has(k, i);
    if (!any) throw EmptyClassError(k);
  }

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto outcome = run_epoch(train_set, cfg, params, epoch, lr_at(epoch, cfg), rng);
    auto& record = outcome.record;
    if (callbacks.evaluate && callbacks.eval_every > 0 &&
        ((epoch + 1) % callbacks.eval_every == 0 || epoch + 1 == cfg.epochs)) {
      record.eval_map = callbacks.evaluate(params);
    }
    if (callbacks.on_epoch) callbacks.on_epoch(record, params);
    result.history.epochs.push_back(record);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace hndh
