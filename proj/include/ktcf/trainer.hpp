#pragma once

#include "ktcf/adam.hpp"
#include "ktcf/error.hpp"
#include "ktcf/kt_model.hpp"
#include "ktcf/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace ktcf {

struct TrainConfig {
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 3; // epochs without held-out improvement
  double heldout_fraction = 0.2;
};

struct TrainReport {
  std::size_t n_train = 0;
  std::size_t n_heldout = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double train_loss = 0.0;
  double heldout_loss = 0.0;
  double heldout_accuracy = 0.0;
  double heldout_auc = 0.0;
  double marginal_baseline_auc = 0.0;
  std::vector<double> heldout_loss_trace;
};

struct TrainResult {
  KtModel model;
  TrainReport report;
};

// Area under the ROC curve via the rank-sum statistic (ties get average
// ranks). Returns 0.5 when only one class is present.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InputError("roc_auc: size mismatch");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1); // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    return 0.5;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace detail {

inline double bce_from_logit(double z, int y) {
  // log(1 + e^z) - y z, computed stably
  const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - static_cast<double>(y) * z;
}

} // namespace detail

// Adds scale * d(sum of next-step BCE)/d(weights) into `grad` and returns the
// unscaled summed BCE over steps 1..T-1.
inline double accumulate_sequence_gradient(const KtModel &m, const LearningHistory &h,
                                           KtModel &grad, double scale) {
  const std::size_t T = h.size();
  const std::size_t H = m.hidden();
  const std::size_t K = m.num_kcs();
  const std::size_t twoK = 2 * K;
  const auto r = h.relaxed();
  detail::LstmTape tape;
  detail::run_lstm_relaxed(m, h.kcs, r, T - 1, tape);

  double loss = 0.0;
  std::vector<double> dlogit(T, 0.0);
  for (std::size_t t = 1; t < T; ++t) {
    const Kc kc = h.kcs[t];
    const double z = detail::output_logit(m, tape.h_at(t - 1), kc);
    loss += detail::bce_from_logit(z, h.responses[t]);
    dlogit[t] = scale * (sigmoid(z) - static_cast<double>(h.responses[t]));
    const auto hp = tape.h_at(t - 1);
    double *gw = grad.w_out.data.data() + kc * H;
    for (std::size_t k = 0; k < H; ++k) {
      gw[k] += dlogit[t] * hp[k];
    }
    grad.b_out[kc] += dlogit[t];
  }

  detail::backprop_lstm(
      m, tape,
      [&](std::size_t step, std::span<double> dh) {
        const double d = dlogit[step + 1];
        const double *w = m.w_out.data.data() + h.kcs[step + 1] * H;
        for (std::size_t k = 0; k < H; ++k) {
          dh[k] += d * w[k];
        }
      },
      [&](std::size_t step, std::span<const double> da) {
        const std::size_t lo = h.kcs[step];
        const std::size_t hi = lo + K;
        const double r_t = r[step];
        const double *h_prev = step > 0 ? tape.hid.data() + (step - 1) * H : nullptr;
        for (std::size_t j = 0; j < da.size(); ++j) {
          const double d = da[j];
          grad.b[j] += d;
          grad.w_ih.data[j * twoK + lo] += d * (1.0 - r_t);
          grad.w_ih.data[j * twoK + hi] += d * r_t;
          if (h_prev) {
            double *gw = grad.w_hh.data.data() + j * H;
            for (std::size_t k = 0; k < H; ++k) {
              gw[k] += d * h_prev[k];
            }
          }
        }
      });
  return loss;
}

struct SequenceEvaluation {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  double auc = 0.5;
  std::size_t n_predictions = 0;
};

inline SequenceEvaluation evaluate_model(const KtModel &m,
                                         std::span<const LearningHistory> data) {
  std::vector<double> scores;
  std::vector<int> labels;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto &h : data) {
    const auto p = forward(m, h.kcs, h.relaxed());
    for (std::size_t t = 1; t < h.size(); ++t) {
      const double pt = std::clamp(p[t - 1], 1e-12, 1.0 - 1e-12);
      const int y = h.responses[t];
      loss -= y ? std::log(pt) : std::log(1.0 - pt);
      correct += static_cast<std::size_t>((pt > 0.5) == (y == 1));
      scores.push_back(pt);
      labels.push_back(y);
    }
  }
  SequenceEvaluation ev;
  ev.n_predictions = scores.size();
  if (!scores.empty()) {
    const double n = static_cast<double>(scores.size());
    ev.mean_loss = loss / n;
    ev.accuracy = static_cast<double>(correct) / n;
    ev.auc = roc_auc(scores, labels);
  }
  return ev;
}

// Reference predictor: per-KC marginal correctness rate estimated on `train`
// (Laplace-smoothed), scored on next-step predictions of `test`.
inline double marginal_frequency_auc(std::span<const LearningHistory> train,
                                     std::span<const LearningHistory> test,
                                     std::size_t num_kcs) {
  std::vector<double> hits(num_kcs, 0.0), tries(num_kcs, 0.0);
  for (const auto &h : train) {
    for (std::size_t t = 0; t < h.size(); ++t) {
      hits[h.kcs[t]] += h.responses[t];
      tries[h.kcs[t]] += 1.0;
    }
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto &h : test) {
    for (std::size_t t = 1; t < h.size(); ++t) {
      const Kc kc = h.kcs[t];
      scores.push_back((hits[kc] + 1.0) / (tries[kc] + 2.0));
      labels.push_back(h.responses[t]);
    }
  }
  return roc_auc(scores, labels);
}

// Splits indices 0..n-1 into (train, heldout) with a seeded shuffle.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, double heldout_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0x5917));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_held = static_cast<std::size_t>(std::floor(heldout_fraction * static_cast<double>(n)));
  if (n_held >= n) {
    n_held = n - 1;
  }
  std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
  std::sort(held.begin(), held.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(held)};
}

// Fits a KtModel to next-step correctness with mini-batch Adam and
// early stopping on held-out loss. Deterministic given `seed`.
inline TrainResult train(std::span<const LearningHistory> dataset, std::size_t num_kcs,
                         const TrainConfig &cfg, std::uint64_t seed) {
  if (dataset.empty()) {
    throw InputError("train: empty dataset");
  }
  if (cfg.hidden == 0 || cfg.batch_size == 0 || cfg.max_epochs == 0 ||
      !(cfg.learning_rate > 0.0) || cfg.heldout_fraction < 0.0 ||
      cfg.heldout_fraction >= 1.0) {
    throw ConfigError("train: invalid training configuration");
  }
  for (const auto &h : dataset) {
    validate_history(h, num_kcs);
  }

  auto [train_idx, held_idx] = split_indices(dataset.size(), cfg.heldout_fraction, seed);
  std::vector<LearningHistory> train_set, held_set;
  for (auto i : train_idx) {
    train_set.push_back(dataset[i]);
  }
  for (auto i : held_idx) {
    held_set.push_back(dataset[i]);
  }
  const std::span<const LearningHistory> monitor =
      held_set.empty() ? std::span<const LearningHistory>(train_set)
                       : std::span<const LearningHistory>(held_set);

  Rng rng(derive_seed(seed, 0x1417));
  KtModel model = KtModel::random(num_kcs, cfg.hidden, rng,
                                  1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  KtModel grad(num_kcs, cfg.hidden);
  std::vector<Adam> optimizers;
  for (const auto &blk : model.blocks()) {
    optimizers.emplace_back(blk.values.size(), AdamOptions{cfg.learning_rate});
  }

  TrainResult result{model, {}};
  TrainReport &rep = result.report;
  rep.n_train = train_set.size();
  rep.n_heldout = held_set.size();
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::size_t n_steps = 0;
      for (std::size_t i = start; i < stop; ++i) {
        n_steps += train_set[order[i]].size() - 1;
      }
      for (auto &blk : grad.blocks()) {
        std::fill(blk.values.begin(), blk.values.end(), 0.0);
      }
      const double scale = 1.0 / static_cast<double>(n_steps);
      for (std::size_t i = start; i < stop; ++i) {
        epoch_loss += accumulate_sequence_gradient(model, train_set[order[i]], grad, scale);
      }
      epoch_steps += n_steps;
      auto pblocks = model.blocks();
      const auto gblocks = std::as_const(grad).blocks();
      for (std::size_t b = 0; b < pblocks.size(); ++b) {
        optimizers[b].step(pblocks[b].values, gblocks[b].values);
      }
    }
    rep.epochs_run = epoch;
    const auto ev = evaluate_model(model, monitor);
    rep.heldout_loss_trace.push_back(ev.mean_loss);
    if (ev.mean_loss < best) {
      best = ev.mean_loss;
      since_best = 0;
      result.model = model;
      rep.best_epoch = epoch;
      rep.train_loss = epoch_loss / static_cast<double>(epoch_steps);
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  const auto ev = evaluate_model(result.model, monitor);
  rep.heldout_loss = ev.mean_loss;
  rep.heldout_accuracy = ev.accuracy;
  rep.heldout_auc = ev.auc;
  rep.marginal_baseline_auc = marginal_frequency_auc(train_set, monitor, num_kcs);
  return result;
}

} // namespace ktcf
