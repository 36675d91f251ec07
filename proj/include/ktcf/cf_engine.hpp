#pragma once

// Gradient-based counterfactual search over a student's response history.
//
// KTCF minimizes
//   -log f(X_cf) + lambda_spar * sum_t |r_orig - r_cf|
//                + lambda_kc   * sum_t |r_orig - r_cf| * d(kc_t, kc_target)
// with Adam, projecting after every step so that only originally-incorrect,
// non-target responses can move. The L1 terms equal the Hamming count and the
// per-occurrence graph-distance sum at binary points.

#include "ktcf/adam.hpp"
#include "ktcf/error.hpp"
#include "ktcf/kc_graph.hpp"
#include "ktcf/kt_model.hpp"
#include "ktcf/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

namespace ktcf {

enum class InitStrategy { GaussianNoise, RandomBinary, SoftRelaxation, ConvexCombination, GumbelSigmoid };

inline std::string_view to_string(InitStrategy s) {
  switch (s) {
  case InitStrategy::GaussianNoise: return "rn";
  case InitStrategy::RandomBinary: return "rand";
  case InitStrategy::SoftRelaxation: return "sr";
  case InitStrategy::ConvexCombination: return "cc";
  case InitStrategy::GumbelSigmoid: return "gs";
  }
  return "?";
}

inline InitStrategy parse_init_strategy(std::string_view name) {
  for (auto s : {InitStrategy::GaussianNoise, InitStrategy::RandomBinary,
                 InitStrategy::SoftRelaxation, InitStrategy::ConvexCombination,
                 InitStrategy::GumbelSigmoid}) {
    if (to_string(s) == name) {
      return s;
    }
  }
  throw ConfigError("unknown initialization strategy '" + std::string(name) +
                    "' (expected rn, rand, sr, cc or gs)");
}

struct CfConfig {
  double lambda_spar = 0.1;
  double lambda_kc = 1e-3;
  std::size_t n_iter = 200;
  double eta = 0.1;
  double tau = 1e-4;
  InitStrategy init = InitStrategy::GaussianNoise;
  double lambda_noise = 0.1;
  double lambda_cc = 0.5;
  double lambda_temp = 1.0;
  double diversity_weight = 0.1; // pairwise-distance bonus for the diverse baseline
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda_spar >= 0.0) || !(lambda_kc >= 0.0)) {
      throw ConfigError("lambda_spar and lambda_kc must be >= 0");
    }
    if (n_iter == 0) {
      throw ConfigError("n_iter must be positive");
    }
    if (!(eta > 0.0) || !(tau > 0.0)) {
      throw ConfigError("eta and tau must be > 0");
    }
    if (!(lambda_noise >= 0.0)) {
      throw ConfigError("lambda_noise must be >= 0");
    }
    if (!(lambda_cc >= 0.0 && lambda_cc <= 1.0)) {
      throw ConfigError("lambda_cc must lie in [0, 1]");
    }
    if (!(lambda_temp > 0.0)) {
      throw ConfigError("lambda_temp must be > 0");
    }
    if (!(diversity_weight >= 0.0)) {
      throw ConfigError("diversity_weight must be >= 0");
    }
  }
};

struct LossTerms {
  double total = 0.0;
  double pred = 0.0;
  double spar = 0.0;
  double kc = 0.0;
};

struct CfResult {
  std::vector<int> r_cf_binary;
  RelaxedResponses r_cf_relaxed;
  bool valid = false;
  double target_probability = 0.0; // f on the binarized counterfactual
  std::size_t iterations_used = 0;
  std::vector<LossTerms> loss_trace;
  std::vector<std::size_t> changed_indices;
  double wall_time_seconds = 0.0;
};

inline constexpr double kPredClamp = 1e-7;

// -log f with f clamped to [1e-7, 1 - 1e-7]; zero derivative outside.
inline ScalarLoss prediction_loss(double p) {
  const double pc = std::clamp(p, kPredClamp, 1.0 - kPredClamp);
  ScalarLoss l;
  l.value = -std::log(pc);
  l.derivative = (p == pc) ? -1.0 / p : 0.0;
  return l;
}

inline RelaxedResponses initialize(InitStrategy strategy, std::span<const int> r_orig,
                                   const CfConfig &cfg, Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  RelaxedResponses r(r_orig.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    const double orig = static_cast<double>(r_orig[t]);
    switch (strategy) {
    case InitStrategy::GaussianNoise:
      r[t] = std::clamp(orig + cfg.lambda_noise * normal(rng), 0.0, 1.0);
      break;
    case InitStrategy::RandomBinary:
      r[t] = coin(rng) ? 1.0 : 0.0;
      break;
    case InitStrategy::SoftRelaxation:
      r[t] = sigmoid(normal(rng));
      break;
    case InitStrategy::ConvexCombination:
      r[t] = cfg.lambda_cc * orig + (1.0 - cfg.lambda_cc) * (coin(rng) ? 1.0 : 0.0);
      break;
    case InitStrategy::GumbelSigmoid: {
      const double z = normal(rng);
      const double g1 = sample_gumbel(rng);
      const double g2 = sample_gumbel(rng);
      r[t] = sigmoid((z + g1 - g2) / cfg.lambda_temp);
      break;
    }
    }
  }
  return r;
}

// 1 where the original response is incorrect, except at the target step.
inline std::vector<int> actionability_mask(std::span<const int> r_orig) {
  std::vector<int> m(r_orig.size(), 0);
  for (std::size_t t = 0; t < r_orig.size(); ++t) {
    m[t] = r_orig[t] == 0 ? 1 : 0;
  }
  if (!m.empty()) {
    m.back() = 0;
  }
  return m;
}

inline RelaxedResponses project(std::span<const double> r_raw, std::span<const int> r_orig,
                                std::span<const int> mask) {
  if (r_raw.size() != r_orig.size() || mask.size() != r_orig.size()) {
    throw InputError("project: shape mismatch");
  }
  RelaxedResponses r(r_raw.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    r[t] = mask[t] ? std::clamp(r_raw[t], 0.0, 1.0) : static_cast<double>(r_orig[t]);
  }
  return r;
}

// Graph distance from each step's KC to the target KC.
inline std::vector<double> distances_to_target(const KcGraph &g, std::span<const Kc> kcs,
                                               Kc target_kc) {
  const auto from_target = g.distances_from(target_kc);
  std::vector<double> d(kcs.size());
  for (std::size_t t = 0; t < kcs.size(); ++t) {
    if (kcs[t] >= g.num_nodes()) {
      throw InputError("kc " + std::to_string(kcs[t]) + " is not a node of the KC graph");
    }
    d[t] = from_target[kcs[t]];
  }
  return d;
}

namespace detail {

inline double sign_of_diff(double cf, double orig) {
  return cf > orig ? 1.0 : (cf < orig ? -1.0 : 0.0);
}

struct LossGradient {
  LossTerms terms;
  double prediction = 0.0;
  std::vector<double> grad;
};

// `kc_dist` may be empty, which disables the KC term.
inline LossGradient loss_and_gradient(const KtModel &m, std::span<const Kc> kcs,
                                      std::span<const double> r_cf,
                                      std::span<const int> r_orig,
                                      std::span<const double> kc_dist, double lambda_spar,
                                      double lambda_kc) {
  auto rg = grad_responses(m, kcs, r_cf, prediction_loss);
  LossGradient out;
  out.prediction = rg.prediction;
  out.terms.pred = rg.loss;
  out.grad = std::move(rg.grad);
  for (std::size_t t = 0; t < r_cf.size(); ++t) {
    const double orig = static_cast<double>(r_orig[t]);
    const double diff = std::abs(orig - r_cf[t]);
    const double s = sign_of_diff(r_cf[t], orig);
    out.terms.spar += diff;
    out.grad[t] += lambda_spar * s;
    if (!kc_dist.empty()) {
      out.terms.kc += diff * kc_dist[t];
      out.grad[t] += lambda_kc * kc_dist[t] * s;
    }
  }
  out.terms.total = out.terms.pred + lambda_spar * out.terms.spar + lambda_kc * out.terms.kc;
  return out;
}

struct SearchProblem {
  std::vector<int> mask;      // positions free to move
  std::vector<double> kc_dist; // empty: no KC term
  double lambda_kc = 0.0;
  std::size_t candidates = 1;
};

inline void check_explainable(const KtModel &m, const LearningHistory &h) {
  validate_history(h, m.num_kcs());
  const auto mask = actionability_mask(h.responses);
  if (std::none_of(mask.begin(), mask.end(), [](int v) { return v == 1; })) {
    throw NoActionableChangeError(
        "history has no incorrect response before the target; nothing can be changed");
  }
  if (h.responses.back() != 0) {
    throw InputError("target response must be incorrect (r_orig[T-1] = 0)");
  }
  if (predict_target(m, h) > 0.5) {
    throw InputError("model already predicts the target as correct (f > 0.5)");
  }
}

// Jointly optimizes `problem.candidates` counterfactuals. With one candidate
// the diversity term vanishes.
inline std::vector<CfResult> search(const KtModel &m, const LearningHistory &h,
                                    const SearchProblem &problem, const CfConfig &cfg) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t T = h.size();
  const std::size_t k = problem.candidates;
  const std::span<const int> r_orig(h.responses);

  Rng rng(cfg.seed);
  std::vector<RelaxedResponses> r(k);
  for (auto &rc : r) {
    rc = initialize(cfg.init, r_orig, cfg, rng);
  }

  std::vector<double> flat(k * T), flat_grad(k * T);
  Adam adam(k * T, AdamOptions{cfg.eta});
  std::vector<CfResult> results(k);
  const double pair_scale = k > 1 ? 2.0 / static_cast<double>(k * (k - 1)) : 0.0;

  for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
    double joint = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      auto lg = loss_and_gradient(m, h.kcs, r[c], r_orig, problem.kc_dist, cfg.lambda_spar,
                                  problem.lambda_kc);
      results[c].loss_trace.push_back(lg.terms);
      joint += lg.terms.total;
      std::copy(lg.grad.begin(), lg.grad.end(), flat_grad.begin() + static_cast<std::ptrdiff_t>(c * T));
      std::copy(r[c].begin(), r[c].end(), flat.begin() + static_cast<std::ptrdiff_t>(c * T));
    }
    if (k > 1) {
      // -w * mean over ordered pairs i != j of sum_t |r_i[t] - r_j[t]|
      double diversity = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          for (std::size_t t = 0; t < T; ++t) {
            const double d = r[a][t] - r[b][t];
            diversity += std::abs(d);
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            flat_grad[a * T + t] -= cfg.diversity_weight * pair_scale * s;
            flat_grad[b * T + t] += cfg.diversity_weight * pair_scale * s;
          }
        }
      }
      joint -= cfg.diversity_weight * pair_scale * diversity;
    }
    adam.step(flat, flat_grad);
    for (std::size_t c = 0; c < k; ++c) {
      std::span<const double> raw(flat.data() + c * T, T);
      r[c] = project(raw, r_orig, problem.mask);
      results[c].iterations_used = it;
    }
    if (joint < cfg.tau) {
      break;
    }
  }

  for (std::size_t c = 0; c < k; ++c) {
    auto &res = results[c];
    res.r_cf_relaxed = r[c];
    res.r_cf_binary.assign(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
      const int b = r[c][t] >= 0.5 ? 1 : 0;
      res.r_cf_binary[t] = problem.mask[t] ? b : r_orig[t];
      if (res.r_cf_binary[t] != r_orig[t]) {
        res.changed_indices.push_back(t);
      }
    }
    const RelaxedResponses bin(res.r_cf_binary.begin(), res.r_cf_binary.end());
    res.target_probability = predict_target(m, h.kcs, bin);
    res.valid = res.target_probability > 0.5;
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (auto &res : results) {
    res.wall_time_seconds = elapsed;
  }
  return results;
}

} // namespace detail

// Loss decomposition at `r_cf` (not differentiated).
inline LossTerms ktcf_loss(const KtModel &m, std::span<const Kc> kcs,
                           std::span<const double> r_cf, std::span<const int> r_orig,
                           const KcGraph &g, Kc target_kc, const CfConfig &cfg) {
  if (r_cf.size() != kcs.size() || r_orig.size() != kcs.size()) {
    throw InputError("ktcf_loss: shape mismatch");
  }
  const auto dist = distances_to_target(g, kcs, target_kc);
  const double p = predict_target(m, kcs, r_cf);
  LossTerms l;
  l.pred = prediction_loss(p).value;
  for (std::size_t t = 0; t < r_cf.size(); ++t) {
    const double diff = std::abs(static_cast<double>(r_orig[t]) - r_cf[t]);
    l.spar += diff;
    l.kc += diff * dist[t];
  }
  l.total = l.pred + cfg.lambda_spar * l.spar + cfg.lambda_kc * l.kc;
  return l;
}

// KTCF: masked, KC-aware counterfactual for the last step of `h`.
inline CfResult generate(const KtModel &m, const LearningHistory &h, const KcGraph &g,
                         const CfConfig &cfg) {
  cfg.validate();
  detail::check_explainable(m, h);
  detail::SearchProblem problem;
  problem.mask = actionability_mask(h.responses);
  problem.kc_dist = distances_to_target(g, h.kcs, h.target_kc());
  problem.lambda_kc = cfg.lambda_kc;
  return std::move(detail::search(m, h, problem, cfg).front());
}

// Wachter-style baseline: prediction loss plus L1 distance, no mask and no KC
// term. Any response, including correct ones, may change.
inline CfResult baseline_wachter(const KtModel &m, const LearningHistory &h,
                                 const CfConfig &cfg) {
  cfg.validate();
  detail::check_explainable(m, h);
  detail::SearchProblem problem;
  problem.mask.assign(h.size(), 1);
  return std::move(detail::search(m, h, problem, cfg).front());
}

// Diversity-augmented baseline: `k` Wachter candidates optimized jointly with
// a pairwise-distance bonus. Returned in increasing order of each candidate's
// loss on its binarized counterfactual.
inline std::vector<CfResult> baseline_dice_like(const KtModel &m, const LearningHistory &h,
                                                const CfConfig &cfg, std::size_t k) {
  if (k < 1) {
    throw ConfigError("baseline_dice_like: k must be >= 1");
  }
  cfg.validate();
  detail::check_explainable(m, h);
  detail::SearchProblem problem;
  problem.mask.assign(h.size(), 1);
  problem.candidates = k;
  auto results = detail::search(m, h, problem, cfg);
  std::vector<double> key(k);
  for (std::size_t c = 0; c < k; ++c) {
    double spar = 0.0;
    for (std::size_t t = 0; t < h.size(); ++t) {
      spar += results[c].r_cf_binary[t] != h.responses[t] ? 1.0 : 0.0;
    }
    key[c] = prediction_loss(results[c].target_probability).value + cfg.lambda_spar * spar;
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  std::vector<CfResult> sorted;
  sorted.reserve(k);
  for (auto c : order) {
    sorted.push_back(std::move(results[c]));
  }
  return sorted;
}

} // namespace ktcf
