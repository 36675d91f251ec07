#include "support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace ktcf;
using ktcf::testing::accumulator_model;
using ktcf::testing::close_rel_abs;
using ktcf::testing::finite_difference;
using ktcf::testing::make_toy_instances;
using ktcf::testing::path_graph;
using ktcf::testing::random_model;
using ktcf::testing::reference_target;

namespace {

std::size_t hamming(const std::vector<int> &a, const std::vector<int> &b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    n += a[i] != b[i] ? 1 : 0;
  }
  return n;
}

// Random model and history, with the target bias shifted so f <= 0.5.
struct Case {
  KtModel model;
  LearningHistory history;
  KcGraph graph;
};

Case random_case(std::uint64_t seed, std::size_t K = 6, std::size_t H = 5, std::size_t T = 15) {
  Rng rng(seed);
  Case c{random_model(K, H, seed * 31 + 7), {}, path_graph(K)};
  std::uniform_int_distribution<Kc> kc(0, K - 1);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t t = 0; t < T; ++t) {
    c.history.kcs.push_back(kc(rng));
    c.history.responses.push_back(t + 1 < T && coin(rng) ? 1 : 0);
  }
  c.history.responses[0] = 0; // at least one masked step
  const double p = predict_target(c.model, c.history);
  c.model.b_out[c.history.target_kc()] -= std::log(p / (1.0 - p)) + 0.5;
  return c;
}

} // namespace

TEST(Initialize, NoiseFreeAndConvexEndpointReturnOriginal) {
  const std::vector<int> r{1, 0, 0, 1, 0};
  CfConfig cfg;
  Rng rng(1);
  cfg.lambda_noise = 0.0;
  EXPECT_EQ(initialize(InitStrategy::GaussianNoise, r, cfg, rng),
            (RelaxedResponses{1, 0, 0, 1, 0}));
  cfg.lambda_cc = 1.0;
  EXPECT_EQ(initialize(InitStrategy::ConvexCombination, r, cfg, rng),
            (RelaxedResponses{1, 0, 0, 1, 0}));
}

TEST(Initialize, RangesPerStrategy) {
  std::vector<int> r(200);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = static_cast<int>(i % 3 == 0);
  }
  CfConfig cfg;
  Rng rng(2);
  for (double v : initialize(InitStrategy::RandomBinary, r, cfg, rng)) {
    EXPECT_TRUE(v == 0.0 || v == 1.0);
  }
  for (double v : initialize(InitStrategy::SoftRelaxation, r, cfg, rng)) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : initialize(InitStrategy::GaussianNoise, r, cfg, rng)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto cc = initialize(InitStrategy::ConvexCombination, r, cfg, rng);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double lo = 0.5 * r[i];
    EXPECT_TRUE(cc[i] == lo || cc[i] == lo + 0.5);
  }
}

TEST(Initialize, GumbelSigmoidMatchesIndependentSampler) {
  const std::vector<int> r{0, 1, 1, 0, 0, 1, 0};
  CfConfig cfg;
  cfg.lambda_temp = 0.7;
  Rng rng(12345);
  const auto got = initialize(InitStrategy::GumbelSigmoid, r, cfg, rng);

  std::mt19937_64 ref(12345);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&] {
    for (;;) {
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(ref);
      if (u > 0.0) {
        return u;
      }
    }
  };
  for (std::size_t t = 0; t < r.size(); ++t) {
    const double z = normal(ref);
    const double g1 = -std::log(-std::log(uniform()));
    const double g2 = -std::log(-std::log(uniform()));
    const double want = 1.0 / (1.0 + std::exp(-(z + g1 - g2) / 0.7));
    EXPECT_NEAR(got[t], want, 1e-15);
    EXPECT_GT(got[t], 0.0);
    EXPECT_LT(got[t], 1.0);
  }
}

TEST(Initialize, UnknownStrategyIsConfigError) {
  EXPECT_THROW(parse_init_strategy("xyz"), ConfigError);
  EXPECT_EQ(parse_init_strategy("gs"), InitStrategy::GumbelSigmoid);
  for (auto s : {InitStrategy::GaussianNoise, InitStrategy::RandomBinary,
                 InitStrategy::SoftRelaxation, InitStrategy::ConvexCombination,
                 InitStrategy::GumbelSigmoid}) {
    EXPECT_EQ(parse_init_strategy(to_string(s)), s);
  }
}

TEST(Mask, IndicatorWithTargetExcluded) {
  EXPECT_EQ(actionability_mask(std::vector<int>{1, 0, 0, 1, 0}), (std::vector<int>{0, 1, 1, 0, 0}));
  EXPECT_EQ(actionability_mask(std::vector<int>{1, 1, 1}), (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(actionability_mask(std::vector<int>{0, 0, 0, 0}), (std::vector<int>{1, 1, 1, 0}));
}

TEST(Project, Examples) {
  EXPECT_EQ(project(std::vector<double>{0.3, 0.8}, std::vector<int>{1, 0}, std::vector<int>{0, 1}),
            (RelaxedResponses{1.0, 0.8}));
  EXPECT_EQ(project(std::vector<double>{0.3, 0.8}, std::vector<int>{1, 0}, std::vector<int>{0, 0}),
            (RelaxedResponses{1.0, 0.0}));
  EXPECT_EQ(project(std::vector<double>{1.7, -0.2}, std::vector<int>{0, 0}, std::vector<int>{1, 1}),
            (RelaxedResponses{1.0, 0.0}));
  EXPECT_THROW(project(std::vector<double>{1.0}, std::vector<int>{0, 0}, std::vector<int>{1, 1}),
               InputError);
}

TEST(Loss, PredictionOnlyAtOneHalf) {
  KtModel m(3, 2);
  const std::vector<Kc> kcs{0, 1, 2};
  const std::vector<int> r{0, 1, 0};
  CfConfig cfg;
  cfg.lambda_spar = 0.0;
  cfg.lambda_kc = 0.0;
  const RelaxedResponses cf{1.0, 1.0, 0.0};
  const auto l = ktcf_loss(m, kcs, cf, r, path_graph(3), 2, cfg);
  EXPECT_NEAR(l.total, 0.693147, 1e-6);
  EXPECT_DOUBLE_EQ(l.total, std::log(2.0));
}

TEST(Loss, IdentityHasNoDistanceTerms) {
  const auto m = random_model(4, 3, 3);
  const std::vector<Kc> kcs{0, 3, 1, 2};
  const std::vector<int> r{0, 1, 0, 0};
  const RelaxedResponses same(r.begin(), r.end());
  const auto l = ktcf_loss(m, kcs, same, r, path_graph(4), 2, CfConfig{});
  EXPECT_EQ(l.spar, 0.0);
  EXPECT_EQ(l.kc, 0.0);
  EXPECT_DOUBLE_EQ(l.total, l.pred);
}

TEST(Loss, KcTermWeightsFlipsByDistance) {
  // Path 0-1-2-3-4, target 4: KC 2 sits at distance 2 and KC 1 at distance 3.
  const auto m = random_model(5, 3, 4);
  const std::vector<Kc> kcs{2, 1, 0, 4};
  const std::vector<int> r{0, 0, 0, 0};
  const RelaxedResponses cf{1, 1, 0, 0};
  CfConfig cfg;
  const auto l = ktcf_loss(m, kcs, cf, r, path_graph(5), 4, cfg);
  EXPECT_EQ(l.kc, 5.0);
  EXPECT_EQ(l.spar, 2.0);
  EXPECT_NEAR(l.total - l.pred - cfg.lambda_spar * l.spar, 0.005, 1e-15);
}

TEST(Loss, SurrogatesEqualCountsAtBinaryPoints) {
  Rng rng(6);
  const auto g = path_graph(6);
  std::uniform_int_distribution<Kc> kc(0, 5);
  std::bernoulli_distribution coin(0.5);
  const auto m = random_model(6, 3, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Kc> kcs(12);
    std::vector<int> r(12), cf(12);
    for (std::size_t t = 0; t < 12; ++t) {
      kcs[t] = kc(rng);
      r[t] = coin(rng);
      cf[t] = coin(rng);
    }
    const Kc target = kcs.back();
    double hamming = 0.0, kc_sum = 0.0;
    for (std::size_t t = 0; t < 12; ++t) {
      if (r[t] != cf[t]) {
        hamming += 1.0;
        kc_sum += std::abs(static_cast<double>(kcs[t]) - static_cast<double>(target));
      }
    }
    const RelaxedResponses cfr(cf.begin(), cf.end());
    const auto l = ktcf_loss(m, kcs, cfr, r, g, target, CfConfig{});
    EXPECT_EQ(l.spar, hamming);
    EXPECT_EQ(l.kc, kc_sum);
  }
}

TEST(Loss, AnalyticGradientMatchesFiniteDifferences) {
  const auto c = random_case(8, 5, 4, 12);
  const auto dist = distances_to_target(c.graph, c.history.kcs, c.history.target_kc());
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  RelaxedResponses r(c.history.size());
  for (auto &v : r) {
    v = u(rng); // away from the |x| kinks at the binary originals
  }
  CfConfig cfg;
  cfg.lambda_kc = 0.01;
  const auto lg = detail::loss_and_gradient(c.model, c.history.kcs, r, c.history.responses, dist,
                                            cfg.lambda_spar, cfg.lambda_kc);
  const auto fd = finite_difference(
      [&](const std::vector<double> &x) {
        return ktcf_loss(c.model, c.history.kcs, x, c.history.responses, c.graph,
                         c.history.target_kc(), cfg)
            .total;
      },
      r);
  for (std::size_t t = 0; t < r.size(); ++t) {
    EXPECT_TRUE(close_rel_abs(lg.grad[t], fd[t])) << t << ": " << lg.grad[t] << " vs " << fd[t];
  }
}

TEST(Loss, PredictionClampHasZeroSlopeOutside) {
  EXPECT_DOUBLE_EQ(prediction_loss(0.25).derivative, -4.0);
  EXPECT_EQ(prediction_loss(1e-9).derivative, 0.0);
  EXPECT_DOUBLE_EQ(prediction_loss(1e-9).value, -std::log(1e-7));
  EXPECT_EQ(prediction_loss(1.0).derivative, 0.0);
}

TEST(Generate, HandBuiltModelFlipsStepTwo) {
  // Only KC 1 carries evidence; step 2 is its only occurrence before the
  // target, so flipping it is both necessary and sufficient.
  const KtModel m = accumulator_model({0.0, 0.3, 0.0}, 0.0, 6.0, -1.0);
  LearningHistory h{{0, 2, 1, 0, 2, 0}, {0, 0, 0, 0, 0, 0}};
  const auto g = path_graph(3);
  ASSERT_LE(predict_target(m, h), 0.5);
  const auto mask = actionability_mask(h.responses);
  const auto oracle = ktcf::testing::brute_force_min_flips(m, h, mask);
  ASSERT_TRUE(oracle.exists);
  EXPECT_EQ(oracle.min_flips, 1U);

  const auto res = generate(m, h, g, CfConfig{});
  EXPECT_TRUE(res.valid);
  EXPECT_EQ(res.r_cf_binary[2], 1);
  for (auto t : res.changed_indices) {
    EXPECT_EQ(mask[t], 1);
  }
  EXPECT_LE(res.changed_indices.size(), oracle.min_flips + 2);
  EXPECT_GT(reference_target(m, h.kcs, res.r_cf_binary), 0.5);
}

TEST(Generate, ToyInstancesAgainstExhaustiveSearch) {
  const auto toys = make_toy_instances(20, 555);
  std::size_t valid = 0;
  for (const auto &toy : toys) {
    CfConfig cfg;
    cfg.seed = 1;
    const auto res = generate(toy.model, toy.history, toy.graph, cfg);
    if (res.valid) {
      ++valid;
      EXPECT_LE(res.changed_indices.size(), toy.oracle.min_flips + 2);
    }
  }
  EXPECT_GE(valid, 18U);
}

TEST(Generate, RejectsUnexplainableHistories) {
  const auto m = random_model(3, 2, 1);
  const auto g = path_graph(3);
  LearningHistory all_correct{{0, 1, 2}, {1, 1, 1}};
  EXPECT_THROW(generate(m, all_correct, g, CfConfig{}), NoActionableChangeError);
  EXPECT_THROW(baseline_wachter(m, all_correct, CfConfig{}), NoActionableChangeError);

  LearningHistory target_correct{{0, 1, 2}, {0, 1, 1}};
  EXPECT_THROW(generate(m, target_correct, g, CfConfig{}), InputError);

  KtModel confident(3, 2);
  confident.b_out = {3.0, 3.0, 3.0};
  LearningHistory h{{0, 1, 2}, {0, 1, 0}};
  EXPECT_THROW(generate(confident, h, g, CfConfig{}), InputError);
  EXPECT_THROW(baseline_wachter(confident, h, CfConfig{}), InputError);

  CfConfig bad;
  bad.n_iter = 0;
  const auto c = random_case(2);
  EXPECT_THROW(generate(c.model, c.history, c.graph, bad), ConfigError);
  EXPECT_THROW(baseline_dice_like(c.model, c.history, CfConfig{}, 0), ConfigError);
}

TEST(Generate, NeverChangesCorrectResponses) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto c = random_case(seed);
    CfConfig cfg;
    cfg.seed = seed;
    cfg.init = static_cast<InitStrategy>(seed % 5);
    const auto res = generate(c.model, c.history, c.graph, cfg);
    for (std::size_t t = 0; t < c.history.size(); ++t) {
      if (c.history.responses[t] == 1) {
        EXPECT_EQ(res.r_cf_binary[t], 1);
      }
      EXPECT_EQ(res.r_cf_binary[t] != c.history.responses[t],
                std::count(res.changed_indices.begin(), res.changed_indices.end(), t) == 1);
    }
    EXPECT_EQ(res.r_cf_binary.back(), c.history.responses.back());
    EXPECT_EQ(res.valid, reference_target(c.model, c.history.kcs, res.r_cf_binary) > 0.5);
    EXPECT_LE(res.iterations_used, cfg.n_iter);
    EXPECT_EQ(res.loss_trace.size(), res.iterations_used);
  }
}

TEST(Generate, SameSeedSameResult) {
  const auto c = random_case(17);
  CfConfig cfg;
  cfg.seed = 99;
  cfg.init = InitStrategy::GumbelSigmoid;
  const auto a = generate(c.model, c.history, c.graph, cfg);
  const auto b = generate(c.model, c.history, c.graph, cfg);
  EXPECT_EQ(a.r_cf_binary, b.r_cf_binary);
  EXPECT_EQ(a.r_cf_relaxed, b.r_cf_relaxed);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
  EXPECT_EQ(a.target_probability, b.target_probability);
  ASSERT_EQ(a.loss_trace.size(), b.loss_trace.size());
  for (std::size_t i = 0; i < a.loss_trace.size(); ++i) {
    EXPECT_EQ(a.loss_trace[i].total, b.loss_trace[i].total);
  }
}

TEST(Generate, EarlyStopWhenLossBelowThreshold) {
  // A saturated model with no sparsity cost reaches near-zero loss quickly.
  const KtModel m = accumulator_model({3.0, 3.0}, 0.0, 30.0, -10.0);
  LearningHistory h{{0, 1, 0, 1, 0}, {0, 0, 0, 0, 0}};
  CfConfig cfg;
  cfg.lambda_spar = 0.0;
  cfg.lambda_kc = 0.0;
  cfg.tau = 1e-3;
  const auto res = generate(m, h, path_graph(2), cfg);
  EXPECT_LT(res.iterations_used, cfg.n_iter);
  EXPECT_LT(res.loss_trace.back().total, cfg.tau);
  // validity is judged on the binarized sequence, not the relaxed one
  EXPECT_EQ(res.valid, res.target_probability > 0.5);
}

TEST(Wachter, FlatModelLeavesHistoryUnchanged) {
  KtModel flat(3, 2); // f = 0.5 everywhere, zero prediction gradient
  LearningHistory h{{0, 1, 2, 0, 1}, {1, 0, 1, 0, 0}};
  CfConfig cfg;
  cfg.init = InitStrategy::RandomBinary;
  cfg.seed = 4;
  const auto res = baseline_wachter(flat, h, cfg);
  EXPECT_EQ(res.r_cf_binary, h.responses);
  EXPECT_TRUE(res.changed_indices.empty());
  EXPECT_FALSE(res.valid);
}

TEST(Wachter, PurePredictionLossSolvesToy) {
  const auto toys = make_toy_instances(5, 77);
  for (const auto &toy : toys) {
    CfConfig cfg;
    cfg.lambda_spar = 0.0;
    cfg.init = InitStrategy::RandomBinary;
    const auto res = baseline_wachter(toy.model, toy.history, cfg);
    EXPECT_TRUE(res.valid);
  }
}

TEST(DiceLike, SingleCandidateIsWachter) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = random_case(seed + 40);
    CfConfig cfg;
    cfg.init = InitStrategy::RandomBinary;
    cfg.seed = seed;
    const auto w = baseline_wachter(c.model, c.history, cfg);
    const auto d = baseline_dice_like(c.model, c.history, cfg, 1);
    ASSERT_EQ(d.size(), 1U);
    EXPECT_EQ(d[0].r_cf_binary, w.r_cf_binary);
    EXPECT_EQ(d[0].r_cf_relaxed, w.r_cf_relaxed);
    EXPECT_EQ(d[0].iterations_used, w.iterations_used);
  }
}

TEST(DiceLike, CandidatesAreDistinctAndSorted) {
  const auto toys = make_toy_instances(3, 9);
  for (const auto &toy : toys) {
    CfConfig cfg;
    cfg.init = InitStrategy::RandomBinary;
    cfg.seed = 3;
    const auto cands = baseline_dice_like(toy.model, toy.history, cfg, 3);
    ASSERT_EQ(cands.size(), 3U);
    std::set<std::vector<int>> distinct;
    std::vector<double> keys;
    for (const auto &c : cands) {
      distinct.insert(c.r_cf_binary);
      keys.push_back(prediction_loss(c.target_probability).value +
                     cfg.lambda_spar * static_cast<double>(hamming(c.r_cf_binary, toy.history.responses)));
    }
    EXPECT_EQ(distinct.size(), 3U);
    EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  }
}
