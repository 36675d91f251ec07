#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ktcf;
using ktcf::testing::close_rel_abs;
using ktcf::testing::finite_difference;
using ktcf::testing::random_model;
using ktcf::testing::reference_forward;

namespace {

std::vector<Kc> random_kcs(std::size_t T, std::size_t K, Rng &rng) {
  std::uniform_int_distribution<Kc> kc(0, K - 1);
  std::vector<Kc> out(T);
  for (auto &k : out) {
    k = kc(rng);
  }
  return out;
}

std::vector<double> random_relaxed(std::size_t T, Rng &rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(T);
  for (auto &v : out) {
    v = u(rng);
  }
  return out;
}

} // namespace

TEST(EncodeInteraction, OneHotAtBinaryResponses) {
  EXPECT_EQ(encode_interaction(2, 1.0, 5), (std::vector<double>{0, 0, 0, 0, 0, 0, 0, 1, 0, 0}));
  EXPECT_EQ(encode_interaction(2, 0.0, 5), (std::vector<double>{0, 0, 1, 0, 0, 0, 0, 0, 0, 0}));
}

TEST(EncodeInteraction, ConvexCombinationAtRelaxedResponse) {
  const auto x = encode_interaction(2, 0.3, 5);
  EXPECT_DOUBLE_EQ(x[2], 0.7);
  EXPECT_DOUBLE_EQ(x[7], 0.3);
  double total = 0.0;
  for (double v : x) {
    total += v;
  }
  EXPECT_DOUBLE_EQ(total, 1.0);
}

TEST(EncodeInteraction, RejectsOutOfRangeKc) {
  EXPECT_THROW(encode_interaction(5, 1.0, 5), InputError);
}

TEST(Forward, ZeroWeightsPredictOneHalf) {
  KtModel m(4, 3);
  const std::vector<Kc> kcs{0, 1, 2, 3, 0};
  const std::vector<double> r{1, 0, 1, 1, 0};
  const auto p = forward(m, kcs, r);
  ASSERT_EQ(p.size(), kcs.size() - 1);
  for (double v : p) {
    EXPECT_EQ(v, 0.5);
  }
}

TEST(Forward, MatchesReferenceLstm) {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t K = 2 + trial % 7;
    const std::size_t H = 1 + trial % 5;
    const auto m = random_model(K, H, 100 + trial);
    const std::size_t T = 2 + trial % 15;
    const auto kcs = random_kcs(T, K, rng);
    const auto r = random_relaxed(T, rng);
    const auto got = forward(m, kcs, r);
    const auto want = reference_forward(m, kcs, r);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-12) << "trial " << trial << " step " << i;
    }
    EXPECT_NEAR(predict_target(m, kcs, r), want.back(), 1e-12);
  }
}

TEST(Forward, RejectsBadInputs) {
  KtModel m(3, 2);
  const std::vector<Kc> one{0};
  const std::vector<double> r1{1.0};
  EXPECT_THROW(forward(m, one, r1), InputError);
  const std::vector<Kc> kcs{0, 3};
  const std::vector<double> r2{1.0, 0.0};
  EXPECT_THROW(forward(m, kcs, r2), InputError);
  const std::vector<double> r3{1.0};
  const std::vector<Kc> ok{0, 1};
  EXPECT_THROW(forward(m, ok, r3), InputError);
}

TEST(Forward, TargetIgnoresItsOwnResponse) {
  Rng rng(3);
  const auto m = random_model(6, 4, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto kcs = random_kcs(10, 6, rng);
    auto r = random_relaxed(10, rng);
    const double before = predict_target(m, kcs, r);
    r.back() = 1.0 - r.back();
    EXPECT_EQ(predict_target(m, kcs, r), before);
  }
}

TEST(Forward, BinaryResponsesMatchOneHotInputsExactly) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t K = 2 + trial % 9;
    const auto m = random_model(K, 1 + trial % 6, 300 + trial);
    const std::size_t T = 2 + trial % 20;
    const auto kcs = random_kcs(T, K, rng);
    std::vector<double> r(T);
    std::vector<std::vector<double>> xs;
    std::bernoulli_distribution coin(0.5);
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = coin(rng) ? 1.0 : 0.0;
      std::vector<double> x(2 * K, 0.0);
      x[r[t] == 1.0 ? K + kcs[t] : kcs[t]] = 1.0;
      xs.push_back(std::move(x));
    }
    const auto sparse = forward(m, kcs, r);
    const auto dense = forward_interactions(m, kcs, xs);
    ASSERT_EQ(sparse.size(), dense.size());
    for (std::size_t i = 0; i < sparse.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(sparse[i]), std::bit_cast<std::uint64_t>(dense[i]));
    }
  }
}

TEST(GradResponses, ZeroOutputWeightsGiveZeroGradient) {
  auto m = random_model(5, 4, 9);
  std::fill(m.w_out.data.begin(), m.w_out.data.end(), 0.0);
  std::fill(m.b_out.begin(), m.b_out.end(), 0.0);
  const std::vector<Kc> kcs{0, 1, 2, 3, 4, 0};
  const std::vector<double> r{0.2, 0.9, 0.4, 1.0, 0.0, 0.0};
  const auto g = grad_responses(m, kcs, r, prediction_loss);
  EXPECT_EQ(g.prediction, 0.5);
  for (double v : g.grad) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(GradResponses, MatchesFiniteDifferences) {
  Rng rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t K = 2 + trial % 9;
    const std::size_t H = 1 + trial % 8;
    const auto m = random_model(K, H, 500 + trial);
    const std::size_t T = 2 + trial % 19;
    const auto kcs = random_kcs(T, K, rng);
    const auto r = random_relaxed(T, rng);
    const auto g = grad_responses(m, kcs, r, prediction_loss);
    const auto fd = finite_difference(
        [&](const std::vector<double> &x) {
          return -std::log(ktcf::testing::reference_target(m, kcs, x));
        },
        r);
    for (std::size_t t = 0; t < T; ++t) {
      EXPECT_TRUE(close_rel_abs(g.grad[t], fd[t])) << "trial " << trial << " t " << t << ": "
                                                   << g.grad[t] << " vs " << fd[t];
    }
    EXPECT_EQ(g.grad.back(), 0.0);
  }
}

TEST(ModelFile, RoundTripIsBitExact) {
  const auto m = random_model(7, 5, 77, 0.8);
  const auto bytes = serialize_model(m);
  const auto back = deserialize_model(bytes);
  EXPECT_EQ(back, m);
  const std::vector<Kc> kcs{0, 6, 2, 2, 5};
  const std::vector<double> r{1, 0, 0, 1, 0};
  EXPECT_EQ(forward(back, kcs, r), forward(m, kcs, r));
}

TEST(ModelFile, RoundTripThroughDisk) {
  const auto m = random_model(4, 3, 78);
  const auto path = std::filesystem::temp_directory_path() / "ktcf_model_roundtrip.bin";
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsWrongMagic) {
  auto bytes = serialize_model(random_model(3, 2, 1));
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelFile, RejectsUnknownVersion) {
  auto bytes = serialize_model(random_model(3, 2, 1));
  bytes[8] = 9;
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelFile, RejectsTruncationAndTrailingBytes) {
  const auto bytes = serialize_model(random_model(3, 2, 1));
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_model(bytes + "x"), FormatError);
}

TEST(ModelFile, WeightBlockShapeMismatchIsDimensionError) {
  // Header claims K=50 but the blocks come from a K=40 model.
  auto bytes = serialize_model(random_model(40, 2, 1, 0.1));
  const std::uint32_t k50 = 50;
  for (int i = 0; i < 4; ++i) {
    bytes[12 + i] = static_cast<char>((k50 >> (8 * i)) & 0xFF);
  }
  EXPECT_THROW(deserialize_model(bytes), DimensionError);
}

TEST(ModelFile, MissingFileIsFormatError) {
  EXPECT_THROW(load_model("/nonexistent/dir/model.bin"), FormatError);
}
