#pragma once

// Reference implementations and fixtures shared by the test binaries. Nothing
// here calls into the library's numerical kernels, so the checks stay
// independent of the code under test.

#include "ktcf/ktcf.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

namespace ktcf::testing {

inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Textbook LSTM over dense 2K one-hot inputs. Returns p[t-1] = P(step t
// correct | steps < t) for t = 1..T-1.
inline std::vector<double> reference_forward(const KtModel &m, const std::vector<Kc> &kcs,
                                             const std::vector<double> &r) {
  const std::size_t K = m.num_kcs();
  const std::size_t H = m.hidden();
  const std::size_t T = kcs.size();
  std::vector<double> h(H, 0.0), c(H, 0.0), p;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    std::vector<double> x(2 * K, 0.0);
    x[kcs[t]] += 1.0 - r[t];
    x[K + kcs[t]] += r[t];
    std::vector<double> pre(4 * H);
    for (std::size_t j = 0; j < 4 * H; ++j) {
      double s = m.b[j];
      for (std::size_t i = 0; i < 2 * K; ++i) {
        s += m.w_ih(j, i) * x[i];
      }
      for (std::size_t k = 0; k < H; ++k) {
        s += m.w_hh(j, k) * h[k];
      }
      pre[j] = s;
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double in = ref_sigmoid(pre[k]);
      const double fg = ref_sigmoid(pre[H + k]);
      const double cand = std::tanh(pre[2 * H + k]);
      const double out = ref_sigmoid(pre[3 * H + k]);
      c[k] = fg * c[k] + in * cand;
      h[k] = out * std::tanh(c[k]);
    }
    const Kc next = kcs[t + 1];
    double z = m.b_out[next];
    for (std::size_t k = 0; k < H; ++k) {
      z += m.w_out(next, k) * h[k];
    }
    p.push_back(ref_sigmoid(z));
  }
  return p;
}

inline double reference_target(const KtModel &m, const std::vector<Kc> &kcs,
                               const std::vector<double> &r) {
  return reference_forward(m, kcs, r).back();
}

inline double reference_target(const KtModel &m, const std::vector<Kc> &kcs,
                               const std::vector<int> &r) {
  return reference_target(m, kcs, std::vector<double>(r.begin(), r.end()));
}

// Central finite difference of fn at x along every coordinate.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double> &)> &fn,
                                             std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = fn(x);
    x[i] = keep - eps;
    const double down = fn(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

inline bool close_rel_abs(double got, double want, double rel = 1e-4, double abs_floor = 1e-7) {
  const double err = std::abs(got - want);
  return err <= abs_floor || err <= rel * std::abs(want);
}

inline KtModel random_model(std::size_t K, std::size_t H, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return KtModel::random(K, H, rng, scale);
}

// Floyd-Warshall over the graph's edge list.
inline std::vector<std::vector<double>> floyd_warshall(const KcGraph &g) {
  const std::size_t n = g.num_nodes();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0.0;
  }
  for (const auto &e : g.edges()) {
    d[e.u][e.v] = std::min(d[e.u][e.v], e.weight);
    d[e.v][e.u] = std::min(d[e.v][e.u], e.weight);
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (d[i][k] + d[k][j] < d[i][j]) {
          d[i][j] = d[i][k] + d[k][j];
        }
      }
    }
  }
  for (auto &row : d) {
    for (auto &v : row) {
      if (v == inf) {
        v = g.unreachable_distance();
      }
    }
  }
  return d;
}

inline KcGraph random_graph(std::size_t n, double edge_prob, bool weighted, Rng &rng) {
  KcGraph g(n);
  std::bernoulli_distribution keep(edge_prob);
  std::uniform_int_distribution<int> w(1, 9);
  for (Kc u = 0; u < n; ++u) {
    for (Kc v = u + 1; v < n; ++v) {
      if (keep(rng)) {
        g.add_edge(u, v, weighted ? static_cast<double>(w(rng)) : 1.0);
      }
    }
  }
  return g;
}

inline KcGraph path_graph(std::size_t n) {
  KcGraph g(n);
  for (Kc u = 0; u + 1 < n; ++u) {
    g.add_edge(u, u + 1);
  }
  return g;
}

// Single-unit "skill accumulator": the cell sums per-KC evidence, with
// correct answers adding strength[kc] and incorrect ones subtracting
// penalty. Gates i and o are pinned near 1; the forget gate keeps
// `retention` of the cell per step (1 means no decay). The target logit is
// gain * tanh(c) + bias.
inline KtModel accumulator_model(const std::vector<double> &strength, double penalty,
                                 double gain, double bias, double retention = 1.0) {
  const std::size_t K = strength.size();
  KtModel m(K, 1);
  m.b[0] = 12.0; // input gate
  m.b[1] = retention >= 1.0 ? 12.0 : std::log(retention / (1.0 - retention)); // forget gate
  m.b[3] = 12.0; // output gate
  for (Kc k = 0; k < K; ++k) {
    m.w_ih(2, k) = -penalty;
    m.w_ih(2, K + k) = strength[k];
    m.w_out(k, 0) = gain;
    m.b_out[k] = bias;
  }
  return m;
}

struct BruteForce {
  bool exists = false;
  std::size_t min_flips = 0;
};

// Exhaustive search over every binary assignment of the masked positions.
inline BruteForce brute_force_min_flips(const KtModel &m, const LearningHistory &h,
                                        const std::vector<int> &mask) {
  std::vector<std::size_t> free;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) {
      free.push_back(t);
    }
  }
  BruteForce out;
  std::vector<double> r(h.responses.begin(), h.responses.end());
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << free.size()); ++bits) {
    std::size_t flips = 0;
    for (std::size_t i = 0; i < free.size(); ++i) {
      const int orig = h.responses[free[i]];
      const int v = (bits >> i) & 1U ? 1 - orig : orig;
      r[free[i]] = v;
      flips += v != orig ? 1 : 0;
    }
    if (out.exists && flips >= out.min_flips) {
      continue;
    }
    if (reference_target(m, h.kcs, r) > 0.5) {
      out.exists = true;
      out.min_flips = flips;
    }
  }
  return out;
}

struct ToyInstance {
  KtModel model;
  LearningHistory history;
  KcGraph graph;
  BruteForce oracle;
};

// Small leaky-accumulator instances (K=4, T in [8, 14]) whose target is
// predicted incorrect but where brute force certifies that some masked flip
// set makes it correct. With retention 1 every past step of a KC has exactly
// the same effect on the target, which makes many flip sets tie.
inline std::vector<ToyInstance> make_toy_instances(std::size_t n, std::uint64_t seed,
                                                   double retention = 0.9) {
  Rng rng(seed);
  const std::size_t K = 4;
  std::uniform_real_distribution<double> strength(0.15, 0.35);
  std::uniform_real_distribution<double> margin(0.3, 3.0);
  std::uniform_int_distribution<std::size_t> length(8, 14);
  std::uniform_int_distribution<Kc> kc(0, K - 1);
  std::bernoulli_distribution correct(0.35);
  std::vector<ToyInstance> out;
  while (out.size() < n) {
    std::vector<double> s(K);
    for (auto &v : s) {
      v = strength(rng);
    }
    KtModel m = accumulator_model(s, 0.1, 6.0, 0.0, retention);
    LearningHistory h;
    const std::size_t T = length(rng);
    for (std::size_t t = 0; t < T; ++t) {
      h.kcs.push_back(kc(rng));
      h.responses.push_back(t + 1 < T && correct(rng) ? 1 : 0);
    }
    // Shift the output bias so the original logit sits `margin` below 0.
    const double p0 = reference_target(m, h.kcs, h.responses);
    const double z0 = std::log(p0 / (1.0 - p0));
    const double bias = -z0 - margin(rng);
    for (auto &b : m.b_out) {
      b = bias;
    }
    const auto mask = actionability_mask(h.responses);
    if (std::count(mask.begin(), mask.end(), 1) == 0) {
      continue;
    }
    auto oracle = brute_force_min_flips(m, h, mask);
    if (!oracle.exists) {
      continue;
    }
    out.push_back({std::move(m), std::move(h), path_graph(K), oracle});
  }
  return out;
}

// Exact shortest Hamiltonian path over `nodes` that ends at `target`, by
// enumerating permutations. Distances come from the reference matrix.
inline double brute_force_path(const std::vector<Kc> &nodes, Kc target,
                               const std::vector<std::vector<double>> &d) {
  std::vector<Kc> rest;
  for (Kc v : nodes) {
    if (v != target) {
      rest.push_back(v);
    }
  }
  std::sort(rest.begin(), rest.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < rest.size(); ++i) {
      total += d[rest[i]][rest[i + 1]];
    }
    if (!rest.empty()) {
      total += d[rest.back()][target];
    }
    best = std::min(best, total);
  } while (std::next_permutation(rest.begin(), rest.end()));
  return best;
}

} // namespace ktcf::testing
