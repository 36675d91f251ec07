#pragma once

// Turns a counterfactual diff into an ordered study plan: a greedy
// nearest-neighbour Hamiltonian path over the changed KCs, started at the
// target KC on the complete graph of shortest-path distances, then reversed
// so the plan ends at the target.

#include "ktcf/error.hpp"
#include "ktcf/kc_graph.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace ktcf {

struct InstructionPlan {
  std::vector<Kc> ordered_kcs;
  double total_path_distance = 0.0;
  std::vector<std::size_t> source_changed_indices;
};

inline double ordered_total_distance(std::span<const Kc> sequence, const KcGraph &g) {
  if (sequence.empty()) {
    throw InputError("ordered_total_distance: empty sequence");
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < sequence.size(); ++i) {
    total += g.shortest_distance(sequence[i], sequence[i + 1]);
  }
  return total;
}

inline std::vector<std::size_t> changed_indices(std::span<const int> r_orig,
                                                std::span<const int> r_cf) {
  if (r_orig.size() != r_cf.size()) {
    throw InputError("changed_indices: length mismatch");
  }
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < r_orig.size(); ++t) {
    if (r_orig[t] != r_cf[t]) {
      out.push_back(t);
    }
  }
  return out;
}

// KCs at changed steps in time order (repeats kept), followed by the target.
inline std::vector<Kc> discovery_order(std::span<const int> r_orig, std::span<const int> r_cf,
                                       std::span<const Kc> kcs, Kc target_kc) {
  std::vector<Kc> seq;
  for (auto t : changed_indices(r_orig, r_cf)) {
    seq.push_back(kcs[t]);
  }
  seq.push_back(target_kc);
  return seq;
}

inline InstructionPlan plan(std::span<const int> r_orig, std::span<const int> r_cf_binary,
                            std::span<const Kc> kcs, const KcGraph &g, Kc target_kc) {
  if (r_orig.size() != r_cf_binary.size() || kcs.size() != r_orig.size()) {
    throw InputError("plan: sequences differ in length");
  }
  if (target_kc >= g.num_nodes()) {
    throw InputError("plan: target KC outside the graph");
  }
  InstructionPlan out;
  out.source_changed_indices = changed_indices(r_orig, r_cf_binary);

  // Node 0 is the target; the rest are the distinct changed KCs in
  // increasing index order.
  std::vector<Kc> nodes;
  for (auto t : out.source_changed_indices) {
    nodes.push_back(kcs[t]);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::erase(nodes, target_kc);
  nodes.insert(nodes.begin(), target_kc);

  const Matrix d = g.all_pairs_among(nodes);
  const std::size_t n = nodes.size();
  std::vector<bool> visited(n, false);
  std::vector<std::size_t> path{0};
  visited[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    const std::size_t cur = path.back();
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < n; ++j) {
      // strict '<' over increasing KC index keeps the smallest KC on ties
      if (!visited[j] && d(cur, j) < best_d) {
        best_d = d(cur, j);
        best = j;
      }
    }
    visited[best] = true;
    out.total_path_distance += best_d;
    path.push_back(best);
  }
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    out.ordered_kcs.push_back(nodes[*it]);
  }
  return out;
}

} // namespace ktcf
