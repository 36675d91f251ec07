#pragma once

// Undirected, positively weighted relation graph over knowledge concepts.

#include "ktcf/error.hpp"
#include "ktcf/kt_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ktcf {

struct Edge {
  Kc u;
  Kc v;
  double weight = 1.0;

  bool operator==(const Edge &) const = default;
};

class KcGraph {
public:
  KcGraph() = default;
  explicit KcGraph(std::size_t num_nodes) : adj_(num_nodes) {}

  std::size_t num_nodes() const noexcept { return adj_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge> &edges() const noexcept { return edges_; }
  const std::vector<std::pair<Kc, double>> &neighbors(Kc u) const {
    check_node(u);
    return adj_[u];
  }

  void add_edge(Kc u, Kc v, double weight = 1.0) {
    check_node(u);
    check_node(v);
    if (u == v) {
      throw InputError("self-loop on node " + std::to_string(u));
    }
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw InputError("edge weight must be positive and finite");
    }
    if (!keys_.insert(key(u, v)).second) {
      throw InputError("duplicate edge " + std::to_string(u) + " " + std::to_string(v));
    }
    edges_.push_back({u, v, weight});
    adj_[u].emplace_back(v, weight);
    adj_[v].emplace_back(u, weight);
    max_weight_ = std::max(max_weight_, weight);
  }

  bool has_edge(Kc u, Kc v) const {
    return u < num_nodes() && v < num_nodes() && keys_.count(key(u, v)) > 0;
  }

  // Distance reported for disconnected pairs. Defaults to |V| times the
  // largest edge weight (|V| for unit weights), which exceeds any simple path.
  double unreachable_distance() const noexcept {
    if (unreachable_) {
      return *unreachable_;
    }
    return static_cast<double>(num_nodes()) * max_weight_;
  }
  void set_unreachable_distance(double d) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw ConfigError("unreachable distance must be positive and finite");
    }
    unreachable_ = d;
  }

  // Single-source Dijkstra with a binary heap. Equal tentative distances are
  // settled in increasing node order. Unreachable nodes get
  // unreachable_distance().
  std::vector<double> distances_from(Kc source) const {
    check_node(source);
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(num_nodes(), inf);
    using Item = std::pair<double, Kc>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) {
        continue;
      }
      for (const auto &[v, w] : adj_[u]) {
        const double nd = d + w;
        if (nd < dist[v]) {
          dist[v] = nd;
          heap.emplace(nd, v);
        }
      }
    }
    const double penalty = unreachable_distance();
    for (double &d : dist) {
      if (d == inf) {
        d = penalty;
      }
    }
    return dist;
  }

  double shortest_distance(Kc u, Kc v) const {
    check_node(v);
    if (u == v) {
      check_node(u);
      return 0.0;
    }
    return distances_from(u)[v];
  }

  // Pairwise distances among `subset`, one Dijkstra run per element.
  Matrix all_pairs_among(std::span<const Kc> subset) const {
    if (subset.empty()) {
      throw InputError("all_pairs_among: empty subset");
    }
    const std::size_t n = subset.size();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto from_i = distances_from(subset[i]);
      for (std::size_t j = 0; j < n; ++j) {
        check_node(subset[j]);
        d(i, j) = i == j ? 0.0 : from_i[subset[j]];
      }
    }
    return d;
  }

private:
  static std::pair<Kc, Kc> key(Kc u, Kc v) { return {std::min(u, v), std::max(u, v)}; }

  void check_node(Kc u) const {
    if (u >= num_nodes()) {
      throw InputError("node " + std::to_string(u) + " out of range for |V|=" +
                       std::to_string(num_nodes()));
    }
  }

  std::vector<std::vector<std::pair<Kc, double>>> adj_;
  std::vector<Edge> edges_;
  std::set<std::pair<Kc, Kc>> keys_;
  double max_weight_ = 1.0;
  std::optional<double> unreachable_;
};

// ---------------------------------------------------------------------------
// Graph file: UTF-8 text. The first non-comment line is the node count; every
// following non-comment line is "u v [w]" with 0-based node indices. '#'
// starts a comment; blank lines are ignored.

namespace detail {

inline std::vector<std::string> split_ws(const std::string &line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) {
    out.push_back(tok);
  }
  return out;
}

template <class T>
bool parse_number(const std::string &s, T &out) {
  const auto *first = s.data();
  const auto *last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

} // namespace detail

inline KcGraph parse_graph(std::istream &in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<KcGraph> g;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const auto tok = detail::split_ws(line);
    if (tok.empty()) {
      continue;
    }
    if (!g) {
      std::size_t n = 0;
      if (tok.size() != 1 || !detail::parse_number(tok[0], n)) {
        throw ParseError(line_no, "expected node count");
      }
      g.emplace(n);
      continue;
    }
    if (tok.size() != 2 && tok.size() != 3) {
      throw ParseError(line_no, "expected 'u v [w]'");
    }
    std::size_t u = 0, v = 0;
    double w = 1.0;
    if (!detail::parse_number(tok[0], u) || !detail::parse_number(tok[1], v) ||
        (tok.size() == 3 && !detail::parse_number(tok[2], w))) {
      throw ParseError(line_no, "malformed number");
    }
    try {
      g->add_edge(u, v, w);
    } catch (const InputError &e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!g) {
    throw ParseError(line_no, "missing node count");
  }
  return std::move(*g);
}

inline KcGraph load_graph(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open graph file " + path.string());
  }
  return parse_graph(in);
}

inline void write_graph(const KcGraph &g, std::ostream &out) {
  out << g.num_nodes() << '\n';
  for (const auto &e : g.edges()) {
    out << e.u << ' ' << e.v;
    if (e.weight != 1.0) {
      out << ' ' << detail::format_double(e.weight);
    }
    out << '\n';
  }
}

inline void save_graph(const KcGraph &g, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error("cannot write graph file " + path.string());
  }
  write_graph(g, out);
}

} // namespace ktcf
