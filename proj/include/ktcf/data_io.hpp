#pragma once

// Student datasets: a line-delimited JSON interchange format and a synthetic
// generator with latent per-KC mastery that spills over to graph neighbours.

#include "ktcf/error.hpp"
#include "ktcf/kc_graph.hpp"
#include "ktcf/kt_model.hpp"
#include "ktcf/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace ktcf {

struct StudentRecord {
  std::int64_t student_id = 0;
  LearningHistory history;

  bool operator==(const StudentRecord &) const = default;
};

struct Dataset {
  std::size_t num_kcs = 0;
  std::vector<StudentRecord> students;

  std::vector<LearningHistory> histories() const {
    std::vector<LearningHistory> out;
    out.reserve(students.size());
    for (const auto &s : students) {
      out.push_back(s.history);
    }
    return out;
  }

  bool operator==(const Dataset &) const = default;
};

enum class GraphStyle { RandomTreePlus, Clustered };

inline std::string_view to_string(GraphStyle s) {
  return s == GraphStyle::RandomTreePlus ? "random_tree_plus" : "clustered";
}

inline GraphStyle parse_graph_style(std::string_view s) {
  if (s == "random_tree_plus") {
    return GraphStyle::RandomTreePlus;
  }
  if (s == "clustered") {
    return GraphStyle::Clustered;
  }
  throw ConfigError("unknown graph style '" + std::string(s) + "'");
}

struct SyntheticConfig {
  std::size_t n_students = 2000;
  std::size_t num_kcs = 50;
  std::size_t min_length = 40;
  std::size_t max_length = 60;
  GraphStyle graph_style = GraphStyle::RandomTreePlus;
  double extra_edge_fraction = 0.1; // extra edges relative to the spanning tree
  std::size_t cluster_size = 5;
  // Initial mastery: fixed value when set. Otherwise each student draws an
  // ability a ~ Beta(alpha, beta) and each KC starts at
  // Beta(c*a + 0.05, c*(1-a) + 0.05) with c = mastery_concentration.
  // c = 0 draws every KC independently from Beta(alpha, beta).
  std::optional<double> p_init;
  double p_init_alpha = 0.7;
  double p_init_beta = 0.7;
  double mastery_concentration = 2.0;
  double learn_rate = 0.1;
  bool learn_on_correct_only = true; // otherwise every attempt teaches
  double slip = 0.05;
  double guess = 0.1;
  double locality = 0.95; // probability the next KC is drawn near the last one
  // On a local step: probability of staying on the same KC. Negative means
  // the KC itself is just one more candidate next to its neighbours.
  double repeat = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_kcs < 2) {
      throw ConfigError("synthetic: K must be >= 2");
    }
    if (n_students < 1) {
      throw ConfigError("synthetic: n_students must be >= 1");
    }
    if (min_length < 2 || max_length < min_length) {
      throw ConfigError("synthetic: require 2 <= min_length <= max_length");
    }
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if ((p_init && !prob(*p_init)) || !prob(learn_rate) || !prob(slip) || !prob(guess) ||
        !prob(locality) || repeat > 1.0) {
      throw ConfigError("synthetic: probabilities must lie in [0, 1]");
    }
    if (!(p_init_alpha > 0.0) || !(p_init_beta > 0.0)) {
      throw ConfigError("synthetic: Beta parameters must be positive");
    }
    if (!(mastery_concentration >= 0.0)) {
      throw ConfigError("synthetic: mastery_concentration must be >= 0");
    }
    if (!(extra_edge_fraction >= 0.0) || cluster_size < 2) {
      throw ConfigError("synthetic: invalid graph parameters");
    }
  }
};

namespace detail {

inline void add_random_extra_edges(KcGraph &g, std::size_t count, Rng &rng) {
  const std::size_t n = g.num_nodes();
  const std::size_t max_edges = n * (n - 1) / 2;
  count = std::min(count, max_edges - g.num_edges());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (count > 0) {
    const Kc u = pick(rng);
    const Kc v = pick(rng);
    if (u != v && !g.has_edge(u, v)) {
      g.add_edge(u, v);
      --count;
    }
  }
}

inline KcGraph random_tree_plus(std::size_t n, double extra_fraction, Rng &rng) {
  std::vector<Kc> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  KcGraph g(n);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    g.add_edge(perm[parent(rng)], perm[i]);
  }
  add_random_extra_edges(
      g, static_cast<std::size_t>(std::lround(extra_fraction * static_cast<double>(n - 1))), rng);
  return g;
}

// Consecutive index blocks form dense communities (a chain plus random
// chords); communities are joined by a random tree of single edges.
inline KcGraph clustered(std::size_t n, std::size_t cluster_size, Rng &rng) {
  KcGraph g(n);
  std::bernoulli_distribution chord(0.5);
  std::vector<std::pair<Kc, Kc>> clusters; // [first, last)
  for (Kc first = 0; first < n; first += cluster_size) {
    const Kc last = std::min(n, first + cluster_size);
    clusters.emplace_back(first, last);
    for (Kc u = first; u + 1 < last; ++u) {
      g.add_edge(u, u + 1);
      for (Kc v = u + 2; v < last; ++v) {
        if (chord(rng)) {
          g.add_edge(u, v);
        }
      }
    }
  }
  for (std::size_t c = 1; c < clusters.size(); ++c) {
    std::uniform_int_distribution<std::size_t> prev(0, c - 1);
    const auto [pf, pl] = clusters[prev(rng)];
    const auto [cf, cl] = clusters[c];
    std::uniform_int_distribution<Kc> a(pf, pl - 1), b(cf, cl - 1);
    g.add_edge(a(rng), b(rng));
  }
  return g;
}

} // namespace detail

inline KcGraph generate_graph(const SyntheticConfig &cfg, Rng &rng) {
  return cfg.graph_style == GraphStyle::RandomTreePlus
             ? detail::random_tree_plus(cfg.num_kcs, cfg.extra_edge_fraction, rng)
             : detail::clustered(cfg.num_kcs, cfg.cluster_size, rng);
}

struct SyntheticData {
  Dataset dataset;
  KcGraph graph;
};

inline SyntheticData generate_dataset(const SyntheticConfig &cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticData out{{cfg.num_kcs, {}}, generate_graph(cfg, rng)};
  const KcGraph &g = out.graph;
  const std::size_t K = cfg.num_kcs;

  std::uniform_int_distribution<std::size_t> length(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<Kc> any_kc(0, K - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> mastery(K);

  out.dataset.students.reserve(cfg.n_students);
  for (std::size_t s = 0; s < cfg.n_students; ++s) {
    const double c = cfg.mastery_concentration;
    const double ability =
        cfg.p_init || c == 0.0 ? 0.0 : sample_beta(rng, cfg.p_init_alpha, cfg.p_init_beta);
    for (auto &m : mastery) {
      if (cfg.p_init) {
        m = *cfg.p_init;
      } else if (c == 0.0) {
        m = sample_beta(rng, cfg.p_init_alpha, cfg.p_init_beta);
      } else {
        m = sample_beta(rng, c * ability + 0.05, c * (1.0 - ability) + 0.05);
      }
    }
    StudentRecord rec;
    rec.student_id = static_cast<std::int64_t>(s);
    const std::size_t T = length(rng);
    Kc kc = any_kc(rng);
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) {
        if (unit(rng) < cfg.locality) {
          const auto &nb = g.neighbors(kc);
          if (cfg.repeat >= 0.0) {
            if (!nb.empty() && unit(rng) >= cfg.repeat) {
              std::uniform_int_distribution<std::size_t> pick(0, nb.size() - 1);
              kc = nb[pick(rng)].first;
            }
          } else {
            std::uniform_int_distribution<std::size_t> pick(0, nb.size());
            const std::size_t i = pick(rng);
            kc = i == nb.size() ? kc : nb[i].first;
          }
        } else {
          kc = any_kc(rng);
        }
      }
      const double m = mastery[kc];
      const double p_correct = m * (1.0 - cfg.slip) + (1.0 - m) * cfg.guess;
      rec.history.kcs.push_back(kc);
      const int y = unit(rng) < p_correct ? 1 : 0;
      rec.history.responses.push_back(y);
      if (cfg.learn_on_correct_only && y == 0) {
        continue;
      }
      mastery[kc] += cfg.learn_rate * (1.0 - mastery[kc]);
      for (const auto &[v, w] : g.neighbors(kc)) {
        mastery[v] += cfg.learn_rate * (1.0 - mastery[v]);
      }
    }
    out.dataset.students.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset file: UTF-8, one JSON object per line. Line 1 is the header
// {"format_version": 1, "K": <int>}; each following line is
// {"student_id": <int>, "kcs": [...], "responses": [...]}.

inline constexpr int kDatasetFormatVersion = 1;

inline void write_dataset(const Dataset &d, std::ostream &out) {
  nlohmann::json header = {{"format_version", kDatasetFormatVersion}, {"K", d.num_kcs}};
  out << header.dump() << '\n';
  for (const auto &s : d.students) {
    nlohmann::json rec = {{"student_id", s.student_id},
                          {"kcs", s.history.kcs},
                          {"responses", s.history.responses}};
    out << rec.dump() << '\n';
  }
}

inline Dataset parse_dataset(std::istream &in) {
  using nlohmann::json;
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error &e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) {
      throw ParseError(line_no, "expected a JSON object");
    }
    try {
      if (!have_header) {
        const int version = j.at("format_version").get<int>();
        if (version != kDatasetFormatVersion) {
          throw ParseError(line_no, "unsupported dataset format version " + std::to_string(version));
        }
        d.num_kcs = j.at("K").get<std::size_t>();
        have_header = true;
        continue;
      }
      StudentRecord rec;
      rec.student_id = j.at("student_id").get<std::int64_t>();
      rec.history.kcs = j.at("kcs").get<std::vector<Kc>>();
      rec.history.responses = j.at("responses").get<std::vector<int>>();
      validate_history(rec.history, d.num_kcs);
      d.students.push_back(std::move(rec));
    } catch (const json::exception &e) {
      throw ParseError(line_no, std::string("schema violation: ") + e.what());
    } catch (const InputError &e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!have_header) {
    throw ParseError(line_no, "missing dataset header");
  }
  return d;
}

inline Dataset load_dataset(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open dataset file " + path.string());
  }
  return parse_dataset(in);
}

inline void save_dataset(const Dataset &d, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error("cannot write dataset file " + path.string());
  }
  write_dataset(d, out);
}

} // namespace ktcf
