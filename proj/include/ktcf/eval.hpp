#pragma once

// Counterfactual quality metrics, instance selection and benchmark/ablation
// orchestration over a shared instance list.

#include "ktcf/cf_engine.hpp"
#include "ktcf/data_io.hpp"
#include "ktcf/error.hpp"
#include "ktcf/kc_graph.hpp"
#include "ktcf/kt_model.hpp"
#include "ktcf/random.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace ktcf {

struct InstanceMetrics {
  bool valid = false;
  double sparsity = 0.0;
  double sparsity_rate = 0.0;
  double actionability = 0.0;
  double actionability_rate = 0.0;
};

// Metrics of one binarized counterfactual against its original responses.
// actionability_rate is 0 when nothing changed.
inline InstanceMetrics instance_metrics(std::span<const int> r_orig, std::span<const int> r_cf,
                                        bool valid) {
  if (r_orig.size() != r_cf.size() || r_orig.empty()) {
    throw InputError("instance_metrics: length mismatch");
  }
  InstanceMetrics m;
  m.valid = valid;
  for (std::size_t t = 0; t < r_orig.size(); ++t) {
    if (r_orig[t] != r_cf[t]) {
      m.sparsity += 1.0;
      if (r_orig[t] == 1 && r_cf[t] == 0) {
        m.actionability += 1.0;
      }
    }
  }
  m.sparsity_rate = m.sparsity / static_cast<double>(r_orig.size());
  m.actionability_rate = m.sparsity > 0.0 ? m.actionability / m.sparsity : 0.0;
  return m;
}

struct Stat {
  double mean = 0.0;
  double std = 0.0; // population standard deviation
};

inline Stat summarize(std::span<const double> xs) {
  Stat s;
  if (xs.empty()) {
    return s;
  }
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
  }
  s.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) {
    sq += (x - s.mean) * (x - s.mean);
  }
  s.std = std::sqrt(sq / static_cast<double>(xs.size()));
  return s;
}

struct MethodMetrics {
  std::string method;
  std::size_t n = 0;
  std::size_t n_valid = 0;
  Stat validity;
  Stat sparsity;
  Stat sparsity_rate;
  Stat actionability;
  Stat actionability_rate;
  Stat time_s;
  // Restricted to valid counterfactuals.
  Stat valid_only_sparsity;
  Stat valid_only_sparsity_rate;
};

using MetricsReport = std::vector<MethodMetrics>;

struct InstanceRecord {
  std::int64_t instance_id = 0;
  std::string method;
  InstanceMetrics metrics;
  double time_s = 0.0;
  std::size_t n_iterations = 0;
  CfResult result;
  std::string error; // non-empty when generation failed
};

inline MethodMetrics aggregate(std::string method, std::span<const InstanceRecord> rows) {
  if (rows.empty()) {
    throw InputError("aggregate: no instances");
  }
  MethodMetrics out;
  out.method = std::move(method);
  out.n = rows.size();
  std::vector<double> v, s, sr, a, ar, tm, vs, vsr;
  for (const auto &r : rows) {
    v.push_back(r.metrics.valid ? 1.0 : 0.0);
    s.push_back(r.metrics.sparsity);
    sr.push_back(r.metrics.sparsity_rate);
    a.push_back(r.metrics.actionability);
    ar.push_back(r.metrics.actionability_rate);
    tm.push_back(r.time_s);
    if (r.metrics.valid) {
      vs.push_back(r.metrics.sparsity);
      vsr.push_back(r.metrics.sparsity_rate);
    }
  }
  out.n_valid = vs.size();
  out.validity = summarize(v);
  out.sparsity = summarize(s);
  out.sparsity_rate = summarize(sr);
  out.actionability = summarize(a);
  out.actionability_rate = summarize(ar);
  out.time_s = summarize(tm);
  out.valid_only_sparsity = summarize(vs);
  out.valid_only_sparsity_rate = summarize(vsr);
  return out;
}

// Metrics for one method; results[i] is the counterfactual of originals[i].
inline MethodMetrics compute_metrics(std::span<const CfResult> results,
                                     std::span<const LearningHistory> originals,
                                     std::string method = {}) {
  if (results.empty()) {
    throw InputError("compute_metrics: empty result list");
  }
  if (results.size() != originals.size()) {
    throw InputError("compute_metrics: results and originals are not aligned");
  }
  std::vector<InstanceRecord> rows(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    rows[i].instance_id = static_cast<std::int64_t>(i);
    rows[i].metrics = instance_metrics(originals[i].responses, results[i].r_cf_binary,
                                       results[i].valid);
    rows[i].time_s = results[i].wall_time_seconds;
    rows[i].n_iterations = results[i].iterations_used;
  }
  return aggregate(std::move(method), rows);
}

// ---------------------------------------------------------------------------
// Instance selection

struct Instance {
  std::int64_t instance_id = 0;
  LearningHistory history;
};

struct SelectionOptions {
  double fraction_incorrect = 0.45;
  std::size_t n_instances = 200;
  std::uint64_t seed = 0;
};

struct Selection {
  std::vector<Instance> instances; // sorted by instance_id
  std::size_t eligible = 0;
  bool insufficient = false; // fewer eligible than requested
};

inline bool is_eligible(const KtModel &m, const LearningHistory &h, double fraction_incorrect) {
  const auto T = static_cast<double>(h.size());
  double incorrect = 0.0;
  for (int r : h.responses) {
    incorrect += r == 0 ? 1.0 : 0.0;
  }
  if (!(incorrect / T > fraction_incorrect) || h.responses.back() != 0) {
    return false;
  }
  const auto mask = actionability_mask(h.responses);
  if (std::none_of(mask.begin(), mask.end(), [](int v) { return v == 1; })) {
    return false;
  }
  return predict_target(m, h) <= 0.5;
}

inline Selection select_instances(const Dataset &d, const KtModel &m,
                                  const SelectionOptions &opt) {
  Selection sel;
  std::vector<const StudentRecord *> eligible;
  for (const auto &s : d.students) {
    validate_history(s.history, m.num_kcs());
    if (is_eligible(m, s.history, opt.fraction_incorrect)) {
      eligible.push_back(&s);
    }
  }
  sel.eligible = eligible.size();
  Rng rng(derive_seed(opt.seed, 0x5e1ec7));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  if (eligible.size() < opt.n_instances) {
    sel.insufficient = true;
  } else {
    eligible.resize(opt.n_instances);
  }
  for (const auto *s : eligible) {
    sel.instances.push_back({s->student_id, s->history});
  }
  std::sort(sel.instances.begin(), sel.instances.end(),
            [](const Instance &a, const Instance &b) { return a.instance_id < b.instance_id; });
  return sel;
}

// ---------------------------------------------------------------------------
// Methods

enum class MethodKind { Ktcf, Wachter, DiceLike };

struct MethodSpec {
  std::string name;
  MethodKind kind = MethodKind::Ktcf;
  CfConfig cfg;
  std::size_t dice_k = 3;
};

inline std::string_view kind_label(MethodKind k) {
  switch (k) {
  case MethodKind::Ktcf: return "KTCF";
  case MethodKind::Wachter: return "Wachter";
  case MethodKind::DiceLike: return "DiCE";
  }
  return "?";
}

inline MethodSpec make_method(MethodKind kind, InitStrategy init, const CfConfig &base) {
  MethodSpec m;
  m.kind = kind;
  m.cfg = base;
  m.cfg.init = init;
  m.name = std::string(kind_label(kind)) + "-" + std::string(to_string(init));
  return m;
}

// Parses "KTCF-rn", "Wachter-rand", "DiCE-rand", ...
inline MethodSpec parse_method(std::string_view name, const CfConfig &base) {
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) {
    throw ConfigError("method '" + std::string(name) + "' must look like KTCF-rn");
  }
  const auto kind_s = name.substr(0, dash);
  const auto init = parse_init_strategy(name.substr(dash + 1));
  for (auto k : {MethodKind::Ktcf, MethodKind::Wachter, MethodKind::DiceLike}) {
    if (kind_label(k) == kind_s) {
      return make_method(k, init, base);
    }
  }
  throw ConfigError("unknown method family '" + std::string(kind_s) +
                    "' (expected KTCF, Wachter or DiCE)");
}

// Runs one method on one instance. For the diverse baseline the first
// (lowest-loss) candidate is the explanation.
inline CfResult run_method(const MethodSpec &method, const KtModel &model, const KcGraph &graph,
                           const LearningHistory &h, std::uint64_t seed) {
  CfConfig cfg = method.cfg;
  cfg.seed = seed;
  switch (method.kind) {
  case MethodKind::Ktcf:
    return generate(model, h, graph, cfg);
  case MethodKind::Wachter:
    return baseline_wachter(model, h, cfg);
  case MethodKind::DiceLike:
    return std::move(baseline_dice_like(model, h, cfg, method.dice_k).front());
  }
  throw ConfigError("unknown method kind");
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkOptions {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct BenchmarkResult {
  std::vector<InstanceRecord> rows; // method-major, instances in list order
  MetricsReport report;
};

inline std::uint64_t instance_seed(std::uint64_t seed, std::int64_t instance_id) {
  return derive_seed(seed, static_cast<std::uint64_t>(instance_id));
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn &&fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        fn(i);
      }
    });
  }
}

} // namespace detail

inline BenchmarkResult run_benchmark(std::span<const Instance> instances, const KtModel &model,
                                     const KcGraph &graph, std::span<const MethodSpec> methods,
                                     const BenchmarkOptions &opt) {
  if (instances.empty()) {
    throw InputError("run_benchmark: no instances");
  }
  if (methods.empty()) {
    throw ConfigError("run_benchmark: no methods");
  }
  for (const auto &m : methods) {
    m.cfg.validate();
  }
  BenchmarkResult out;
  out.rows.resize(methods.size() * instances.size());
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const auto &method = methods[mi];
    detail::parallel_for(instances.size(), opt.workers, [&](std::size_t i) {
      const auto &inst = instances[i];
      auto &row = out.rows[mi * instances.size() + i];
      row.instance_id = inst.instance_id;
      row.method = method.name;
      try {
        row.result = run_method(method, model, graph, inst.history,
                                instance_seed(opt.seed, inst.instance_id));
      } catch (const Error &e) {
        row.error = e.what();
        row.result = CfResult{};
        row.result.r_cf_binary = inst.history.responses;
        row.result.r_cf_relaxed = inst.history.relaxed();
      }
      row.metrics = instance_metrics(inst.history.responses, row.result.r_cf_binary,
                                     row.result.valid);
      row.time_s = row.result.wall_time_seconds;
      row.n_iterations = row.result.iterations_used;
    });
    std::span<const InstanceRecord> slice(out.rows.data() + mi * instances.size(),
                                          instances.size());
    out.report.push_back(aggregate(method.name, slice));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

enum class AblationAxis { LambdaNoise, LambdaTemp, LambdaKc };

inline std::string_view to_string(AblationAxis a) {
  switch (a) {
  case AblationAxis::LambdaNoise: return "lambda_noise";
  case AblationAxis::LambdaTemp: return "lambda_temp";
  case AblationAxis::LambdaKc: return "lambda_kc";
  }
  return "?";
}

inline AblationAxis parse_ablation_axis(std::string_view s) {
  for (auto a : {AblationAxis::LambdaNoise, AblationAxis::LambdaTemp, AblationAxis::LambdaKc}) {
    if (to_string(a) == s) {
      return a;
    }
  }
  throw ConfigError("unknown ablation axis '" + std::string(s) +
                    "' (expected lambda_noise, lambda_temp or lambda_kc)");
}

inline void set_axis(CfConfig &cfg, AblationAxis axis, double value) {
  switch (axis) {
  case AblationAxis::LambdaNoise: cfg.lambda_noise = value; break;
  case AblationAxis::LambdaTemp: cfg.lambda_temp = value; break;
  case AblationAxis::LambdaKc: cfg.lambda_kc = value; break;
  }
}

struct AblationRow {
  double axis_value = 0.0;
  std::string method;
  std::string metric;
  Stat stat;
};

struct AblationResult {
  AblationAxis axis = AblationAxis::LambdaNoise;
  std::vector<AblationRow> rows;
  std::vector<std::pair<double, MetricsReport>> reports;
};

inline std::vector<std::pair<std::string, Stat>> metric_rows(const MethodMetrics &m) {
  return {{"n", {static_cast<double>(m.n), 0.0}},
          {"validity", m.validity},
          {"sparsity", m.sparsity},
          {"sparsity_rate", m.sparsity_rate},
          {"actionability", m.actionability},
          {"actionability_rate", m.actionability_rate},
          {"time_s", m.time_s},
          {"valid_only_sparsity", m.valid_only_sparsity},
          {"valid_only_sparsity_rate", m.valid_only_sparsity_rate}};
}

inline AblationResult run_ablation(AblationAxis axis, std::span<const double> values,
                                   std::span<const Instance> instances, const KtModel &model,
                                   const KcGraph &graph, std::span<const MethodSpec> methods,
                                   const BenchmarkOptions &opt) {
  if (values.empty()) {
    throw ConfigError("run_ablation: empty value list");
  }
  AblationResult out;
  out.axis = axis;
  for (double v : values) {
    std::vector<MethodSpec> swept(methods.begin(), methods.end());
    for (auto &m : swept) {
      set_axis(m.cfg, axis, v);
    }
    auto bench = run_benchmark(instances, model, graph, swept, opt);
    for (const auto &mm : bench.report) {
      for (const auto &[metric, stat] : metric_rows(mm)) {
        out.rows.push_back({v, mm.method, metric, stat});
      }
    }
    out.reports.emplace_back(v, std::move(bench.report));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV and table output. Reals are written in shortest round-trip form.

inline std::string csv_number(double v) { return detail::format_double(v); }

inline void write_instance_csv(std::span<const InstanceRecord> rows, std::ostream &out) {
  out << "instance_id,method,valid,sparsity,sparsity_rate,actionability,actionability_rate,"
         "time_s,n_iterations\n";
  for (const auto &r : rows) {
    out << r.instance_id << ',' << r.method << ',' << (r.metrics.valid ? 1 : 0) << ','
        << csv_number(r.metrics.sparsity) << ',' << csv_number(r.metrics.sparsity_rate) << ','
        << csv_number(r.metrics.actionability) << ','
        << csv_number(r.metrics.actionability_rate) << ',' << csv_number(r.time_s) << ','
        << r.n_iterations << '\n';
  }
}

inline void write_aggregate_csv(const MetricsReport &report, std::ostream &out) {
  out << "method,metric,mean,std\n";
  for (const auto &m : report) {
    for (const auto &[metric, stat] : metric_rows(m)) {
      out << m.method << ',' << metric << ',' << csv_number(stat.mean) << ','
          << csv_number(stat.std) << '\n';
    }
  }
}

inline void write_ablation_csv(const AblationResult &a, std::ostream &out) {
  out << "axis_value,method,metric,mean,std\n";
  for (const auto &r : a.rows) {
    out << csv_number(r.axis_value) << ',' << r.method << ',' << r.metric << ','
        << csv_number(r.stat.mean) << ',' << csv_number(r.stat.std) << '\n';
  }
}

// Fixed-width text table: validity, sparsity, rates and time as mean±std.
inline std::string format_table(const MetricsReport &report) {
  std::ostringstream os;
  auto cell = [](const Stat &s) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(3) << s.mean << "±" << std::setprecision(2) << s.std;
    return c.str();
  };
  os << std::left << std::setw(16) << "Method" << std::setw(16) << "Validity" << std::setw(18)
     << "Sparsity" << std::setw(16) << "SparsityRate" << std::setw(18) << "Actionability"
     << std::setw(18) << "ActionRate" << "Time(s)\n";
  for (const auto &m : report) {
    // '±' is two bytes in UTF-8; widen the fields to keep columns aligned
    os << std::left << std::setw(16) << m.method << std::setw(17) << cell(m.validity)
       << std::setw(19) << cell(m.sparsity) << std::setw(17) << cell(m.sparsity_rate)
       << std::setw(19) << cell(m.actionability) << std::setw(19)
       << cell(m.actionability_rate) << cell(m.time_s) << '\n';
  }
  return os.str();
}

} // namespace ktcf
