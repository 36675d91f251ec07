#pragma once

// Command-line front end: gen-data, train, explain, bench, ablate.
// Every command writes its outputs through temp-file-then-rename and records a
// RunManifest (manifest_<command>.json) next to them.

#include "ktcf/ktcf.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace ktcf::cli {

inline constexpr const char *kToolVersion = "0.1.0";

// Invalid flag value or combination; reported with exit code 2.
class UsageError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_file_atomic(const fs::path &path, std::string_view content) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write " + tmp.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path);
}

// Collects outputs in memory and publishes them only when the command
// succeeded.
class OutputSet {
public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string &name, std::string content) {
    files_.emplace_back(dir_ / name, std::move(content));
  }
  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    for (const auto &[p, c] : files_) {
      out.push_back(p.string());
    }
    return out;
  }
  void commit() const {
    for (const auto &[p, c] : files_) {
      write_file_atomic(p, c);
    }
  }
  const fs::path &dir() const noexcept { return dir_; }

private:
  fs::path dir_;
  std::vector<std::pair<fs::path, std::string>> files_;
};

struct RunManifest {
  std::string command;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  std::vector<std::string> outputs;
  std::vector<std::string> argv;
  std::string start_time;
  std::string end_time;

  std::string dump() const {
    json j = {{"command", command},       {"tool_version", kToolVersion},
              {"config", config},         {"seeds", seeds},
              {"inputs", inputs},         {"outputs", outputs},
              {"argv", argv},             {"start_time", start_time},
              {"end_time", end_time}};
    return j.dump(2) + "\n";
  }
};

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t> &flag) {
  if (flag) {
    return *flag;
  }
  if (const char *env = std::getenv("KTCF_SEED"); env && *env) {
    std::uint64_t v = 0;
    if (!detail::parse_number(std::string(env), v)) {
      throw UsageError("KTCF_SEED must be a non-negative integer");
    }
    return v;
  }
  return 0;
}

inline std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(' ');
    const auto e = cur.find_last_not_of(' ');
    if (b != std::string::npos) {
      out.push_back(cur.substr(b, e - b + 1));
    }
  }
  return out;
}

inline std::vector<double> parse_values(const std::string &s) {
  std::vector<double> out;
  for (const auto &tok : split_list(s)) {
    double v = 0.0;
    if (!detail::parse_number(tok, v)) {
      throw UsageError("not a number: '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

// "index name" per line; '#' starts a comment.
inline std::map<Kc, std::string> load_labels(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open label file " + path.string());
  }
  std::map<Kc, std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    std::string idx;
    ls >> idx;
    if (idx.empty()) {
      continue;
    }
    Kc kc = 0;
    if (!detail::parse_number(idx, kc)) {
      throw ParseError(line_no, "expected '<kc index> <name>'");
    }
    std::string name;
    std::getline(ls >> std::ws, name);
    labels[kc] = name;
  }
  return labels;
}

inline json cf_config_json(const CfConfig &c) {
  return {{"lambda_spar", c.lambda_spar}, {"lambda_kc", c.lambda_kc},
          {"n_iter", c.n_iter},           {"eta", c.eta},
          {"tau", c.tau},                 {"init", std::string(to_string(c.init))},
          {"lambda_noise", c.lambda_noise}, {"lambda_cc", c.lambda_cc},
          {"lambda_temp", c.lambda_temp}, {"diversity_weight", c.diversity_weight}};
}

inline void add_cf_flags(CLI::App &app, CfConfig &cfg, std::size_t &dice_k) {
  app.add_option("--lambda-spar", cfg.lambda_spar, "Sparsity weight")->capture_default_str();
  app.add_option("--lambda-kc", cfg.lambda_kc, "KC-distance weight")->capture_default_str();
  app.add_option("--eta", cfg.eta, "Adam step size")->capture_default_str();
  app.add_option("--n-iter", cfg.n_iter, "Maximum iterations")->capture_default_str();
  app.add_option("--tau", cfg.tau, "Early-stop loss threshold")->capture_default_str();
  app.add_option("--lambda-noise", cfg.lambda_noise, "Noise scale for rn init")
      ->capture_default_str();
  app.add_option("--lambda-cc", cfg.lambda_cc, "Mixing weight for cc init")
      ->capture_default_str();
  app.add_option("--lambda-temp", cfg.lambda_temp, "Temperature for gs init")
      ->capture_default_str();
  app.add_option("--diversity-weight", cfg.diversity_weight, "Diversity bonus for DiCE")
      ->capture_default_str();
  app.add_option("--dice-k", dice_k, "Number of DiCE candidates")->capture_default_str();
}

inline void check_baseline_init(const MethodSpec &m) {
  if (m.kind != MethodKind::Ktcf && m.cfg.init != InitStrategy::RandomBinary) {
    throw UsageError("baselines only support --init rand (got " + m.name + ")");
  }
}

// Expands --methods/--inits into method specs. Families (KTCF, Wachter,
// DiCE) pick up every KTCF init in `inits`; baselines always use rand. Full
// names such as KTCF-gs are taken as given.
inline std::vector<MethodSpec> expand_methods(const std::string &methods,
                                              const std::string &inits, const CfConfig &base,
                                              std::size_t dice_k) {
  std::vector<MethodSpec> out;
  for (const auto &name : split_list(methods)) {
    if (name.find('-') != std::string::npos) {
      out.push_back(parse_method(name, base));
    } else if (name == "KTCF") {
      for (const auto &init : split_list(inits)) {
        out.push_back(make_method(MethodKind::Ktcf, parse_init_strategy(init), base));
      }
    } else if (name == "Wachter") {
      out.push_back(make_method(MethodKind::Wachter, InitStrategy::RandomBinary, base));
    } else if (name == "DiCE") {
      out.push_back(make_method(MethodKind::DiceLike, InitStrategy::RandomBinary, base));
    } else {
      throw UsageError("unknown method '" + name + "'");
    }
  }
  if (out.empty()) {
    throw UsageError("no methods selected");
  }
  for (auto &m : out) {
    m.dice_k = dice_k;
    check_baseline_init(m);
  }
  return out;
}

inline std::string kc_list(std::span<const Kc> kcs) {
  std::string s = "[";
  for (std::size_t i = 0; i < kcs.size(); ++i) {
    s += (i ? ", " : "") + std::to_string(kcs[i]);
  }
  return s + "]";
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

struct Context {
  std::vector<std::string> argv;
  std::ostream &out;
  std::ostream &err;
};

inline void finish(RunManifest &manifest, OutputSet &outputs, const std::string &start) {
  manifest.start_time = start;
  manifest.outputs = outputs.paths();
  manifest.outputs.push_back((outputs.dir() / ("manifest_" + manifest.command + ".json")).string());
  manifest.end_time = utc_timestamp();
  outputs.add("manifest_" + manifest.command + ".json", manifest.dump());
  outputs.commit();
}

inline int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Counterfactual explanations for knowledge-tracing models", "ktcf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  std::optional<std::uint64_t> seed_flag;

  // gen-data
  auto *gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and KC graph");
  SyntheticConfig syn;
  std::string gen_out, graph_style = "random_tree_plus";
  std::optional<double> p_init;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n-students", syn.n_students)->capture_default_str();
  gen->add_option("--num-kcs,--K", syn.num_kcs)->capture_default_str();
  gen->add_option("--min-len", syn.min_length)->capture_default_str();
  gen->add_option("--max-len", syn.max_length)->capture_default_str();
  gen->add_option("--graph-style", graph_style)
      ->check(CLI::IsMember({"random_tree_plus", "clustered"}))
      ->capture_default_str();
  gen->add_option("--p-init", p_init, "Fixed initial mastery (default: Beta draw)");
  gen->add_option("--p-init-alpha", syn.p_init_alpha)->capture_default_str();
  gen->add_option("--p-init-beta", syn.p_init_beta)->capture_default_str();
  gen->add_option("--mastery-concentration", syn.mastery_concentration)->capture_default_str();
  gen->add_option("--learn-rate", syn.learn_rate)->capture_default_str();
  gen->add_option("--learn-on-correct-only", syn.learn_on_correct_only,
                  "Mastery grows only after correct answers (true|false)")
      ->capture_default_str();
  gen->add_option("--slip", syn.slip)->capture_default_str();
  gen->add_option("--guess", syn.guess)->capture_default_str();
  gen->add_option("--locality", syn.locality)->capture_default_str();
  gen->add_option("--repeat", syn.repeat, "Stay probability on a local step (<0: uniform)")
      ->capture_default_str();
  gen->add_option("--seed", seed_flag, "Seed (falls back to $KTCF_SEED, then 0)");

  // train
  auto *trn = app.add_subcommand("train", "Train a knowledge-tracing model");
  TrainConfig tcfg;
  std::string trn_data, trn_out;
  trn->add_option("--dataset", trn_data)->required()->check(CLI::ExistingFile);
  trn->add_option("--out", trn_out, "Output directory")->required();
  trn->add_option("--hidden", tcfg.hidden)->capture_default_str();
  trn->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  trn->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  trn->add_option("--epochs", tcfg.max_epochs)->capture_default_str();
  trn->add_option("--patience", tcfg.patience)->capture_default_str();
  trn->add_option("--heldout-fraction", tcfg.heldout_fraction)->capture_default_str();
  trn->add_option("--seed", seed_flag);

  // shared by explain / bench / ablate
  std::string model_path, graph_path, data_path, labels_path, out_dir;
  auto add_inputs = [&](CLI::App *sub) {
    sub->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    sub->add_option("--graph", graph_path)->required()->check(CLI::ExistingFile);
    sub->add_option("--dataset", data_path)->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed_flag);
  };

  // explain
  auto *exp = app.add_subcommand("explain", "Explain one instance");
  CfConfig ecfg;
  std::size_t edice_k = 3;
  std::int64_t instance_id = 0;
  std::string method_name = "KTCF";
  std::optional<std::string> init_name;
  add_inputs(exp);
  exp->add_option("--instance-id", instance_id, "student_id of the history to explain")
      ->required();
  exp->add_option("--method", method_name)
      ->check(CLI::IsMember({"KTCF", "Wachter", "DiCE"}))
      ->capture_default_str();
  exp->add_option("--init", init_name, "rn|rand|sr|cc|gs (default rn for KTCF, rand otherwise)");
  exp->add_option("--kc-labels", labels_path)->check(CLI::ExistingFile);
  add_cf_flags(*exp, ecfg, edice_k);

  // bench
  auto *bench = app.add_subcommand("bench", "Benchmark methods on selected instances");
  CfConfig bcfg;
  std::size_t bdice_k = 3, n_instances = 200, workers = 1;
  double fraction = 0.45;
  bool single_worker = false;
  std::string methods = "Wachter,DiCE,KTCF", inits = "rn,rand,sr,cc,gs";
  add_inputs(bench);
  bench->add_option("--methods", methods, "Comma list: families or full names")
      ->capture_default_str();
  bench->add_option("--inits", inits, "KTCF initializations")->capture_default_str();
  bench->add_option("--n-instances", n_instances)->capture_default_str();
  bench->add_option("--fraction-incorrect", fraction)->capture_default_str();
  bench->add_option("--workers", workers)->capture_default_str();
  bench->add_flag("--single-worker", single_worker, "Force one worker (honest timing)");
  add_cf_flags(*bench, bcfg, bdice_k);

  // ablate
  auto *abl = app.add_subcommand("ablate", "Sweep one hyperparameter");
  CfConfig acfg;
  std::size_t adice_k = 3, an_instances = 200, aworkers = 1;
  double afraction = 0.45;
  std::string axis_name, values_s, amethods;
  add_inputs(abl);
  abl->add_option("--axis", axis_name)
      ->required()
      ->check(CLI::IsMember({"lambda_noise", "lambda_temp", "lambda_kc"}));
  abl->add_option("--values", values_s, "Comma-separated values")->required();
  abl->add_option("--methods", amethods, "Full method names (default by axis)");
  abl->add_option("--n-instances", an_instances)->capture_default_str();
  abl->add_option("--fraction-incorrect", afraction)->capture_default_str();
  abl->add_option("--workers", aworkers)->capture_default_str();
  add_cf_flags(*abl, acfg, adice_k);

  std::vector<const char *> cargv;
  cargv.push_back("ktcf");
  for (const auto &a : args) {
    cargv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::Success &e) {
    std::ostringstream o;
    app.exit(e, o, o);
    out << o.str();
    return 0;
  } catch (const CLI::ParseError &e) {
    std::ostringstream o;
    const int code = app.exit(e, o, o);
    err << o.str();
    return code == 0 ? 0 : 2;
  }

  const std::string start = utc_timestamp();
  RunManifest manifest;
  manifest.argv = args;

  try {
    const std::uint64_t seed = resolve_seed(seed_flag);
    manifest.seeds["seed"] = seed;

    if (gen->parsed()) {
      syn.graph_style = parse_graph_style(graph_style);
      syn.p_init = p_init;
      syn.seed = seed;
      manifest.command = "gen-data";
      auto data = generate_dataset(syn);
      OutputSet outputs(gen_out);
      std::ostringstream ds, gs;
      write_dataset(data.dataset, ds);
      write_graph(data.graph, gs);
      outputs.add("dataset.jsonl", ds.str());
      outputs.add("graph.txt", gs.str());
      manifest.config = {{"n_students", syn.n_students},
                         {"K", syn.num_kcs},
                         {"min_len", syn.min_length},
                         {"max_len", syn.max_length},
                         {"graph_style", graph_style},
                         {"p_init", p_init ? json(*p_init) : json(nullptr)},
                         {"p_init_alpha", syn.p_init_alpha},
                         {"p_init_beta", syn.p_init_beta},
                         {"mastery_concentration", syn.mastery_concentration},
                         {"learn_rate", syn.learn_rate},
                         {"learn_on_correct_only", syn.learn_on_correct_only},
                         {"slip", syn.slip},
                         {"guess", syn.guess},
                         {"locality", syn.locality},
                         {"repeat", syn.repeat}};
      finish(manifest, outputs, start);
      std::size_t n_resp = 0, n_correct = 0;
      for (const auto &s : data.dataset.students) {
        n_resp += s.history.size();
        for (int r : s.history.responses) {
          n_correct += static_cast<std::size_t>(r);
        }
      }
      out << "wrote " << data.dataset.students.size() << " students, " << data.graph.num_nodes()
          << " KCs, " << data.graph.num_edges() << " edges; mean correctness "
          << fixed6(static_cast<double>(n_correct) / static_cast<double>(n_resp)) << "\n";
      return 0;
    }

    if (trn->parsed()) {
      manifest.command = "train";
      manifest.inputs["dataset"] = trn_data;
      const auto data = load_dataset(trn_data);
      const auto histories = data.histories();
      auto result = train(histories, data.num_kcs, tcfg, seed);
      const auto &rep = result.report;
      json report = {{"n_train", rep.n_train},
                     {"n_heldout", rep.n_heldout},
                     {"epochs_run", rep.epochs_run},
                     {"best_epoch", rep.best_epoch},
                     {"train_loss", rep.train_loss},
                     {"heldout_loss", rep.heldout_loss},
                     {"heldout_accuracy", rep.heldout_accuracy},
                     {"heldout_auc", rep.heldout_auc},
                     {"marginal_baseline_auc", rep.marginal_baseline_auc},
                     {"heldout_loss_trace", rep.heldout_loss_trace}};
      OutputSet outputs(trn_out);
      outputs.add("model.bin", serialize_model(result.model));
      outputs.add("train_report.json", report.dump(2) + "\n");
      manifest.config = {{"hidden", tcfg.hidden},         {"lr", tcfg.learning_rate},
                         {"batch_size", tcfg.batch_size}, {"epochs", tcfg.max_epochs},
                         {"patience", tcfg.patience},     {"heldout_fraction", tcfg.heldout_fraction},
                         {"K", data.num_kcs}};
      finish(manifest, outputs, start);
      out << "held-out AUC " << fixed6(rep.heldout_auc) << " (marginal baseline "
          << fixed6(rep.marginal_baseline_auc) << "), accuracy " << fixed6(rep.heldout_accuracy)
          << ", epochs " << rep.epochs_run << "\n";
      return 0;
    }

    // explain / bench / ablate share inputs
    manifest.inputs = {{"model", model_path}, {"graph", graph_path}, {"dataset", data_path}};
    const auto model = load_model(model_path);
    const auto graph = load_graph(graph_path);
    const auto data = load_dataset(data_path);
    if (data.num_kcs != model.num_kcs() || graph.num_nodes() < model.num_kcs()) {
      throw InputError("model, graph and dataset disagree on the number of KCs");
    }

    if (exp->parsed()) {
      manifest.command = "explain";
      const auto family = method_name == "KTCF"      ? MethodKind::Ktcf
                          : method_name == "Wachter" ? MethodKind::Wachter
                                                     : MethodKind::DiceLike;
      const auto init = init_name ? parse_init_strategy(*init_name)
                        : family == MethodKind::Ktcf ? InitStrategy::GaussianNoise
                                                     : InitStrategy::RandomBinary;
      auto method = make_method(family, init, ecfg);
      method.dice_k = edice_k;
      check_baseline_init(method);
      const StudentRecord *rec = nullptr;
      for (const auto &s : data.students) {
        if (s.student_id == instance_id) {
          rec = &s;
        }
      }
      if (!rec) {
        throw InputError("no student with id " + std::to_string(instance_id));
      }
      std::map<Kc, std::string> labels;
      if (!labels_path.empty()) {
        labels = load_labels(labels_path);
        manifest.inputs["kc_labels"] = labels_path;
      }
      const auto &h = rec->history;
      const std::uint64_t iseed = instance_seed(seed, instance_id);
      manifest.seeds["instance_seed"] = iseed;
      const double before = predict_target(model, h);
      const auto res = run_method(method, model, graph, h, iseed);
      const Kc target = h.target_kc();
      const auto raw = discovery_order(h.responses, res.r_cf_binary, h.kcs, target);
      const auto pl = plan(h.responses, res.r_cf_binary, h.kcs, graph, target);
      const auto im = instance_metrics(h.responses, res.r_cf_binary, res.valid);

      std::vector<Kc> changed_kcs;
      for (auto t : res.changed_indices) {
        changed_kcs.push_back(h.kcs[t]);
      }
      auto label = [&](Kc kc) {
        auto it = labels.find(kc);
        return it == labels.end() ? "KC " + std::to_string(kc)
                                  : it->second + " (KC " + std::to_string(kc) + ")";
      };
      std::ostringstream os;
      os << "instance_id: " << instance_id << "\n"
         << "method: " << method.name << "\n"
         << "target_kc: " << target << "\n"
         << "target_step: " << h.size() - 1 << "\n"
         << "prediction_before: " << fixed6(before) << "\n"
         << "prediction_after: " << fixed6(res.target_probability) << "\n"
         << "valid: " << (res.valid ? "true" : "false") << "\n"
         << "iterations: " << res.iterations_used << "\n"
         << "sparsity: " << im.sparsity << "\n"
         << "actionability: " << im.actionability << "\n"
         << "changed_indices: " << kc_list(res.changed_indices) << "\n"
         << "changed_kcs: " << kc_list(changed_kcs) << "\n"
         << "discovery_order: " << kc_list(raw) << "\n"
         << "instruction_path: " << kc_list(pl.ordered_kcs) << "\n"
         << "path_distance_before: " << csv_number(ordered_total_distance(raw, graph)) << "\n"
         << "path_distance_after: " << csv_number(pl.total_path_distance) << "\n"
         << "\nStudy plan:\n";
      for (std::size_t i = 0; i < pl.ordered_kcs.size(); ++i) {
        os << "  " << i + 1 << ". " << label(pl.ordered_kcs[i])
           << (pl.ordered_kcs[i] == target ? "  <- target" : "") << "\n";
      }
      OutputSet outputs(out_dir);
      outputs.add("explanation.txt", os.str());
      manifest.config = cf_config_json(method.cfg);
      manifest.config["method"] = method.name;
      manifest.config["instance_id"] = instance_id;
      manifest.config["dice_k"] = edice_k;
      manifest.config["wall_time_seconds"] = res.wall_time_seconds;
      finish(manifest, outputs, start);
      out << os.str();
      return 0;
    }

    const bool is_bench = bench->parsed();
    const auto &cfg = is_bench ? bcfg : acfg;
    cfg.validate();
    SelectionOptions sopt{is_bench ? fraction : afraction, is_bench ? n_instances : an_instances,
                          seed};
    const auto sel = select_instances(data, model, sopt);
    if (sel.instances.empty()) {
      err << "error: no eligible instances (rule: more than " << sopt.fraction_incorrect * 100
          << "% incorrect responses, last response incorrect, and model prediction <= 0.5 on "
             "the last step)\n";
      return 1;
    }
    if (sel.insufficient) {
      err << "warning: only " << sel.eligible << " eligible instances (requested "
          << sopt.n_instances << ")\n";
    }
    BenchmarkOptions bopt{seed, single_worker ? std::size_t{1} : (is_bench ? workers : aworkers)};
    manifest.config = cf_config_json(cfg);
    manifest.config["n_instances"] = sopt.n_instances;
    manifest.config["fraction_incorrect"] = sopt.fraction_incorrect;
    manifest.config["workers"] = bopt.workers;
    manifest.config["eligible"] = sel.eligible;
    manifest.config["selected"] = sel.instances.size();

    if (is_bench) {
      manifest.command = "bench";
      const auto specs = expand_methods(methods, inits, bcfg, bdice_k);
      manifest.config["methods"] = methods;
      manifest.config["inits"] = inits;
      manifest.config["dice_k"] = bdice_k;
      const auto result = run_benchmark(sel.instances, model, graph, specs, bopt);
      std::ostringstream inst, agg;
      write_instance_csv(result.rows, inst);
      write_aggregate_csv(result.report, agg);
      const auto table = format_table(result.report);
      OutputSet outputs(out_dir);
      outputs.add("instances.csv", inst.str());
      outputs.add("aggregate.csv", agg.str());
      outputs.add("table.txt", table);
      finish(manifest, outputs, start);
      out << table;
      return 0;
    }

    manifest.command = "ablate";
    const auto axis = parse_ablation_axis(axis_name);
    const auto values = parse_values(values_s);
    if (values.empty()) {
      throw UsageError("--values is empty");
    }
    if (amethods.empty()) {
      amethods = axis == AblationAxis::LambdaTemp  ? "KTCF-gs"
                 : axis == AblationAxis::LambdaKc ? "KTCF-rn,KTCF-gs"
                                                  : "KTCF-rn";
    }
    const auto specs = expand_methods(amethods, "rn", acfg, adice_k);
    manifest.config["axis"] = axis_name;
    manifest.config["values"] = values;
    manifest.config["methods"] = amethods;
    const auto result = run_ablation(axis, values, sel.instances, model, graph, specs, bopt);
    std::ostringstream csv;
    write_ablation_csv(result, csv);
    OutputSet outputs(out_dir);
    outputs.add("ablation.csv", csv.str());
    finish(manifest, outputs, start);
    for (const auto &[v, report] : result.reports) {
      out << axis_name << " = " << csv_number(v) << "\n" << format_table(report);
    }
    return 0;
  } catch (const ConfigError &e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace ktcf::cli
