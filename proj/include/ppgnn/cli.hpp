#pragma once

#include <chrono>
#include <ctime>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppgnn/approx.hpp"
#include "ppgnn/csbm.hpp"
#include "ppgnn/io.hpp"
#include "ppgnn/train.hpp"

namespace ppgnn {

inline constexpr const char* kVersion = "0.1.0";

namespace cli {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run record written as `<out>.manifest.json`.
struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string started_at = utc_now();

  void add_input(const fs::path& p) { inputs[p.string()] = sha256_file(p); }
  void add_output(const fs::path& p) { outputs[p.string()] = sha256_file(p); }

  void write(const fs::path& out) const {
    Json j{{"command", command},     {"config", config},         {"inputs", inputs},
           {"outputs", outputs},     {"seed", seed},             {"version", kVersion},
           {"started_at", started_at}, {"finished_at", utc_now()}};
    fs::path target = out;
    if (target.filename().empty()) target = target.parent_path();
    write_file(target.string() + ".manifest.json", dump_json(j) + "\n");
  }
};

inline void add_dataset_inputs(RunManifest& m, const fs::path& dir) {
  for (const char* f : {"edges.tsv", "features.tsv", "labels.tsv", "splits.json"}) m.add_input(dir / f);
}

struct Flags {
  std::string dataset, eigen, checkpoint, out;
  std::uint64_t seed = 0;
  Index k_low = 16, k_high = 16;
  double tol = 1e-8;
  std::string method = "lanczos";
  Index bins_low = 2, bins_high = 2;
  int order = 3, gpr_order = 10;
  std::string eta = "0.5";
  std::string init = "ppr";
  double alpha = 0.1;
  double lr = 0.01, weight_decay = 5e-4, dropout = 0.5, boundary_weight = 0.0;
  int max_epochs = 1000, patience = 200;
  Index hidden = 64;
  int trials = 200;
  std::string powers = "1,2,4,8,16,32,64";
  Index grid = 1000;
  // synth
  Index nodes = 300;
  int classes = 2;
  double p_in = 0.05, p_out = 0.01, separation = 1.0;
  Index feat_dim = 8;
};

inline std::vector<double> parse_list(const std::string& s, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) throw ValidationError(std::string(flag) + ": empty list entry");
    out.push_back(detail::parse_double(tok, flag));
  }
  if (out.empty()) throw ValidationError(std::string(flag) + ": empty list");
  return out;
}

/// `--eta a` sets eta_low = eta_high = a and eta_gpr = 1 - a; `--eta l,h,g`
/// sets all three.
inline void apply_eta(FilterConfig& fc, const std::string& s) {
  const auto v = parse_list(s, "--eta");
  if (v.size() == 1) {
    fc.eta_low = fc.eta_high = v[0];
    fc.eta_gpr = 1.0 - v[0];
  } else if (v.size() == 3) {
    fc.eta_low = v[0];
    fc.eta_high = v[1];
    fc.eta_gpr = v[2];
  } else {
    throw ValidationError("--eta takes one value or three comma-separated values");
  }
}

inline TrainConfig train_config(const Flags& f) {
  TrainConfig c;
  c.lr = f.lr;
  c.weight_decay = f.weight_decay;
  c.dropout = f.dropout;
  c.boundary_weight = f.boundary_weight;
  c.max_epochs = f.max_epochs;
  c.patience = std::min(f.patience, f.max_epochs);
  c.seed = f.seed;
  c.hidden = f.hidden;
  c.filter.bins_low = f.bins_low;
  c.filter.bins_high = f.bins_high;
  c.filter.order = f.order;
  c.filter.gpr_order = f.gpr_order;
  c.filter.init = parse_init_scheme(f.init);
  c.filter.alpha = f.alpha;
  apply_eta(c.filter, f.eta);
  c.validate();
  return c;
}

inline Json config_json(const TrainConfig& c) {
  return Json{{"lr", c.lr},
              {"lr_decay", c.lr_decay},
              {"lr_decay_every", c.lr_decay_every},
              {"weight_decay", c.weight_decay},
              {"dropout", c.dropout},
              {"boundary_weight", c.boundary_weight},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"hidden", c.hidden},
              {"seed", c.seed},
              {"k_extreme", c.filter.k_extreme},
              {"bins_low", c.filter.bins_low},
              {"bins_high", c.filter.bins_high},
              {"order", c.filter.order},
              {"gpr_order", c.filter.gpr_order},
              {"eta_low", c.filter.eta_low},
              {"eta_high", c.filter.eta_high},
              {"eta_gpr", c.filter.eta_gpr},
              {"init", to_string(c.filter.init)},
              {"alpha", c.filter.alpha}};
}

/// Loads a cached eigensystem and rejects it unless it was computed from
/// this dataset's edges.tsv.
inline EigenSystem load_cached_system(const fs::path& cache, const fs::path& dataset, const Dataset& ds) {
  const EigenCache c = read_eigen_cache(cache);
  if (c.key.edges_sha256 != make_cache_key(read_file(dataset / "edges.tsv"), 0.0).edges_sha256) {
    throw ValidationError("eigen cache " + cache.string() + " was computed from a different edges.tsv");
  }
  if (c.system.source_n != ds.num_nodes()) throw ValidationError("eigen cache node count differs from dataset");
  return c.system;
}

inline EigenSystem compute_system(const Dataset& ds, const NormalizedGraph& ng, const Flags& f) {
  if (f.method == "dense") {
    const EigenSystem full = dense_eigh(ng.to_dense());
    if (f.k_low == 0 && f.k_high == 0) return full;
    if (f.k_low + f.k_high > ds.num_nodes()) throw ValidationError("k_low + k_high exceeds n");
    return extreme_bands(full, f.k_low, f.k_high);
  }
  if (f.method != "lanczos") throw ValidationError("unknown method '" + f.method + "' (expected lanczos or dense)");
  return lanczos_extreme(ng, f.k_low, f.k_high, f.tol, 0, f.seed);
}

inline int cmd_eigen(const Flags& f) {
  RunManifest m{"eigen"};
  m.seed = f.seed;
  m.config = {{"k_low", f.k_low}, {"k_high", f.k_high}, {"tol", f.tol}, {"method", f.method}};
  const fs::path dir = f.dataset;
  const Dataset ds = load_dataset(dir);
  add_dataset_inputs(m, dir);
  const EigenCacheKey key = make_cache_key(read_file(dir / "edges.tsv"), f.tol);

  bool fresh = false;
  if (fs::exists(f.out)) {
    try {
      const EigenCache c = read_eigen_cache(f.out);
      const bool full = f.method == "dense" && f.k_low == 0 && f.k_high == 0;
      const bool counts = full ? c.system.complete
                               : (c.system.bottom_count == f.k_low && c.system.top_count == f.k_high);
      fresh = c.key == key && counts && c.system.source_n == ds.num_nodes();
    } catch (const IoError&) {
      fresh = false;
    }
  }
  if (!fresh) {
    const EigenSystem es = compute_system(ds, sym_normalize(ds.graph), f);
    write_eigen_cache(f.out, es, key);
  }
  m.config["cache_hit"] = fresh;
  m.add_output(f.out);
  m.write(f.out);
  std::cout << (fresh ? "cache up to date: " : "wrote ") << f.out << "\n";
  return 0;
}

inline int cmd_train(const Flags& f) {
  const TrainConfig cfg = train_config(f);
  RunManifest m{"train", config_json(cfg)};
  m.seed = f.seed;
  const fs::path dir = f.dataset;
  const Dataset ds = load_dataset(dir);
  add_dataset_inputs(m, dir);
  const NormalizedGraph ng = sym_normalize(ds.graph);
  const EigenSystem es = load_cached_system(f.eigen, dir, ds);
  m.add_input(f.eigen);

  std::string log;
  const TrainResult r = train_loop(ds, ng, es, cfg, [&](const EpochRecord& e) {
    log += dump_json(Json{{"epoch", e.epoch}, {"loss", e.loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc},
                          {"lr", e.lr}}) +
           "\n";
  });
  const Json summary{{"summary", true},
                     {"best_epoch", r.best_epoch},
                     {"best_val_acc", r.best_val_acc},
                     {"best_val_loss", r.best_val_loss},
                     {"test_acc", r.test_acc_at_best_val},
                     {"train_acc", r.train_acc_at_best_val},
                     {"epochs_run", r.epochs_run}};
  log += dump_json(summary) + "\n";

  const fs::path log_path = f.out + ".log.jsonl";
  write_checkpoint(f.out, {r.best_params, f.seed, cfg.filter.k_extreme});
  write_file(log_path, log);
  m.add_output(f.out);
  m.add_output(log_path);
  m.write(f.out);
  std::cout << dump_json(summary) << "\n";
  return 0;
}

inline int cmd_eval(const Flags& f) {
  RunManifest m{"eval"};
  const fs::path dir = f.dataset;
  const Dataset ds = load_dataset(dir);
  const Checkpoint c = read_checkpoint(f.checkpoint);
  m.seed = c.seed;
  const EigenSystem es = band_system(load_cached_system(f.eigen, dir, ds), c.k_extreme);
  const Metrics met = evaluate(c.params, ds, sym_normalize(ds.graph), es);
  const std::string out = dump_json(Json{{"train_acc", met.train_acc},
                                         {"val_acc", met.val_acc},
                                         {"test_acc", met.test_acc},
                                         {"val_loss", met.val_loss}}) +
                          "\n";
  std::cout << out;
  if (!f.out.empty()) {
    add_dataset_inputs(m, dir);
    m.add_input(f.eigen);
    m.add_input(f.checkpoint);
    write_file(f.out, out);
    m.add_output(f.out);
    m.write(f.out);
  }
  return 0;
}

inline int cmd_respond(const Flags& f) {
  RunManifest m{"respond"};
  const Checkpoint c = read_checkpoint(f.checkpoint);
  m.seed = c.seed;
  const EigenSystem es = band_system(read_eigen_cache(f.eigen).system, c.k_extreme);
  write_file(f.out, frequency_response_csv(es.eigenvalues, freq_response(c.params.filter, es)));
  m.add_input(f.checkpoint);
  m.add_input(f.eigen);
  m.add_output(f.out);
  m.write(f.out);
  return 0;
}

inline int cmd_oversmooth(const Flags& f) {
  RunManifest m{"oversmooth", Json{{"powers", f.powers}}};
  const fs::path dir = f.dataset;
  const Dataset ds = load_dataset(dir);
  const NormalizedGraph ng = sym_normalize(ds.graph);
  std::vector<int> powers;
  for (double p : parse_list(f.powers, "--powers")) {
    if (p < 0 || p != std::floor(p)) throw ValidationError("--powers entries must be nonnegative integers");
    powers.push_back(static_cast<int>(p));
  }
  std::string csv = "power,mean_pairwise_distance,mean_variance\n";
  Matrix x = ds.features;
  int at = 0;
  std::vector<int> sorted = powers;
  std::sort(sorted.begin(), sorted.end());
  std::map<int, std::pair<double, double>> rows;
  for (int p : sorted) {
    x = apply_power(ng, x, p - at);
    at = p;
    rows[p] = {pairwise_distance_mean(x), feature_variance_mean(x)};
  }
  for (int p : powers) csv += std::to_string(p) + ',' + format_double(rows[p].first) + ',' + format_double(rows[p].second) + '\n';
  if (f.out.empty()) {
    std::cout << csv;
    return 0;
  }
  add_dataset_inputs(m, dir);
  write_file(f.out, csv);
  m.add_output(f.out);
  m.write(f.out);
  return 0;
}

inline int cmd_waveform(const Flags& f) {
  RunManifest m{"waveform", Json{{"degree", f.gpr_order}, {"adaptive_degree", f.order}, {"pieces", f.bins_low},
                                 {"grid", f.grid}}};
  m.seed = f.seed;
  const WaveformResult r = waveform_experiment(f.seed, f.grid, f.gpr_order, f.order, f.bins_low);
  const std::string out = dump_json(Json{{"rmse_single", r.rmse_single}, {"rmse_multi", r.rmse_multi}}) + "\n";
  std::cout << out;
  if (!f.out.empty()) {
    write_file(f.out, out);
    m.add_output(f.out);
    m.write(f.out);
  }
  return 0;
}

inline int cmd_thm_check(const Flags& f) {
  RunManifest m{"thm-check", Json{{"trials", f.trials}}};
  m.seed = f.seed;
  std::string report;
  const Thm41SuiteReport rep = run_thm41_suite(f.trials, f.seed);
  const bool dominance = rep.violations == 0 && rep.max_decomposition_rel_err <= 1e-9;
  report += std::string(dominance ? "PASS" : "FAIL") + " error-dominance trials=" + std::to_string(rep.trials) +
            " violations=" + std::to_string(rep.violations) + " max_gap=" + format_double(rep.max_gap) +
            " max_decomposition_rel_err=" + format_double(rep.max_decomposition_rel_err) + "\n";

  bool dims_ok = true;
  std::string dims_detail;
  const int cases[3][4] = {{1, 1, 2, 10}, {10, 5, 10, 50}, {2, 2, 3, 12}};
  for (const auto& c : cases) {
    const DimensionCheck d = run_dimension_check(c[0], c[1], c[2], c[3], f.seed);
    dims_ok = dims_ok && d.passed;
    dims_detail += " (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + "," +
                   std::to_string(c[3]) + ")->" + std::to_string(d.filter_rank) + "/" + std::to_string(d.graph_rank) +
                   "/" + std::to_string(d.masked_rank);
  }
  report += std::string(dims_ok ? "PASS" : "FAIL") + " dimension" + dims_detail + "\n";

  bool wave_ok = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const WaveformResult w = waveform_experiment(derive_seed(f.seed, s), 1000, 10, 5, 10);
    wave_ok = wave_ok && w.rmse_multi <= w.rmse_single;
  }
  report += std::string(wave_ok ? "PASS" : "FAIL") + " waveform seeds=20\n";

  report += dump_json(Json{{"trials", rep.trials}, {"violations", rep.violations}, {"max_gap", rep.max_gap}}) + "\n";
  std::cout << report;
  if (!f.out.empty()) {
    write_file(f.out, report);
    m.add_output(f.out);
    m.write(f.out);
  }
  return dominance && dims_ok && wave_ok ? 0 : 2;
}

inline int cmd_synth(const Flags& f) {
  CsbmParams p;
  p.n = f.nodes;
  p.num_classes = f.classes;
  p.p_in = f.p_in;
  p.p_out = f.p_out;
  p.feat_dim = f.feat_dim;
  p.class_separation = f.separation;
  p.seed = f.seed;
  RunManifest m{"synth", Json{{"nodes", p.n}, {"classes", p.num_classes}, {"p_in", p.p_in}, {"p_out", p.p_out},
                              {"feat_dim", p.feat_dim}, {"separation", p.class_separation}}};
  m.seed = f.seed;
  const Dataset ds = synth_csbm(p);
  const fs::path dir = f.out;
  write_dataset(dir, ds);
  for (const char* file : {"edges.tsv", "features.tsv", "labels.tsv", "splits.json"}) m.add_output(dir / file);
  m.write(dir);
  std::cout << dump_json(Json{{"nodes", ds.num_nodes()}, {"edges", ds.graph.num_edges()},
                              {"edge_homophily", ds.graph.num_edges() > 0 ? edge_homophily(ds.graph, ds.labels) : 0.0}})
            << "\n";
  return 0;
}

inline int cmd_search(const Flags& f) {
  const TrainConfig base = train_config(f);
  RunManifest m{"search", config_json(base)};
  m.config["trials"] = f.trials;
  m.seed = f.seed;
  const fs::path dir = f.dataset;
  const Dataset ds = load_dataset(dir);
  add_dataset_inputs(m, dir);
  const EigenSystem es = load_cached_system(f.eigen, dir, ds);
  m.add_input(f.eigen);

  SearchRanges ranges;
  const SearchResult r = random_search(ds, sym_normalize(ds.graph), es, ranges, base, f.trials, f.seed);
  std::string trials;
  for (const TrialRecord& t : r.trials) {
    Json j = config_json(t.config);
    j["trial"] = t.trial;
    j["resamples"] = t.resamples;
    j["val_acc"] = t.val_acc;
    j["test_acc"] = t.test_acc;
    j["best_epoch"] = t.best_epoch;
    trials += dump_json(j) + "\n";
  }
  const fs::path trials_path = f.out + ".trials.jsonl";
  write_checkpoint(f.out, {r.best.best_params, r.best_config.seed, r.best_config.filter.k_extreme});
  write_file(trials_path, trials);
  m.add_output(f.out);
  m.add_output(trials_path);
  m.write(f.out);
  std::cout << dump_json(Json{{"best_trial", r.best_trial},
                              {"best_val_acc", r.best.best_val_acc},
                              {"test_acc", r.best.test_acc_at_best_val}})
            << "\n";
  return 0;
}

}  // namespace cli

/// Entry point of the `ppgnn` tool. Returns 0 on success, 1 on usage errors
/// and 2 on validation or check failures.
inline int cmd_dispatch(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  cli::Flags f;
  CLI::App app{"Piecewise-polynomial spectral graph filters", "ppgnn"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);

  auto dataset = [&](CLI::App* s) { s->add_option("--dataset", f.dataset, "dataset directory")->required(); };
  auto seed = [&](CLI::App* s) { s->add_option("--seed", f.seed, "random seed"); };
  auto out = [&](CLI::App* s, bool required) {
    auto* o = s->add_option("--out", f.out, "output path");
    if (required) o->required();
  };
  auto model_flags = [&](CLI::App* s) {
    s->add_option("--eigen", f.eigen, "eigen cache")->required();
    s->add_option("--bins-low", f.bins_low, "bins over the low-frequency band");
    s->add_option("--bins-high", f.bins_high, "bins over the high-frequency band");
    s->add_option("--order", f.order, "degree of every adaptive piece");
    s->add_option("--gpr-order", f.gpr_order, "degree of the global polynomial");
    s->add_option("--eta", f.eta, "eta, or eta_low,eta_high,eta_gpr");
    s->add_option("--init", f.init, "ppr, nppr or random")->check(CLI::IsMember({"ppr", "nppr", "random"}));
    s->add_option("--alpha", f.alpha, "teleport probability for ppr/nppr init");
    s->add_option("--lr", f.lr, "learning rate");
    s->add_option("--weight-decay", f.weight_decay, "L2 weight on MLP weights");
    s->add_option("--dropout", f.dropout, "hidden-layer dropout");
    s->add_option("--boundary-weight", f.boundary_weight, "knot-mismatch penalty weight");
    s->add_option("--max-epochs", f.max_epochs, "epoch limit");
    s->add_option("--patience", f.patience, "early-stopping patience");
    s->add_option("--hidden", f.hidden, "hidden width, 0 for a linear head");
  };

  auto* eigen = app.add_subcommand("eigen", "compute and cache extreme eigenpairs");
  dataset(eigen);
  out(eigen, true);
  seed(eigen);
  eigen->add_option("--k-low", f.k_low, "smallest eigenvalues to keep");
  eigen->add_option("--k-high", f.k_high, "largest eigenvalues to keep");
  eigen->add_option("--tol", f.tol, "residual tolerance");
  eigen->add_option("--method", f.method, "lanczos or dense (dense with both counts 0 keeps every pair)");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  dataset(train);
  out(train, true);
  seed(train);
  model_flags(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  dataset(eval);
  out(eval, false);
  eval->add_option("--eigen", f.eigen, "eigen cache")->required();
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint JSON")->required();

  auto* respond = app.add_subcommand("respond", "frequency response of a checkpoint as CSV");
  out(respond, true);
  respond->add_option("--eigen", f.eigen, "eigen cache")->required();
  respond->add_option("--checkpoint", f.checkpoint, "checkpoint JSON")->required();

  auto* oversmooth = app.add_subcommand("oversmooth", "feature spread under repeated propagation as CSV");
  dataset(oversmooth);
  out(oversmooth, false);
  oversmooth->add_option("--powers", f.powers, "comma-separated propagation powers");

  auto* waveform = app.add_subcommand("waveform", "single versus piecewise polynomial fit of a seeded waveform");
  out(waveform, false);
  seed(waveform);
  waveform->add_option("--gpr-order", f.gpr_order, "degree of the single polynomial");
  waveform->add_option("--order", f.order, "degree of every adaptive piece");
  waveform->add_option("--bins-low", f.bins_low, "number of adaptive pieces");
  waveform->add_option("--grid", f.grid, "grid points on [-1, 1]");

  auto* thm = app.add_subcommand("thm-check", "run the approximation and dimension suites");
  out(thm, false);
  seed(thm);
  thm->add_option("--trials", f.trials, "randomized error-dominance trials");

  auto* synth = app.add_subcommand("synth", "write a contextual SBM dataset directory");
  out(synth, true);
  seed(synth);
  synth->add_option("--nodes", f.nodes, "node count");
  synth->add_option("--classes", f.classes, "class count");
  synth->add_option("--p-in", f.p_in, "intra-class edge probability");
  synth->add_option("--p-out", f.p_out, "inter-class edge probability");
  synth->add_option("--feat-dim", f.feat_dim, "feature dimension");
  synth->add_option("--separation", f.separation, "distance between class means");

  auto* search = app.add_subcommand("search", "seeded random hyperparameter search");
  dataset(search);
  out(search, true);
  seed(search);
  model_flags(search);
  search->add_option("--trials", f.trials, "number of configurations");

  try {
    std::vector<std::string> args;  // CLI11 consumes a reversed argument list
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*eigen) return cli::cmd_eigen(f);
    if (*train) return cli::cmd_train(f);
    if (*eval) return cli::cmd_eval(f);
    if (*respond) return cli::cmd_respond(f);
    if (*oversmooth) return cli::cmd_oversmooth(f);
    if (*waveform) {
      // Waveform defaults: degree 5 on 10 pieces against a degree-10 fit.
      if (waveform->count("--order") == 0) f.order = 5;
      if (waveform->count("--bins-low") == 0) f.bins_low = 10;
      return cli::cmd_waveform(f);
    }
    if (*thm) return cli::cmd_thm_check(f);
    if (*synth) return cli::cmd_synth(f);
    if (*search) return cli::cmd_search(f);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ppgnn
