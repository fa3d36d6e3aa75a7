// ecl2o command-line driver: synthetic weather, dataset generation, training, evaluation and
// bound curves.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecl2o/ecl2o.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ecl2o;

namespace {

/// FNV-1a 64-bit, stable across platforms and runs.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw ValidationError("bad number in list: '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot open '" + p.string() + "' for writing");
  os << content;
}

/// Loads `--config FILE` (JSON object keyed by long flag names) into option defaults so that
/// explicit flags still win. Returns the parsed object.
json preload_config(CLI::App& sub, int argc, char** argv) {
  std::string path;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") path = argv[i + 1];
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw Error("cannot open config file '" + path + "'");
  json j = json::parse(is);
  if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + it.key());
    } catch (const CLI::OptionNotFound&) {
      throw ValidationError("config file: unknown key '" + it.key() + "'");
    }
    const auto& v = it.value();
    std::string s;
    if (v.is_string())
      s = v.get<std::string>();
    else if (v.is_boolean())
      s = v.get<bool>() ? "true" : "false";
    else if (v.is_array()) {
      for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + v[k].dump();
    } else
      s = v.dump();
    opt->default_val(s);
  }
  return j;
}

/// --seed > config "seed" > SOCO_SEED > built-in default.
std::uint64_t resolve_seed(const CLI::Option* opt, const json& cfg, std::uint64_t value) {
  if (opt->count() > 0 || cfg.contains("seed")) return value;
  if (const char* env = std::getenv("SOCO_SEED")) return std::stoull(env);
  return value;
}

CostModel model_for(double alpha) { return CostModel::tracking(alpha); }

// ---------------------------------------------------------------------------------------------

struct SynthOpts {
  std::string out;
  std::size_t hours = 8760;
  std::uint64_t seed = 7;
};

int run_synth(const SynthOpts& o) {
  const auto recs = demand::synthesize_weather(o.hours, o.seed);
  std::ostringstream os;
  demand::write_weather_csv(os, recs);
  write_file(o.out, os.str());
  std::cout << "wrote " << recs.size() << " hourly records to " << o.out << "\n";
  return 0;
}

struct GenOpts {
  std::string weather;
  std::string out;
  std::size_t episode_len = 24;
  std::size_t augment = 1400;
  std::size_t train_days = 59;
  std::size_t val_days = 31;
  double aug_scale = 0.2;
  double aug_jitter = 0.02;
  double test_scale = 1.0;
  std::uint64_t seed = 0;
  bool force = false;
};

int run_gen(const GenOpts& o) {
  const fs::path dir(o.out);
  if (fs::exists(dir / "train.csv") && !o.force)
    throw Error("output directory '" + o.out + "' already holds a dataset (use --force)");
  fs::create_directories(dir);
  demand::DatasetConfig cfg;
  cfg.episode_len = o.episode_len;
  cfg.train_days = o.train_days;
  cfg.val_days = o.val_days;
  cfg.augment.target_count = o.augment;
  cfg.augment.scale = o.aug_scale;
  cfg.augment.jitter = o.aug_jitter;
  cfg.test_context_scale = o.test_scale;
  const auto recs = demand::load_weather_csv(o.weather);
  const auto ds = demand::make_dataset(recs, cfg, o.seed);

  auto dump = [&](const char* name, const std::vector<ProblemInstance>& eps) {
    std::ostringstream os;
    demand::write_episodes_csv(os, eps);
    write_file(dir / name, os.str());
    return fnv1a(os.str());
  };
  json effective = {{"weather", o.weather},        {"episode_len", o.episode_len},
                    {"augment", o.augment},        {"train_days", o.train_days},
                    {"val_days", o.val_days},      {"aug_scale", o.aug_scale},
                    {"aug_jitter", o.aug_jitter},  {"test_scale", o.test_scale},
                    {"seed", o.seed}};
  json manifest = {{"command", "gen-data"},
                   {"config", effective},
                   {"config_hash", hex64(fnv1a(effective.dump()))},
                   {"context_scale_mw", ds.scale},
                   {"counts", {{"train", ds.train.size()}, {"val", ds.val.size()},
                               {"test", ds.test.size()}}},
                   {"files", {{"train.csv", hex64(dump("train.csv", ds.train))},
                              {"val.csv", hex64(dump("val.csv", ds.val))},
                              {"test.csv", hex64(dump("test.csv", ds.test))}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "train " << ds.train.size() << ", val " << ds.val.size() << ", test "
            << ds.test.size() << " episodes; config hash " << manifest["config_hash"].get<std::string>()
            << "\n";
  return 0;
}

struct TrainOpts {
  std::string mode = "ecl2o";
  std::string data;
  std::string out;
  std::string log;
  double mu = 0.6;
  double theta = 0.5;
  double kappa = 0.0;
  double rho_bar = 0.1;
  double alpha = 10.0;
  int epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::string hidden = "10,10,10";
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  bool quiet = false;
};

int run_train(const TrainOpts& o) {
  if (o.mode != "ecl2o" && o.mode != "pureml")
    throw ValidationError("--mode must be 'ecl2o' or 'pureml'");
  const fs::path dir(o.data);
  const auto model = model_for(o.alpha);
  auto train = attach_oracles(demand::load_episodes((dir / "train.csv").string()), model, o.jobs);
  std::vector<TrainingInstance> val;
  if (fs::exists(dir / "val.csv"))
    val = attach_oracles(demand::load_episodes((dir / "val.csv").string()), model, o.jobs);
  auto report_dropped = [&](std::size_t n, const char* split) {
    if (n > 0 && !o.quiet)
      std::cerr << "skipping " << n << " " << split << " episodes with zero optimal cost\n";
  };
  report_dropped(drop_zero_cost(train, 1e-12), "train");
  report_dropped(drop_zero_cost(val, 1e-12), "val");
  if (train.empty()) throw ValidationError("training set is empty");

  OptimizerConfig optim;
  optim.epochs = o.epochs;
  optim.batch_size = o.batch_size;
  optim.learning_rate = o.lr;
  optim.seed = o.seed;
  optim.jobs = o.jobs;
  optim.arch.context_dim = train.front().instance.context_dim();
  optim.arch.action_dim = train.front().instance.action_dim();
  optim.arch.hidden.clear();
  for (double h : parse_list(o.hidden)) optim.arch.hidden.push_back(static_cast<Eigen::Index>(h));

  auto progress = [&](const TrainLogRow& r) {
    if (!o.quiet)
      std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss
                << " val_cost " << r.val_avg_cost << " val_rho " << r.val_mean_rho << "\n";
  };
  TrainResult res;
  if (o.mode == "ecl2o") {
    TrainConfig cfg;
    cfg.mu = o.mu;
    cfg.theta = o.theta;
    cfg.rho_bar = o.rho_bar;
    cfg.optim = optim;
    res = train_ecl2o(train, val, model, cfg, progress);
  } else {
    PureMLConfig cfg;
    cfg.kappa = o.kappa;
    cfg.optim = optim;
    res = train_pureml(train, val, model, cfg, progress);
  }
  std::ostringstream ws;
  save_weights(ws, res.weights);
  write_file(o.out, ws.str());
  std::ostringstream ls;
  write_train_log_csv(ls, res.log);
  const std::string log_path = o.log.empty() ? o.out + ".log.csv" : o.log;
  write_file(log_path, ls.str());
  json effective = {{"mode", o.mode},   {"data", o.data},     {"mu", o.mu},
                    {"theta", o.theta}, {"kappa", o.kappa},   {"rho_bar", o.rho_bar},
                    {"alpha", o.alpha}, {"epochs", o.epochs}, {"lr", o.lr},
                    {"batch_size", o.batch_size},             {"hidden", o.hidden},
                    {"seed", o.seed}};
  json manifest = {{"command", "train"},
                   {"config", effective},
                   {"config_hash", hex64(fnv1a(effective.dump()))},
                   {"best_epoch", res.best_epoch},
                   {"weights_hash", hex64(fnv1a(ws.str()))}};
  write_file(o.out + ".manifest.json", manifest.dump(2) + "\n");
  std::cout << "best epoch " << res.best_epoch << "; weights written to " << o.out << "\n";
  return 0;
}

struct EvalOpts {
  std::string policies = "oracle";
  std::string weights;
  std::string pureml_weights;
  std::string data;
  std::string split = "test";
  std::string percentiles = "99,99.9";
  std::string out;
  std::string per_instance;
  double theta = 0.5;
  double mla_theta = 0.3;
  double gamma = 1.5;
  double gamma_growth = 2.0;
  double alpha = 10.0;
  bool chain_x0 = false;
  unsigned jobs = 1;
};

int run_eval(const EvalOpts& o) {
  const auto model = model_for(o.alpha);
  const auto data = demand::load_episodes((fs::path(o.data) / (o.split + ".csv")).string());
  EvalOptions opt;
  opt.chain_x0 = o.chain_x0;
  opt.percentiles = parse_list(o.percentiles);
  opt.jobs = o.jobs;

  auto need = [](const std::string& path, const char* what) {
    if (path.empty()) throw ValidationError(std::string("policy needs ") + what);
    return load_weights_file(path);
  };
  const std::string ml_path = o.pureml_weights.empty() ? o.weights : o.pureml_weights;

  std::ostringstream metrics, per;
  write_metrics_header(metrics, opt.percentiles);
  bool per_header = false;
  for (const auto& name : split_names(o.policies)) {
    Policy p;
    if (name == "oracle") p = Policy::oracle();
    else if (name == "robd") p = Policy::robd(model);
    else if (name == "greedy") p = Policy::greedy();
    else if (name == "ftp") p = Policy::ftp(need(o.weights, "--weights"));
    else if (name == "ecl2o") p = Policy::ecl2o(model, need(o.weights, "--weights"), o.theta);
    else if (name == "mlarobd")
      p = Policy::mla_robd(model, need(ml_path, "--pureml-weights or --weights"), o.mla_theta);
    else if (name == "pureml") p = Policy::pureml(need(ml_path, "--pureml-weights or --weights"));
    else if (name == "switch")
      p = Policy::switching(model, need(ml_path, "--pureml-weights or --weights"), o.gamma,
                            o.gamma_growth);
    else
      throw ValidationError("unknown policy '" + name + "'");
    // Switch is a reimplementation of the threshold rule; label it as such.
    if (p.kind == PolicyKind::Switch) p.name = "switch-reimpl";
    const auto res = evaluate(p, data, model, opt);
    write_metrics_row(metrics, res, opt.percentiles);
    if (!o.per_instance.empty()) {
      std::ostringstream one;
      write_per_instance_csv(one, res, data);
      std::string s = one.str();
      if (per_header) s = s.substr(s.find('\n') + 1);
      per << s;
      per_header = true;
    }
  }
  if (o.out.empty()) {
    std::cout << metrics.str();
  } else {
    write_file(o.out, metrics.str());
    json effective = {{"policies", o.policies}, {"weights", o.weights},
                      {"pureml_weights", o.pureml_weights}, {"data", o.data},
                      {"split", o.split},       {"percentiles", o.percentiles},
                      {"theta", o.theta},       {"mla_theta", o.mla_theta},
                      {"gamma", o.gamma},       {"gamma_growth", o.gamma_growth},
                      {"alpha", o.alpha},       {"chain_x0", o.chain_x0}};
    json manifest = {{"command", "eval"},
                     {"config", effective},
                     {"config_hash", hex64(fnv1a(effective.dump()))}};
    write_file(o.out + ".manifest.json", manifest.dump(2) + "\n");
  }
  if (!o.per_instance.empty()) write_file(o.per_instance, per.str());
  return 0;
}

struct BoundsOpts {
  double m = 1.0;
  double alpha = 10.0;
  double beta = 10.0;
  std::string thetas = "0.1,0.5,1";
  double rho_max = 2.0;
  int rho_steps = 101;
  std::string out;
};

int run_bounds(const BoundsOpts& o) {
  const auto thetas = parse_list(o.thetas);
  if (o.rho_steps < 2) throw ValidationError("--rho-steps must be >= 2");
  std::ostringstream os;
  os << "rho,lower_ml";
  for (double th : thetas) os << ",upper_theta_" << detail::fmt_real(th);
  os << ",upper_robd\n";
  const double robd = cr_robd(o.m, o.alpha, o.beta);
  for (int i = 0; i < o.rho_steps; ++i) {
    const double rho = o.rho_max * i / (o.rho_steps - 1);
    os << detail::fmt_real(rho) << ',' << detail::fmt_real(cr_lower_pure_ml(o.m, o.alpha, rho));
    for (double th : thetas)
      os << ',' << detail::fmt_real(cr_upper_optimal(o.m, o.alpha, o.beta, th, rho));
    os << ',' << detail::fmt_real(robd) << '\n';
  }
  if (o.out.empty())
    std::cout << os.str();
  else
    write_file(o.out, os.str());
  for (double th : thetas)
    if (th > 0.0)
      std::cerr << "theta=" << detail::fmt_real(th)
                << " crossing_rho=" << detail::fmt_real(trust_crossing_rho(o.m, o.alpha, o.beta, th))
                << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-calibrated learning to optimize for online convex optimization with "
               "switching costs"};
  app.require_subcommand(1);
  std::string config_path;

  SynthOpts so;
  auto* synth = app.add_subcommand("synth-weather", "Write a synthetic hourly weather CSV");
  synth->add_option("--out", so.out, "Output CSV")->required();
  synth->add_option("--hours", so.hours, "Number of hourly records");
  auto* synth_seed = synth->add_option("--seed", so.seed, "Random seed");
  synth->add_option("--config", config_path, "JSON config file");

  GenOpts go;
  auto* gen = app.add_subcommand("gen-data", "Build train/val/test episode files from weather");
  gen->add_option("--weather", go.weather, "Weather CSV")->required();
  gen->add_option("--out", go.out, "Output directory")->required();
  gen->add_option("--episode-len", go.episode_len, "Steps per episode");
  gen->add_option("--augment", go.augment, "Total training episodes after augmentation (0: raw)");
  gen->add_option("--train-days", go.train_days, "Days in the training range");
  gen->add_option("--val-days", go.val_days, "Days in the validation range");
  gen->add_option("--aug-scale", go.aug_scale, "Multiplicative augmentation half-width");
  gen->add_option("--aug-jitter", go.aug_jitter, "Additive augmentation noise std");
  gen->add_option("--test-scale", go.test_scale, "Multiplier applied to test contexts");
  auto* gen_seed = gen->add_option("--seed", go.seed, "Random seed");
  gen->add_flag("--force", go.force, "Overwrite an existing dataset");
  gen->add_option("--config", config_path, "JSON config file");

  TrainOpts to;
  auto* train = app.add_subcommand("train", "Train an EC-L2O or PureML predictor");
  train->add_option("--mode", to.mode, "ecl2o | pureml");
  train->add_option("--data", to.data, "Dataset directory")->required();
  train->add_option("--out", to.out, "Weights file")->required();
  train->add_option("--log", to.log, "Training log CSV (default <out>.log.csv)");
  train->add_option("--mu", to.mu, "Prediction-loss weight");
  train->add_option("--theta", to.theta, "Calibrator trust parameter");
  train->add_option("--kappa", to.kappa, "PureML ratio-loss weight");
  train->add_option("--rho-bar", to.rho_bar, "Prediction-error threshold");
  train->add_option("--alpha", to.alpha, "Switching-cost parameter (Q = alpha/2)");
  train->add_option("--epochs", to.epochs, "Training epochs");
  train->add_option("--lr", to.lr, "Adam learning rate");
  train->add_option("--batch-size", to.batch_size, "Episodes per mini-batch");
  train->add_option("--hidden", to.hidden, "Hidden layer widths, comma separated");
  auto* train_seed = train->add_option("--seed", to.seed, "Random seed");
  train->add_option("--jobs", to.jobs, "Worker threads");
  train->add_flag("--quiet", to.quiet, "Suppress per-epoch progress");
  train->add_option("--config", config_path, "JSON config file");

  EvalOpts eo;
  auto* eval = app.add_subcommand("eval", "Evaluate policies and emit metrics CSV");
  eval->add_option("--policy", eo.policies,
                   "Comma list of oracle, robd, greedy, ftp, mlarobd, pureml, ecl2o, switch");
  eval->add_option("--weights", eo.weights, "Predictor weights (ecl2o/ftp; default for others)");
  eval->add_option("--pureml-weights", eo.pureml_weights,
                   "PureML-0 weights for pureml, mlarobd and switch");
  eval->add_option("--data", eo.data, "Dataset directory")->required();
  eval->add_option("--split", eo.split, "train | val | test");
  eval->add_option("--percentiles", eo.percentiles, "Tail percentiles, comma separated");
  eval->add_option("--out", eo.out, "Metrics CSV (default stdout)");
  eval->add_option("--per-instance", eo.per_instance, "Per-instance ratio CSV");
  eval->add_option("--theta", eo.theta, "Trust parameter for ecl2o");
  eval->add_option("--mla-theta", eo.mla_theta, "Trust parameter for mlarobd");
  eval->add_option("--gamma", eo.gamma, "Switch threshold");
  eval->add_option("--gamma-growth", eo.gamma_growth, "Switch threshold growth per switch");
  eval->add_option("--alpha", eo.alpha, "Switching-cost parameter (Q = alpha/2)");
  eval->add_flag("--chain-x0", eo.chain_x0, "Start each episode from the previous final action");
  eval->add_option("--jobs", eo.jobs, "Worker threads");
  eval->add_option("--config", config_path, "JSON config file");

  BoundsOpts bo;
  auto* bounds = app.add_subcommand("bounds", "Emit competitive-ratio bound curves");
  bounds->add_option("--m", bo.m, "Strong convexity of the hitting cost");
  bounds->add_option("--alpha", bo.alpha, "2 x smallest eigenvalue of Q");
  bounds->add_option("--beta", bo.beta, "2 x largest eigenvalue of Q");
  bounds->add_option("--theta-list", bo.thetas, "Trust parameters, comma separated");
  bounds->add_option("--rho-max", bo.rho_max, "Largest prediction error");
  bounds->add_option("--rho-steps", bo.rho_steps, "Grid points in [0, rho-max]");
  bounds->add_option("--out", bo.out, "Output CSV (default stdout)");
  bounds->add_option("--config", config_path, "JSON config file");

  try {
    json cfg = json::object();
    if (argc > 1) {
      const std::string name = argv[1];
      for (auto* sub : {synth, gen, train, eval, bounds})
        if (sub->get_name() == name) cfg = preload_config(*sub, argc, argv);
    }
    app.parse(argc, argv);
    if (synth->parsed()) {
      so.seed = resolve_seed(synth_seed, cfg, so.seed);
      return run_synth(so);
    }
    if (gen->parsed()) {
      go.seed = resolve_seed(gen_seed, cfg, go.seed);
      return run_gen(go);
    }
    if (train->parsed()) {
      to.seed = resolve_seed(train_seed, cfg, to.seed);
      return run_train(to);
    }
    if (eval->parsed()) return run_eval(eo);
    if (bounds->parsed()) return run_bounds(bo);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
