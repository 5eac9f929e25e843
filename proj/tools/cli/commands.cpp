#include "cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "segopt/distance_matrix.hpp"
#include "segopt/error.hpp"
#include "segopt/gradcheck.hpp"
#include "segopt/metrics.hpp"
#include "segopt/model.hpp"
#include "segopt/synth.hpp"
#include "segopt/train.hpp"

namespace segopt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out;
  unsigned jobs = 1;
};

struct SynthOptions {
  std::string grid = "16x16";
  std::string subgroups = "common:40,rare:4";
  double no_et_frac = 0.1;
  double sigma = 0.3;
};

struct TrainOptions {
  std::string data;
  std::string config;
  std::string preset;
  std::string loss = "dice_ce";
  std::string population = "erm";
  double beta = kDefaultBeta;
  std::optional<double> init_loss;
  std::string optimizer = "sgd";
  double lr = 0.0;  // 0 selects the optimizer default
  double momentum = 0.99;
  std::size_t lookahead_k = 6;
  double lookahead_alpha = 0.5;
  std::size_t epochs = 1000;
  std::size_t batch_size = 2;
  std::string model = "linear";
  std::size_t hidden = 16;
  std::string distance_matrix;
};

struct EvaluateOptions {
  std::string data;
  std::vector<std::string> models;
  bool tta = false;
  std::size_t min_et_voxels = 50;
};

struct GradcheckOptions {
  std::string loss = "all";
  std::size_t trials = 100;
  std::string model = "linear";
  double inject_fault = 0.0;
};

fs::path manifest_path(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) throw IoError("dataset not found: " + p.string());
  return p;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

fs::path require_out(const GlobalOptions& g, const char* cmd) {
  if (g.out.empty()) throw ConfigError(std::string(cmd) + ": --out is required");
  fs::create_directories(g.out);
  return fs::path(g.out);
}

// ---------------------------------------------------------------- synth

int cmd_synth(const GlobalOptions& g, const SynthOptions& o, std::ostream& out) {
  SynthConfig config;
  config.grid = parse_grid(o.grid);
  config.subgroups = parse_subgroups(o.subgroups);
  config.no_et_fraction = o.no_et_frac;
  config.sigma = o.sigma;
  config.seed = g.seed;
  config.validate();
  const fs::path dir = require_out(g, "synth");
  const DatasetManifest m = generate(config, dir);
  out << "wrote " << m.cases.size() << " cases to " << (dir / "manifest.json").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct Arm {
  std::string name;
  std::string loss;
  std::string population;
  std::string optimizer;
};

std::optional<Arm> preset_arm(const std::string& name) {
  if (name == "baseline") return Arm{name, "dice_ce", "erm", "sgd"};
  if (name == "ranger") return Arm{name, "dice_ce", "erm", "ranger"};
  if (name == "gwdl") return Arm{name, "gwdl_ce", "erm", "sgd"};
  if (name == "dro") return Arm{name, "dice_ce", "dro", "sgd"};
  return std::nullopt;
}

json resolved_config(const GlobalOptions& g, const TrainOptions& o) {
  return json{{"command", "train"},
              {"data", o.data},
              {"seed", g.seed},
              {"preset", o.preset},
              {"loss", o.loss},
              {"population", o.population},
              {"beta", o.beta},
              {"init_loss", o.init_loss ? json(*o.init_loss) : json(nullptr)},
              {"optimizer", o.optimizer},
              {"lr", o.lr},
              {"momentum", o.momentum},
              {"lookahead_k", o.lookahead_k},
              {"lookahead_alpha", o.lookahead_alpha},
              {"epochs", o.epochs},
              {"batch_size", o.batch_size},
              {"model", o.model},
              {"hidden", o.hidden},
              {"distance_matrix", o.distance_matrix}};
}

void apply_config_file(const std::string& path, GlobalOptions& g, TrainOptions& o) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
    g.seed = doc.at("seed").get<std::uint64_t>();
    o.data = doc.at("data").get<std::string>();
    o.preset = doc.at("preset").get<std::string>();
    o.loss = doc.at("loss").get<std::string>();
    o.population = doc.at("population").get<std::string>();
    o.beta = doc.at("beta").get<double>();
    const json& init = doc.at("init_loss");
    o.init_loss = init.is_null() ? std::nullopt : std::optional<double>(init.get<double>());
    o.optimizer = doc.at("optimizer").get<std::string>();
    o.lr = doc.at("lr").get<double>();
    o.momentum = doc.at("momentum").get<double>();
    o.lookahead_k = doc.at("lookahead_k").get<std::size_t>();
    o.lookahead_alpha = doc.at("lookahead_alpha").get<double>();
    o.epochs = doc.at("epochs").get<std::size_t>();
    o.batch_size = doc.at("batch_size").get<std::size_t>();
    o.model = doc.at("model").get<std::string>();
    o.hidden = doc.at("hidden").get<std::size_t>();
    o.distance_matrix = doc.at("distance_matrix").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
}

TrainConfig to_train_config(const GlobalOptions& g, const TrainOptions& o) {
  TrainConfig c;
  c.loss = parse_loss_kind(o.loss);
  if (uses_distance_matrix(c.loss)) {
    c.distance_matrix = o.distance_matrix.empty() ? DistanceMatrix::brats()
                                                  : DistanceMatrix::load(o.distance_matrix);
  }
  c.sampler = parse_sampler_mode(o.population);
  c.beta = o.beta;
  c.init_loss = o.init_loss;
  if (!is_known_optimizer(o.optimizer)) {
    throw ConfigError("unknown optimizer '" + o.optimizer + "'");
  }
  c.optimizer.name = o.optimizer;
  c.optimizer.hyper.lr = o.lr;
  c.optimizer.hyper.momentum = o.momentum;
  c.optimizer.lookahead_k = o.lookahead_k;
  c.optimizer.lookahead_alpha = o.lookahead_alpha;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.model = parse_model_kind(o.model);
  c.hidden_width = o.hidden;
  c.seed = g.seed;
  c.validate();
  return c;
}

void train_one(const GlobalOptions& g, TrainOptions o, const std::vector<Case>& cases,
               const fs::path& dir, std::ostream& out) {
  if (o.lr <= 0.0) o.lr = default_lr(o.optimizer);
  const TrainConfig config = to_train_config(g, o);
  fs::create_directories(dir);
  write_json(dir / "config.json", resolved_config(g, o));

  const TrainedModel trained = train(cases, config);
  save_model(trained.model, dir, "model");
  {
    std::ofstream log(dir / "train_log.csv", std::ios::trunc);
    write_training_log(log, trained.log);
  }
  if (trained.sampler) {
    std::ofstream s(dir / "sampler_state.json", std::ios::trunc);
    s << trained.sampler->to_json() << '\n';
  }
  out << "trained " << dir.string() << " (" << o.loss << ", " << o.population << ", "
      << o.optimizer << ")";
  if (!trained.log.empty()) out << " final loss " << trained.log.back().mean_loss;
  out << '\n';
}

int cmd_train(GlobalOptions g, TrainOptions o, const CLI::App& sub, std::ostream& out) {
  if (!o.config.empty()) {
    const std::string out_dir = g.out;
    apply_config_file(o.config, g, o);
    g.out = out_dir;
  }
  const fs::path dir = require_out(g, "train");
  if (o.data.empty()) throw ConfigError("train: --data is required");
  const auto cases = load_dataset(manifest_path(o.data));

  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (o.preset.empty()) {
    train_one(g, o, cases, dir, out);
    return kExitOk;
  }

  std::vector<Arm> arms;
  if (o.preset == "ensemble") {
    arms = {*preset_arm("ranger"), *preset_arm("gwdl"), *preset_arm("dro")};
  } else if (auto arm = preset_arm(o.preset)) {
    arms = {*arm};
  } else {
    throw ConfigError("unknown preset '" + o.preset + "'");
  }
  for (const Arm& arm : arms) {
    TrainOptions a = o;
    if (!given("--loss")) a.loss = arm.loss;
    if (!given("--population")) a.population = arm.population;
    if (!given("--optimizer")) a.optimizer = arm.optimizer;
    if (!given("--lr")) a.lr = 0.0;
    a.preset = arm.name;
    train_one(g, a, cases, arms.size() > 1 ? dir / arm.name : dir, out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, std::ostream& out) {
  if (o.data.empty()) throw ConfigError("evaluate: --data is required");
  if (o.models.empty()) throw ConfigError("evaluate: at least one model is required");
  const fs::path dir = require_out(g, "evaluate");
  const auto cases = load_dataset(manifest_path(o.data));
  if (cases.empty()) throw ConfigError("evaluate: dataset has no cases");

  std::vector<Model> models;
  for (const auto& path : o.models) {
    models.push_back(load_model(path));
    const auto& spec = models.back().spec;
    if (spec.input_features != cases.front().features.cols() ||
        spec.num_classes != cases.front().labels.num_classes()) {
      throw ConfigError("evaluate: model " + path + " is incompatible with the dataset (F=" +
                        std::to_string(spec.input_features) +
                        ", L=" + std::to_string(spec.num_classes) + ")");
    }
  }

  std::vector<CaseMetrics> metrics(cases.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < cases.size(); i = next++) {
        const Case& c = cases[i];
        std::vector<ProbMap> preds;
        for (const auto& m : models) {
          preds.push_back(o.tta ? predict_tta(m, c.features, c.labels.spatial_shape())
                                : forward(m, c.features));
        }
        const ProbMap mean = ensemble_mean_softmax(preds);
        const LabelMap labels =
            postprocess_et(argmax_labels(mean, c.labels.spatial_shape()), o.min_et_voxels);
        metrics[i] = evaluate_case(labels, c.labels, c.spacing_mm, c.id);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  const unsigned jobs = std::max(1U, g.jobs);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  const AggregateStats stats = aggregate(metrics);
  {
    std::ofstream f(dir / "metrics.csv", std::ios::trunc);
    write_case_metrics_csv(f, metrics);
  }
  {
    std::ofstream f(dir / "aggregate.csv", std::ios::trunc);
    write_aggregate_csv(f, stats);
  }
  const std::string table = format_aggregate_table(stats);
  {
    std::ofstream f(dir / "aggregate.txt", std::ios::trunc);
    f << table;
  }
  {
    // Per-subgroup breakdown, in order of first appearance.
    std::vector<std::string> order;
    std::map<std::string, std::vector<CaseMetrics>> groups;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (!groups.contains(cases[i].subgroup)) order.push_back(cases[i].subgroup);
      groups[cases[i].subgroup].push_back(metrics[i]);
    }
    std::ofstream f(dir / "aggregate_by_subgroup.csv", std::ios::trunc);
    f << "subgroup,";
    bool header = true;
    for (const auto& name : order) {
      std::ostringstream body;
      write_aggregate_csv(body, aggregate(groups[name]));
      std::istringstream lines(body.str());
      std::string line;
      std::getline(lines, line);
      if (header) {
        f << line << '\n';
        header = false;
      }
      while (std::getline(lines, line)) f << name << ',' << line << '\n';
    }
  }
  write_json(dir / "config.json", json{{"command", "evaluate"},
                                       {"data", o.data},
                                       {"models", o.models},
                                       {"tta", o.tta},
                                       {"min_et_voxels", o.min_et_voxels},
                                       {"jobs", jobs},
                                       {"seed", g.seed}});
  out << table;
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& o, std::ostream& out) {
  std::vector<LossKind> kinds;
  if (o.loss == "all") {
    kinds = {LossKind::kCe, LossKind::kDice, LossKind::kGwdl, LossKind::kDiceCe,
             LossKind::kGwdlCe};
  } else {
    kinds = {parse_loss_kind(o.loss)};
  }
  GradCheckOptions opts;
  opts.trials = o.trials;
  opts.seed = g.seed;
  opts.model = parse_model_kind(o.model);
  opts.inject_fault = o.inject_fault;
  const DistanceMatrix m = DistanceMatrix::brats();

  bool all_passed = true;
  for (LossKind kind : kinds) {
    const GradCheckReport r = check_gradients(kind, opts, m);
    all_passed = all_passed && r.passed;
    char line[200];
    std::snprintf(line, sizeof line,
                  "%-8s %s trials=%zu coords=%zu worst_prob_rel=%.3e (tol %.0e) "
                  "worst_param_rel=%.3e (tol %.0e)\n",
                  std::string(to_string(kind)).c_str(), r.passed ? "PASS" : "FAIL", r.trials,
                  r.coords_checked, r.worst_prob_error, opts.prob_tolerance,
                  r.worst_param_error, opts.param_tolerance);
    out << line;
  }
  return all_passed ? kExitOk : kExitNumerical;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation training-optimization toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads for evaluation")->capture_default_str();

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic hierarchical-label dataset");
  synth->add_option("--grid", so.grid, "Grid extents, e.g. 16x16 or 16x16x16")
      ->capture_default_str();
  synth->add_option("--subgroups", so.subgroups, "name:count list")->capture_default_str();
  synth->add_option("--no-et-frac", so.no_et_frac, "Fraction of cases without ET")
      ->capture_default_str();
  synth->add_option("--sigma", so.sigma, "Feature noise level")->capture_default_str();

  TrainOptions to;
  auto* trn = app.add_subcommand("train", "Train a per-voxel model");
  trn->add_option("--data", to.data, "Dataset directory or manifest.json");
  trn->add_option("--config", to.config, "Replay a resolved config.json");
  trn->add_option("--preset", to.preset, "baseline|ranger|gwdl|dro|ensemble");
  trn->add_option("--loss", to.loss, "ce|dice|gwdl|dice_ce|gwdl_ce")->capture_default_str();
  trn->add_option("--population", to.population, "erm|dro")->capture_default_str();
  trn->add_option("--beta", to.beta, "DRO inverse temperature")->capture_default_str();
  trn->add_option("--init-loss", to.init_loss,
                  "initial DRO loss estimate (default: upper bound of the loss)");
  trn->add_option("--optimizer", to.optimizer, "sgd|adam|radam|ranger")->capture_default_str();
  trn->add_option("--lr", to.lr, "Initial learning rate (default 1e-2 sgd, 3e-3 otherwise)");
  trn->add_option("--momentum", to.momentum, "SGD Nesterov momentum")->capture_default_str();
  trn->add_option("--lookahead-k", to.lookahead_k, "Lookahead sync period")
      ->capture_default_str();
  trn->add_option("--lookahead-alpha", to.lookahead_alpha, "Lookahead slow step")
      ->capture_default_str();
  trn->add_option("--epochs", to.epochs, "Number of epochs (t_max)")->capture_default_str();
  trn->add_option("--batch-size", to.batch_size, "Cases per optimizer step")
      ->capture_default_str();
  trn->add_option("--model", to.model, "linear|mlp")->capture_default_str();
  trn->add_option("--hidden", to.hidden, "Hidden width for mlp")->capture_default_str();
  trn->add_option("--distance-matrix", to.distance_matrix, "Distance matrix JSON file");

  EvaluateOptions eo;
  auto* ev = app.add_subcommand("evaluate", "Evaluate one model or a mean-softmax ensemble");
  ev->add_option("--data", eo.data, "Dataset directory or manifest.json");
  ev->add_option("--models,models", eo.models, "Model JSON files");
  ev->add_flag("--tta", eo.tta, "Average predictions over all axis flips");
  ev->add_option("--min-et-voxels", eo.min_et_voxels,
                 "Relabel ET as NET below this voxel count (0 disables)")
      ->capture_default_str();

  GradcheckOptions go;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gc->add_option("--loss", go.loss, "all|ce|dice|gwdl|dice_ce|gwdl_ce")->capture_default_str();
  gc->add_option("--trials", go.trials, "Random instances per loss")->capture_default_str();
  gc->add_option("--model", go.model, "linear|mlp")->capture_default_str();
  gc->add_option("--inject-fault", go.inject_fault,
                 "Scale analytic gradients by (1 + x); harness self-test")
      ->group("");

  // Global options are accepted after the subcommand name too.
  for (auto* sub : {synth, trn, ev, gc}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g, so, out);
    if (*trn) return cmd_train(g, to, *trn, out);
    if (*ev) return cmd_evaluate(g, eo, out);
    if (*gc) return cmd_gradcheck(g, go, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace segopt::cli
