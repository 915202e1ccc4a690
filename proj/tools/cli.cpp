#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "hypergoal/binio.hpp"
#include "hypergoal/config.hpp"
#include "hypergoal/errors.hpp"
#include "hypergoal/evalrt.hpp"

namespace hypergoal::cli {

using nlohmann::json;

namespace {

const char* kind(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

struct Resolved {
  json config;
  EnvConfig env;
  TrainConfig train;
  Variant variant = Variant::hypernet;
  std::size_t num_demos = 0;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string checkpoint;
  std::size_t eval_n = 0;
  std::uint64_t eval_seed = 0;
  double epsilon = 0.0;
  double epsilon_quantile = 0.95;
  RolloutConfig rollout;
  std::size_t grad_batch = 2;
  std::size_t grad_demos = 4;
  std::uint64_t grad_seed = 0;
  double grad_tolerance = 1e-5;
  std::vector<std::string> grad_variants;
};

Resolved resolve(const json& c) {
  Resolved r;
  try {
    r.config = c;
    r.seed = c.at("seed").get<std::uint64_t>();
    r.env = c.at("env").get<EnvConfig>();
    json train = c.at("train");
    train["seed"] = r.seed;
    r.train = train.get<TrainConfig>();
    r.variant = parse_variant(c.at("variant").get<std::string>());
    r.num_demos = c.at("data").at("num_demos").get<std::size_t>();
    r.data_dir = c.at("data").at("dir").get<std::string>();
    const json& e = c.at("eval");
    r.checkpoint = e.at("checkpoint").get<std::string>();
    r.eval_n = e.at("n").get<std::size_t>();
    r.eval_seed = e.at("seed").get<std::uint64_t>();
    r.epsilon = e.at("epsilon").get<double>();
    r.epsilon_quantile = e.at("epsilon_quantile").get<double>();
    r.rollout = e.at("rollout").get<RolloutConfig>();
    const json& g = c.at("grad_check");
    r.grad_batch = g.at("batch_size").get<std::size_t>();
    r.grad_demos = g.at("num_demos").get<std::size_t>();
    r.grad_seed = g.at("seed").get<std::uint64_t>();
    r.grad_tolerance = g.at("tolerance").get<double>();
    r.grad_variants = g.at("variants").get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  validate(r.train);
  if (r.num_demos == 0) throw ConfigError("data.num_demos must be positive");
  if (r.eval_n == 0) throw ConfigError("eval.n must be positive");
  if (r.epsilon < 0.0) throw ConfigError("eval.epsilon must be >= 0 (0 = calibrate from the dataset)");
  if (!(r.epsilon_quantile > 0.0 && r.epsilon_quantile < 1.0))
    throw ConfigError("eval.epsilon_quantile must lie in (0,1)");
  RolloutConfig probe = r.rollout;
  if (probe.epsilon <= 0.0) probe.epsilon = 1.0;
  validate(probe);
  if (r.grad_batch == 0 || r.grad_demos == 0) throw ConfigError("grad_check sizes must be positive");
  if (!(r.grad_tolerance > 0.0)) throw ConfigError("grad_check.tolerance must be positive");
  for (const auto& v : r.grad_variants) parse_variant(v);
  return r;
}

void echo_config(const json& config, const std::filesystem::path& dir) {
  binio::write_text(dir / "config.json", config.dump(2) + "\n");
}

Dataset dataset_for(const Resolved& r, std::ostream& out) {
  if (!r.data_dir.empty()) {
    Dataset d = load_dataset(r.data_dir);
    EnvConfig want = r.env;
    want.horizon = want.effective_horizon();
    if (!(d.env == want)) throw ConfigError("dataset in " + r.data_dir + " was generated with a different env config");
    return d;
  }
  out << "generating " << r.num_demos << " demonstrations (seed " << r.seed << ")\n";
  return generate_dataset(r.env, r.num_demos, r.seed);
}

int cmd_gen_data(const Resolved& r, const std::filesystem::path& dir, std::ostream& out) {
  const Dataset d = generate_dataset(r.env, r.num_demos, r.seed);
  save_dataset(d, dir / "dataset");
  out << "wrote " << d.trajectories.size() << " trajectories (" << d.frame_count() << " frames) to "
      << (dir / "dataset").string() << "\n";
  return kExitOk;
}

int cmd_train(const Resolved& r, const std::filesystem::path& dir, std::ostream& out) {
  const Dataset d = dataset_for(r, out);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(d, r.train, r.variant, [&](const EpochLog& e) {
    if (e.epoch == 1 || e.epoch % 10 == 0 || e.epoch == r.train.epochs)
      out << "epoch " << e.epoch << " total " << e.total << " policy " << e.policy << " pred " << e.pred << " dist "
          << e.dist << " lr " << e.lr << std::endl;
  });
  save_checkpoint(result.checkpoint, dir / "checkpoint");
  write_loss_csv(result.log, dir / "loss.csv");
  out << "trained " << to_string(r.variant) << " for " << r.train.epochs << " epochs in " << std::fixed
      << std::setprecision(1) << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
      << " s; checkpoint at " << (dir / "checkpoint").string() << "\n"
      << std::defaultfloat;
  return kExitOk;
}

int cmd_eval(const Resolved& r, const std::filesystem::path& dir, std::ostream& out) {
  if (r.checkpoint.empty()) throw ConfigError("eval needs a checkpoint (--checkpoint or eval.checkpoint)");
  Checkpoint ckpt = load_checkpoint(r.checkpoint);
  const EnvConfig env = ckpt.env;
  LearnedAgent agent(std::move(ckpt));
  RolloutConfig cfg = r.rollout;
  if (r.epsilon > 0.0) {
    cfg.epsilon = r.epsilon;
  } else {
    Resolved data = r;
    data.env = env;
    cfg.epsilon = calibrate_epsilon(agent, dataset_for(data, out), r.epsilon_quantile);
    out << "calibrated epsilon " << cfg.epsilon << " (quantile " << r.epsilon_quantile << ")\n";
  }
  const EvalReport report = evaluate(agent, to_string(agent.checkpoint().variant), env, r.eval_n, r.eval_seed, cfg);
  write_report(report, dir / "report.json");
  export_curves(report.results, dir / "curves.csv");
  out << to_string(env.task) << " " << to_string(env.difficulty) << " " << report.agent << ": env SR "
      << report.env_success_rate << " (" << report.env_successes << "/" << report.n_rollouts << "), auto SR "
      << report.auto_success_rate << ", detection accuracy " << report.detection_accuracy << "\n";
  return kExitOk;
}

std::string fmt(const json& v, int precision = 3) {
  if (v.is_null()) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v.get<double>();
  return s.str();
}

int cmd_report(const std::vector<std::string>& reports, const std::filesystem::path& dir, std::ostream& out) {
  if (reports.empty()) throw ConfigError("report needs one or more report.json paths");
  std::ostringstream table;
  table << std::left << std::setw(22) << "variant" << std::setw(12) << "task" << std::setw(6) << "n" << std::setw(9)
        << "env SR" << std::setw(9) << "auto SR" << std::setw(10) << "accuracy" << std::setw(8) << "recall"
        << std::setw(8) << "mono" << "ms/step\n";
  std::vector<std::pair<double, std::string>> ranking;
  for (const auto& path : reports) {
    json j;
    try {
      j = json::parse(binio::read_text(path));
    } catch (const json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
    const std::string task = j.at("env").at("task").get<std::string>() + " " +
                             j.at("env").at("difficulty").get<std::string>();
    table << std::setw(22) << j.at("agent").get<std::string>() << std::setw(12) << task << std::setw(6)
          << j.at("n_rollouts").get<std::size_t>() << std::setw(9) << fmt(j.at("env_success_rate")) << std::setw(9)
          << fmt(j.at("auto_success_rate")) << std::setw(10) << fmt(j.at("detection_accuracy")) << std::setw(8)
          << fmt(j.at("detection_recall")) << std::setw(8) << fmt(j.at("monotonicity"))
          << fmt(json(1e3 * j.at("mean_inference_seconds_per_step").get<double>())) << "\n";
    ranking.emplace_back(j.at("env_success_rate").get<double>(), j.at("agent").get<std::string>() + " (" + task + ")");
  }
  std::stable_sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  table << "\nordering by env SR:";
  for (std::size_t i = 0; i < ranking.size(); ++i) table << (i ? " >= " : " ") << ranking[i].second;
  table << "\n";
  binio::write_text(dir / "summary.txt", table.str());
  out << table.str();
  return kExitOk;
}

int cmd_grad_check(const Resolved& r, std::ostream& out) {
  const Dataset d = generate_dataset(r.env, r.grad_demos, r.grad_seed);
  TrainConfig cfg = tiny_grad_config();
  cfg.shaping = r.train.shaping;
  cfg.dist_samples_per_batch = r.grad_batch;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& name : r.grad_variants) {
    const FdReport report = check_total_loss_gradients(d, cfg, parse_variant(name), r.grad_batch, r.grad_seed);
    for (const auto& [group, err] : report.per_group()) {
      out << name << " " << group << " max_rel_error " << std::scientific << std::setprecision(3) << err
          << std::defaultfloat << "\n";
      worst = std::max(worst, err);
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = worst < r.grad_tolerance;
  out << "max_rel_error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat << " tolerance "
      << r.grad_tolerance << " seconds " << std::fixed << std::setprecision(2) << seconds << std::defaultfloat
      << (ok ? " OK" : " FAILED") << "\n";
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

json default_config() {
  TrainConfig train;
  json t = train;
  t.erase("seed");
  return {{"seed", 0},
          {"out", "runs"},
          {"variant", to_string(Variant::hypernet)},
          {"env", EnvConfig{}},
          {"data", {{"num_demos", 200}, {"dir", ""}}},
          {"train", t},
          {"eval",
           {{"checkpoint", ""},
            {"n", 50},
            {"seed", kEvalSeedBase},
            {"epsilon", 0.0},
            {"epsilon_quantile", 0.95},
            {"rollout", RolloutConfig{0, 0.1, true, false, false}}}},
          {"grad_check",
           {{"batch_size", 2},
            {"num_demos", 4},
            {"seed", 0},
            {"tolerance", 1e-5},
            {"variants", {"hypernet", "hypernet_no_shaping", "gcbc", "direct_map_scalar", "direct_map_bias"}}}}};
}

void merge_config(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config" + (where.empty() ? "" : " at '" + where + "'") + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, path);
    } else {
      if (std::string(kind(slot)) != kind(value))
        throw ConfigError("config key '" + path + "' expects a " + kind(slot) + ", got " + kind(value));
      slot = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    parts.push_back(part);
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_config(config, patch);
}

void validate_config(const json& config) { resolve(config); }

std::filesystem::path make_run_dir(const json& config, const std::string& command) {
  const std::string dump = config.dump();
  const auto hash = binio::hex64(binio::fnv1a64({reinterpret_cast<const unsigned char*>(dump.data()), dump.size()}));
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << command << "-" << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << "-" << hash.substr(0, 8);
  const std::filesystem::path base = std::filesystem::path(config.at("out").get<std::string>()) / name.str();
  std::filesystem::path dir = base;
  for (int i = 1; std::filesystem::exists(dir); ++i) dir = base.string() + "-" + std::to_string(i);
  std::filesystem::create_directories(dir);
  return dir;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Goal-conditioned hypernetwork policies on a toy point-mass world", "hypergoal"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir, data_dir, checkpoint;
  std::vector<std::string> reports;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file overlaid on the defaults");
    sub->add_option("--set", overrides, "override one value, key.path=value (repeatable)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out_dir, "parent directory for run directories");
  };
  auto* gen = app.add_subcommand("gen-data", "generate expert demonstrations");
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint and loss log");
  auto* ev = app.add_subcommand("eval", "roll out a checkpoint and write a report and distance curves");
  auto* rep = app.add_subcommand("report", "summarize eval reports side by side");
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every trainable group");
  for (auto* sub : {gen, tr, ev, rep, gc}) common(sub);
  tr->add_option("--data", data_dir, "dataset directory (default: generate from the config)");
  ev->add_option("--data", data_dir, "dataset directory used to calibrate epsilon");
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory");
  rep->add_option("reports", reports, "report.json files")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  json config = default_config();
  std::filesystem::path dir;
  try {
    if (!config_path.empty()) {
      json file;
      try {
        file = json::parse(binio::read_text(config_path));
      } catch (const json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
      }
      merge_config(config, file);
    }
    for (const auto& o : overrides) apply_override(config, o);
    if (seed) config["seed"] = *seed;
    if (!out_dir.empty()) config["out"] = out_dir;
    if (!data_dir.empty()) config["data"]["dir"] = data_dir;
    if (!checkpoint.empty()) config["eval"]["checkpoint"] = checkpoint;
    if (command == "eval" && !config["eval"]["checkpoint"].get<std::string>().empty()) {
      // The evaluated environment is the one the checkpoint was trained on.
      const auto ck = std::filesystem::path(config["eval"]["checkpoint"].get<std::string>()) / "ckpt.json";
      if (std::filesystem::exists(ck)) config["env"] = json::parse(binio::read_text(ck)).at("env");
    }
    validate_config(config);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  try {
    const Resolved r = resolve(config);
    dir = make_run_dir(config, command);
    echo_config(config, dir);
    int code = kExitOk;
    if (command == "gen-data") code = cmd_gen_data(r, dir, out);
    else if (command == "train") code = cmd_train(r, dir, out);
    else if (command == "eval") code = cmd_eval(r, dir, out);
    else if (command == "report") code = cmd_report(reports, dir, out);
    else code = cmd_grad_check(r, out);
    out << "run_dir " << dir.string() << "\n";
    return code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (!dir.empty()) err << "run_dir " << dir.string() << "\n";
    return kExitFailure;
  }
}

}  // namespace hypergoal::cli
