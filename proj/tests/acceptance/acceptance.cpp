#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <regex>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"
#include "hypergoal/binio.hpp"
#include "hypergoal/evalrt.hpp"
#include "hypergoal/shaping.hpp"

using namespace hypergoal;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail << std::endl;
}

std::string num(double v, int precision = 3) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() / ("hypergoal_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

struct Trained {
  Checkpoint ckpt;
  std::vector<EpochLog> log;
  double seconds;
};

Trained train_variant(const Dataset& d, Variant v) {
  const auto start = Clock::now();
  TrainConfig cfg;
  TrainResult r = train(d, cfg, v);
  const double s = seconds_since(start);
  std::cerr << "  trained " << to_string(v) << " on " << to_string(d.env.task) << " in " << num(s, 4) << " s"
            << std::endl;
  return {std::move(r.checkpoint), std::move(r.log), s};
}

EvalReport eval_env_sr(const Checkpoint& ckpt, const Dataset& d, bool regenerate = true) {
  LearnedAgent agent(ckpt);
  RolloutConfig cfg;
  cfg.epsilon = calibrate_epsilon(agent, d);
  cfg.stop_on_detection = false;
  cfg.regenerate_every_step = regenerate;
  return evaluate(agent, to_string(ckpt.variant), ckpt.env, 50, kEvalSeedBase, cfg);
}

void criterion_gradients(const std::filesystem::path& work) {
  std::ostringstream out, err;
  const auto start = Clock::now();
  const int code = cli::run({"grad-check", "--out", (work / "runs").string()}, out, err);
  const double s = seconds_since(start);
  const std::string text = out.str();
  const std::regex line(R"((\S+) (\S+) max_rel_error (\S+))");
  double worst = INFINITY;
  std::size_t groups = 0;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), line);
       it != std::sregex_iterator(); ++it, ++groups) {
    worst = groups == 0 ? std::stod((*it)[3]) : std::max(worst, std::stod((*it)[3]));
  }
  report(1, code == 0 && groups > 0 && worst < 1e-5 && s < 120.0, "gradient suite",
         "max relative error " + num(worst) + " over " + std::to_string(groups) + " variant/group pairs (< 1e-5), " +
             num(s) + " s (< 120 s)");
}

void criterion_packing() {
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> width(1, 40), depth(2, 5);
  bool round_ok = true;
  for (int i = 0; i < 1000 && round_ok; ++i) {
    std::vector<std::size_t> dims(depth(rng));
    for (auto& w : dims) w = width(rng);
    const PolicyLayout layout(dims);
    ParamVector theta{std::vector<double>(layout.param_count())};
    std::normal_distribution<double> normal(0.0, 10.0);
    for (auto& v : theta.values) v = normal(rng);
    round_ok = pack(unpack(theta, layout), layout).values == theta.values;
  }
  bool length_ok = true;
  for (int i = 0; i < 100 && length_ok; ++i) {
    std::vector<std::size_t> dims(depth(rng));
    for (auto& w : dims) w = width(rng);
    dims.front() = window_feature_dim(4);
    HypernetConfig cfg;
    cfg.latent_dim = 4;
    cfg.embed_dim = 4;
    cfg.embed_hidden = 8;
    cfg.block_hidden = 4;
    cfg.num_blocks = 2;
    cfg.layout = PolicyLayout(dims);
    Rng init(i);
    const ParamSet params = init_hypernet(cfg, init);
    std::normal_distribution<double> normal;
    LatentVector zc{{normal(rng), normal(rng), normal(rng), normal(rng)}};
    LatentVector zg{{normal(rng), normal(rng), normal(rng), normal(rng)}};
    length_ok = generate_params(params, cfg, zc, zg).size() == cfg.layout.param_count();
  }
  report(2, round_ok && length_ok, "packing invariants",
         std::string("1000 pack/unpack roundtrips ") + (round_ok ? "bit-identical" : "MISMATCH") +
             ", generated length == param_count for 100 layouts: " + (length_ok ? "yes" : "no"));
}

void criterion_hinge() {
  Rng rng(77);
  std::uniform_int_distribution<std::size_t> len(2, 30), dim(1, 12);
  std::uniform_real_distribution<double> beta_dist(0.0, 0.5);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  int with_margin = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = len(rng), d = dim(rng);
    ShapingConfig cfg;
    cfg.beta = i % 2 ? beta_dist(rng) : 0.0;
    with_margin += cfg.beta > 0.0;
    std::vector<LatentVector> z(n);
    for (auto& v : z) {
      v.values.resize(d);
      for (auto& x : v.values) x = normal(rng);
    }
    LatentVector ref{std::vector<double>(d)};
    for (auto& x : ref.values) x = normal(rng);
    double brute = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j)
      brute += std::max(0.0, cfg.beta + latent_distance(z[j + 1], ref, cfg.metric) - latent_distance(z[j], ref, cfg.metric));
    Tensor rows({n, d});
    for (std::size_t j = 0; j < n; ++j) std::copy(z[j].values.begin(), z[j].values.end(), rows.data().begin() + j * d);
    Graph g;
    const double graph_loss = g.scalar(dist_loss(g, g.input("z", rows), g.input("ref", Tensor::row(ref.values)), cfg));
    worst = std::max({worst, std::abs(dist_loss(z, ref, cfg) - brute), std::abs(graph_loss - brute)});
  }
  report(3, worst <= 1e-12, "hinge-loss oracle",
         "max |dist_loss - brute force| = " + num(worst) + " over 1000 sequences (" + std::to_string(with_margin) +
             " with beta > 0), tolerance 1e-12");
}

}  // namespace

int main() {
  const auto work = scratch_dir();
  std::cout << std::unitbuf;

  criterion_gradients(work);
  criterion_packing();
  criterion_hinge();

  EnvConfig reach_env;
  EnvConfig push_env;
  push_env.task = Task::push;
  const Dataset reach = generate_dataset(reach_env, 200, 0);
  const Dataset push = generate_dataset(push_env, 200, 0);

  const Trained reach_hyper = train_variant(reach, Variant::hypernet);
  {
    const double first = reach_hyper.log.front().total, last = reach_hyper.log.back().total;
    report(4, last < 0.2 * first && reach_hyper.seconds <= 600.0, "training viability",
           "reach d0 M=200: final total " + num(last) + " / epoch-1 total " + num(first) + " = " + num(last / first) +
               " (< 0.2), " + num(reach_hyper.seconds, 4) + " s (<= 600 s)");
  }

  const Trained reach_gcbc = train_variant(reach, Variant::gcbc);
  const Trained reach_plain = train_variant(reach, Variant::hypernet_no_shaping);
  const EvalReport r_hyper = eval_env_sr(reach_hyper.ckpt, reach);
  const EvalReport r_gcbc = eval_env_sr(reach_gcbc.ckpt, reach);
  const EvalReport r_plain = eval_env_sr(reach_plain.ckpt, reach);

  const Trained push_hyper = train_variant(push, Variant::hypernet);
  const Trained push_gcbc = train_variant(push, Variant::gcbc);
  const EvalReport p_hyper = eval_env_sr(push_hyper.ckpt, push);
  const EvalReport p_gcbc = eval_env_sr(push_gcbc.ckpt, push);
  {
    const bool ok = r_hyper.env_success_rate >= 0.90 && p_hyper.env_success_rate >= 0.60 &&
                    r_hyper.env_success_rate >= r_gcbc.env_success_rate - 0.05 &&
                    p_hyper.env_success_rate >= p_gcbc.env_success_rate - 0.05;
    auto order = [](double h, double g) { return h > g ? "hypernet > gcbc" : h < g ? "gcbc > hypernet" : "hypernet = gcbc"; };
    report(5, ok, "policy quality",
           "reach hypernet " + num(r_hyper.env_success_rate) + " (>= 0.90) vs gcbc " + num(r_gcbc.env_success_rate) +
               " [" + order(r_hyper.env_success_rate, r_gcbc.env_success_rate) + "]; push hypernet " +
               num(p_hyper.env_success_rate) + " (>= 0.60) vs gcbc " + num(p_gcbc.env_success_rate) + " [" +
               order(p_hyper.env_success_rate, p_gcbc.env_success_rate) + "]; margin 0.05");
  }
  {
    const double shaped = r_hyper.monotonicity.value_or(0.0), plain = r_plain.monotonicity.value_or(0.0);
    report(6, shaped >= 0.90 && shaped - plain >= 0.05, "shaping effect",
           "monotonicity over successful reach rollouts: shaped " + num(shaped, 4) + " (>= 0.90), no shaping " +
               num(plain, 4) + ", difference " + num(shaped - plain, 3) + " (>= 0.05)");
  }
  {
    const double acc = r_hyper.detection_accuracy;
    const double rec = r_hyper.detection_recall.value_or(0.0);
    LearnedAgent agent(reach_hyper.ckpt);
    RolloutConfig strict;
    strict.epsilon = r_hyper.rollout.epsilon;
    strict.stop_on_detection = true;
    const EvalReport s = evaluate(agent, "hypernet", reach_env, 50, kEvalSeedBase, strict);
    report(7, acc >= 0.85 && rec >= 0.90, "goal detection",
           "epsilon " + num(r_hyper.rollout.epsilon) + " (0.95 nearest-rank), accuracy " + num(acc) +
               " (>= 0.85), recall " + num(rec) + " (>= 0.90); with detection ending the episode: accuracy " +
               num(s.detection_accuracy) + ", recall " + num(s.detection_recall.value_or(0.0)) + ", env SR " +
               num(s.env_success_rate));
  }

  const Trained push_scalar = train_variant(push, Variant::direct_map_scalar);
  const Trained push_bias = train_variant(push, Variant::direct_map_bias);
  {
    const EvalReport a = eval_env_sr(push_scalar.ckpt, push);
    const EvalReport b = eval_env_sr(push_bias.ckpt, push);
    const double best = std::max(a.env_success_rate, b.env_success_rate);
    report(8, p_hyper.env_success_rate >= best, "direct-map ordering",
           "push: refinement " + num(p_hyper.env_success_rate) + " vs direct_map_scalar " + num(a.env_success_rate) +
               ", direct_map_bias " + num(b.env_success_rate) + " [" +
               (p_hyper.env_success_rate >= best ? "refinement >= best direct map" : "direct map ahead") + "]");
  }

  {
    // Determinism is independent of budget; a reduced pipeline keeps this step short.
    const std::vector<std::string> settings{"--seed", "11", "--set", "data.num_demos=20", "--set", "train.epochs=5",
                                            "--set", "eval.n=10", "--out", (work / "pipelines").string()};
    auto step = [&](std::vector<std::string> args) {
      args.insert(args.end(), settings.begin(), settings.end());
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) throw std::runtime_error("pipeline step failed: " + err.str());
      const std::string text = out.str();
      const auto pos = text.rfind("run_dir ");
      return std::filesystem::path(text.substr(pos + 8, text.find('\n', pos) - pos - 8));
    };
    std::vector<std::string> losses, counts;
    for (int run = 0; run < 2; ++run) {
      const auto data = step({"gen-data"}) / "dataset";
      const auto trained = step({"train", "--data", data.string()});
      const auto evaluated = step({"eval", "--data", data.string(), "--checkpoint", (trained / "checkpoint").string()});
      losses.push_back(binio::read_text(trained / "loss.csv"));
      const auto j = nlohmann::json::parse(binio::read_text(evaluated / "report.json"));
      counts.push_back(j.at("env_successes").dump() + "/" + j.at("auto_successes").dump());
    }
    report(9, losses[0] == losses[1] && counts[0] == counts[1], "determinism",
           std::string("loss CSVs ") + (losses[0] == losses[1] ? "identical" : "DIFFER") +
               ", env/auto success counts " + counts[0] + " vs " + counts[1]);
  }

  {
    LearnedAgent agent(reach_hyper.ckpt);
    RolloutConfig cfg;
    cfg.epsilon = r_hyper.rollout.epsilon;
    cfg.stop_on_detection = false;
    cfg.record_params = true;
    cfg.regenerate_every_step = false;
    const EvalReport once = evaluate(agent, "hypernet", reach_env, 50, kEvalSeedBase, cfg);
    bool constant = true;
    for (const auto& r : once.results)
      for (const auto& theta : r.params) constant = constant && theta == r.params.front();
    cfg.record_params = false;
    const EvalReport once_timed = evaluate(agent, "hypernet", reach_env, 50, kEvalSeedBase, cfg);
    cfg.regenerate_every_step = true;
    const EvalReport every = evaluate(agent, "hypernet", reach_env, 50, kEvalSeedBase, cfg);
    const double a = once_timed.mean_inference_seconds_per_step, b = every.mean_inference_seconds_per_step;
    report(10, constant && a < b, "generate-once variant",
           std::string("parameters ") + (constant ? "bitwise constant" : "CHANGED") + " within all 50 rollouts; " +
               num(a * 1e3) + " ms/step vs " + num(b * 1e3) + " ms/step regenerating; env SR " +
               num(once_timed.env_success_rate) + " vs " + num(every.env_success_rate));
  }

  std::filesystem::remove_all(work);
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
