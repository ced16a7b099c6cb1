// drvf: command line front end.
//
//   drvf gen-data  --env E --policy P --episodes N --seed S --out FILE
//   drvf train     --config FILE --data FILE --out DIR
//   drvf eval      --policy CKPT --env E --episodes N --seed S
//   drvf uq-report --critic CKPT --data FILE --out CSV
//   drvf verify    [--quick] [--json FILE]
//
// Exit codes: 0 ok, 1 verification or runtime failure, 2 usage error.

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drvf/checks.hpp"
#include "drvf/errors.hpp"
#include "drvf/harness.hpp"

namespace fs = std::filesystem;
using namespace drvf;

namespace {

constexpr int kUsage = 2;

// Thrown for bad flag values caught after parsing.
struct Usage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void must_exist(const fs::path& p, const char* flag) {
  if (!fs::exists(p)) throw Usage(std::string(flag) + ": no such file '" + p.string() + "'");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int gen_data(const std::string& env, const std::string& policy, std::size_t episodes,
             std::uint64_t seed, const fs::path& out) {
  const auto ds = data::generate_dataset(env, policy, episodes, seed);
  data::save_dataset(ds, out);
  double mean = 0.0;
  const auto rets = ds.episode_returns();
  for (double r : rets) mean += r;
  if (!rets.empty()) mean /= static_cast<double>(rets.size());
  std::cout << nlohmann::json{{"rows", ds.size()},
                              {"episodes", rets.size()},
                              {"behavior_return", mean},
                              {"out", out.string()}}
                   .dump()
            << '\n';
  return 0;
}

int train(const fs::path& config_path, const fs::path& data_path, const fs::path& out) {
  must_exist(config_path, "--config");
  must_exist(data_path, "--data");
  auto cfg = harness::TrainConfig::load(config_path);
  cfg.dataset = data_path.string();
  const auto ds = data::load_dataset(data_path);

  fs::create_directories(out);
  std::ofstream(out / "config.json", std::ios::binary) << slurp(config_path);

  std::ofstream metrics(out / "metrics.csv");
  std::ofstream timing(out / "timing.csv");
  metrics << harness::kMetricsHeader << '\n' << std::flush;
  timing << "step,seconds\n" << std::flush;

  harness::TrainHooks hooks;
  hooks.snapshot_dir = out;
  hooks.on_record = [&](const harness::MetricsRecord& r) {
    metrics << harness::metrics_csv_row(r) << '\n' << std::flush;
    std::cerr << "step " << r.step << "  bellman " << r.bellman << "  ood_std " << r.ood_std
              << "  in_std " << r.in_dist_std << "  return " << r.eval_return_mean << '\n';
  };
  hooks.on_timing = [&](std::size_t step, double s) {
    timing << step << ',' << num(s) << '\n' << std::flush;
  };

  auto result = harness::train(cfg, ds, hooks);
  result.policy.save(out / "policy.ckpt");
  result.critic.save(out / "critic.ckpt");
  return 0;
}

int eval(const fs::path& ckpt, const std::string& env_id, std::size_t episodes,
         std::uint64_t seed) {
  must_exist(ckpt, "--policy");
  const auto policy = actor::TanhGaussianPolicy::load(ckpt);
  const auto env = envs::make_env(env_id);
  if (policy.state_dim() != env->state_dim() || policy.action_dim() != env->action_dim()) {
    throw Usage("--env: policy dimensions do not match '" + env_id + "'");
  }
  const auto s = harness::evaluate_policy(*env, policy, episodes, seed);
  std::cout << nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"episodes", episodes}}.dump()
            << '\n';
  return 0;
}

int uq_report(const fs::path& ckpt, const fs::path& data_path, const fs::path& out,
              std::size_t samples, std::size_t size, std::uint64_t seed,
              const std::string& probe) {
  must_exist(ckpt, "--critic");
  must_exist(data_path, "--data");
  const auto critic = critic::EnsembleCritic::load(ckpt);
  const auto ds = data::load_dataset(data_path);
  auto opts = harness::default_probe_options(ds.meta.env, seed);
  opts.size = size;
  if (probe == "region") opts.expert = nullptr;
  else if (probe == "expert" && !opts.expert) throw Usage("--probe expert: no expert for " + ds.meta.env);
  const auto probes = data::ood_probe_sets(ds, opts);
  const std::size_t n = samples ? samples : critic.config().samples;
  const auto rep = harness::uncertainty_report(critic, probes, n, seed);

  std::ofstream csv(out);
  if (!csv) throw std::runtime_error("cannot write '" + out.string() + "'");
  csv << "in_dist_std,ood_std,ratio,pairs,samples\n"
      << num(rep.in_dist_std) << ',' << num(rep.ood_std) << ','
      << (rep.ratio ? num(*rep.ratio) : "null") << ',' << rep.pairs << ',' << rep.samples << '\n';
  std::cout << rep.to_json().dump() << '\n';
  return 0;
}

int verify(bool quick, const std::string& json_out) {
  const auto reports = checks::verify_suite(quick);
  nlohmann::json j = nlohmann::json::array();
  std::string failed;
  for (const auto& r : reports) {
    std::printf("%-4s  %-40s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    j.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    if (!r.pass) failed += (failed.empty() ? "" : ", ") + r.name;
  }
  if (!json_out.empty()) std::ofstream(json_out) << j.dump(2) << '\n';
  if (!failed.empty()) {
    std::fprintf(stderr, "verify: failed: %s\n", failed.c_str());
    return 1;
  }
  std::printf("all %zu checks passed\n", reports.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Per-step buffers sit just above the default mmap threshold.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Diverse randomized value functions for offline RL"};
  app.require_subcommand(1);

  std::string env = envs::kPointMass, policy = "mediocre", out, config, data_path, ckpt, probe,
              json_out;
  std::size_t episodes = 100, samples = 0, size = 1000;
  std::uint64_t seed = 0;
  bool quick = false;

  auto* gen = app.add_subcommand("gen-data", "Roll out a behavior policy into a dataset file");
  gen->add_option("--env", env, "Environment id")->capture_default_str();
  gen->add_option("--policy", policy, "random | mediocre | mixed | expert")->capture_default_str();
  gen->add_option("--episodes", episodes)->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--out", out, "Dataset file")->required();

  auto* tr = app.add_subcommand("train", "Train a policy and critic on a dataset");
  tr->add_option("--config", config, "JSON config")->required();
  tr->add_option("--data", data_path, "Dataset file")->required();
  tr->add_option("--out", out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Roll out a policy checkpoint deterministically");
  ev->add_option("--policy", ckpt, "policy.ckpt")->required();
  ev->add_option("--env", env)->capture_default_str();
  ev->add_option("--episodes", episodes)->capture_default_str();
  ev->add_option("--seed", seed)->capture_default_str();

  auto* uq = app.add_subcommand("uq-report", "In-distribution vs OOD critic uncertainty");
  uq->add_option("--critic", ckpt, "critic.ckpt")->required();
  uq->add_option("--data", data_path, "Dataset file")->required();
  uq->add_option("--out", out, "CSV file")->required();
  uq->add_option("--samples", samples, "Posterior samples per member (0: checkpoint value)")
      ->capture_default_str();
  uq->add_option("--size", size, "Pairs per probe set")->capture_default_str();
  uq->add_option("--seed", seed)->capture_default_str();
  uq->add_option("--probe", probe, "expert | region (default: expert when the env has one)")
      ->check(CLI::IsMember({"expert", "region"}));

  auto* ver = app.add_subcommand("verify", "Run the numerical self-checks");
  ver->add_flag("--quick", quick, "Smaller Monte-Carlo sizes");
  ver->add_option("--json", json_out, "Also write the results as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return gen_data(env, policy, episodes, seed, out);
    if (*tr) return train(config, data_path, out);
    if (*ev) return eval(ckpt, env, episodes, seed);
    if (*uq) return uq_report(ckpt, data_path, out, samples, size, seed, probe);
    if (*ver) return verify(quick, json_out);
  } catch (const Usage& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}
