#include "drvf/dataset.hpp"

#include <cmath>

#include "drvf/binary_io.hpp"
#include "drvf/errors.hpp"

namespace drvf::data {
namespace {

constexpr std::string_view kMagic = "DRVFDAT1";

void append_row(Matrix& m, std::size_t row, std::span<const double> v) {
  std::copy(v.begin(), v.end(), m.row(row).begin());
}

nlohmann::json meta_json(const DatasetMeta& m) {
  return {{"env", m.env},
          {"behavior", m.behavior},
          {"seed", m.seed},
          {"episodes", m.episodes},
          {"horizon", m.horizon},
          {"state_dim", m.state_dim},
          {"action_dim", m.action_dim},
          {"discrete_actions", m.discrete_actions}};
}

}  // namespace

void OfflineDataset::validate() const {
  const std::size_t n = size();
  if (states.rows() != n || actions.rows() != n || next_states.rows() != n || dones.size() != n) {
    throw FormatError("dataset columns have different lengths", 0);
  }
  if (states.cols() != meta.state_dim || next_states.cols() != meta.state_dim ||
      actions.cols() != meta.action_dim) {
    throw FormatError("dataset column widths disagree with metadata", 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(rewards[i])) throw FormatError("non-finite reward at row " + std::to_string(i), 0);
    if (dones[i] != 0.0 && dones[i] != 1.0) {
      throw FormatError("done flag is not 0/1 at row " + std::to_string(i), 0);
    }
  }
}

std::vector<double> OfflineDataset::episode_returns() const {
  std::vector<double> out;
  double acc = 0.0;
  bool open = false;
  for (std::size_t i = 0; i < size(); ++i) {
    acc += rewards[i];
    open = true;
    if (dones[i] == 1.0) {
      out.push_back(acc);
      acc = 0.0;
      open = false;
    }
  }
  if (open) out.push_back(acc);
  return out;
}

OfflineDataset generate_dataset(const std::string& env_id, const std::string& behavior,
                                std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ConfigError("generate_dataset: need at least one episode");
  const auto env = envs::make_env(env_id);
  const bool mixed = behavior == "mixed";
  const auto primary = envs::make_behavior(*env, mixed ? "mediocre" : behavior);
  const auto random = envs::make_behavior(*env, "random");

  const std::size_t T = env->horizon();
  OfflineDataset ds;
  ds.meta = {env_id, behavior, seed, episodes, T, env->state_dim(), env->action_dim(),
             env->discrete_actions()};
  const std::size_t rows = episodes * T;
  ds.states = Matrix(rows, env->state_dim());
  ds.actions = Matrix(rows, env->action_dim());
  ds.rewards.assign(rows, 0.0);
  ds.next_states = Matrix(rows, env->state_dim());
  ds.dones.assign(rows, 0.0);

  std::size_t row = 0;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    Rng rng = Rng::keyed(seed, {ep});
    const bool use_random = mixed && rng.uniform() < 0.5;
    const auto& pi = use_random ? random : primary;
    Vector s = env->reset(rng);
    for (std::size_t t = 0; t < T; ++t, ++row) {
      const Vector a = pi(s, rng);
      auto step = env->step(s, a, rng);
      append_row(ds.states, row, s);
      append_row(ds.actions, row, a);
      ds.rewards[row] = step.reward;
      append_row(ds.next_states, row, step.next_state);
      ds.dones[row] = (step.terminal || t + 1 == T) ? 1.0 : 0.0;
      s = std::move(step.next_state);
    }
  }
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const OfflineDataset& ds) {
  ds.validate();
  nlohmann::json header;
  header["format"] = "drvf-dataset";
  header["version"] = 1;
  header["meta"] = meta_json(ds.meta);
  header["rows"] = ds.size();
  header["columns"] = nlohmann::json::array({
      {{"name", "state"}, {"width", ds.meta.state_dim}},
      {{"name", "action"}, {"width", ds.meta.action_dim}},
      {{"name", "reward"}, {"width", 1}},
      {{"name", "next_state"}, {"width", ds.meta.state_dim}},
      {{"name", "done"}, {"width", 1}},
  });
  io::Writer w(kMagic, header);
  w.put(ds.states.flat());
  w.put(ds.actions.flat());
  w.put(ds.rewards);
  w.put(ds.next_states.flat());
  w.put(ds.dones);
  return w.bytes();
}

OfflineDataset decode_dataset(std::vector<std::uint8_t> bytes) {
  io::Reader r(std::move(bytes), kMagic);
  const auto& h = r.header();
  OfflineDataset ds;
  std::size_t rows = 0;
  try {
    if (h.at("format").get<std::string>() != "drvf-dataset") {
      throw FormatError("not a drvf-dataset header", 16);
    }
    const auto& m = h.at("meta");
    ds.meta.env = m.at("env").get<std::string>();
    ds.meta.behavior = m.at("behavior").get<std::string>();
    ds.meta.seed = m.at("seed").get<std::uint64_t>();
    ds.meta.episodes = m.at("episodes").get<std::size_t>();
    ds.meta.horizon = m.at("horizon").get<std::size_t>();
    ds.meta.state_dim = m.at("state_dim").get<std::size_t>();
    ds.meta.action_dim = m.at("action_dim").get<std::size_t>();
    ds.meta.discrete_actions = m.at("discrete_actions").get<std::size_t>();
    rows = h.at("rows").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt dataset header: ") + e.what(), 16);
  }
  auto take_matrix = [&](std::size_t cols) {
    Matrix m(rows, cols);
    const auto v = r.take(rows * cols);
    std::copy(v.begin(), v.end(), m.data());
    return m;
  };
  ds.states = take_matrix(ds.meta.state_dim);
  ds.actions = take_matrix(ds.meta.action_dim);
  ds.rewards = r.take(rows);
  ds.next_states = take_matrix(ds.meta.state_dim);
  ds.dones = r.take(rows);
  r.finish();
  ds.validate();
  return ds;
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  io::write_file(path, bytes);
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

ProbeSets ood_probe_sets(const OfflineDataset& ds, const ProbeOptions& options) {
  if (ds.empty()) throw UsageError("ood_probe_sets: dataset is empty");
  if (options.size == 0) throw UsageError("ood_probe_sets: probe size must be positive");
  if (!(options.ood_low <= options.ood_high)) throw ConfigError("ood_probe_sets: empty OOD region");
  const std::size_t ds_dim = ds.meta.state_dim, da = ds.meta.action_dim;
  ProbeSets p{Matrix(options.size, ds_dim), Matrix(options.size, da), Matrix(options.size, ds_dim),
              Matrix(options.size, da)};
  Rng rng(options.seed);
  for (std::size_t i = 0; i < options.size; ++i) {
    const std::size_t row = rng.index(ds.size());
    append_row(p.in_states, i, ds.states.row(row));
    append_row(p.in_actions, i, ds.actions.row(row));
    append_row(p.ood_states, i, ds.states.row(row));
    if (options.expert) {
      const Vector a = options.expert(ds.states.row(row));
      require_shape(a.size() == da, "ood_probe_sets: expert action width mismatch");
      append_row(p.ood_actions, i, a);
    } else {
      for (std::size_t k = 0; k < da; ++k) {
        double a = rng.uniform(options.ood_low, options.ood_high);
        if (options.mirror && rng.uniform() < 0.5) a = -a;
        p.ood_actions(i, k) = a;
      }
    }
  }
  return p;
}

}  // namespace drvf::data
