#pragma once

// Offline transition datasets.
//
// File layout ("DRVFDAT1" container, see binary_io.hpp): the JSON header holds
// the metadata, the row count and the column widths; the payload stores the
// columns one after another in the order state, action, reward, next_state,
// done, each column row-major.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/envs.hpp"
#include "drvf/matrix.hpp"

namespace drvf::data {

struct DatasetMeta {
  std::string env;
  std::string behavior;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::size_t horizon = 0;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t discrete_actions = 0;
};

struct OfflineDataset {
  DatasetMeta meta;
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector dones;

  std::size_t size() const noexcept { return rewards.size(); }
  bool empty() const noexcept { return rewards.empty(); }
  // Throws FormatError (offset 0) when column lengths disagree, a reward is
  // not finite or a done flag is not 0/1.
  void validate() const;
  // Undiscounted return of every episode, split at done flags.
  std::vector<double> episode_returns() const;
};

// m complete episodes from `behavior` ∈ {random, mediocre, mixed, expert}.
// "mixed" flips a fair coin per episode between mediocre and random.
OfflineDataset generate_dataset(const std::string& env_id, const std::string& behavior,
                                std::size_t episodes, std::uint64_t seed);

std::vector<std::uint8_t> encode_dataset(const OfflineDataset& ds);
OfflineDataset decode_dataset(std::vector<std::uint8_t> bytes);
void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

// Labelled (s, a) probe pairs for the uncertainty report.
struct ProbeSets {
  Matrix in_states, in_actions;
  Matrix ood_states, ood_actions;
};

struct ProbeOptions {
  std::size_t size = 1000;
  std::uint64_t seed = 0;
  // OOD actions are uniform on [ood_low, ood_high] per dimension; with
  // `mirror` the sign is flipped at random, giving [−high, −low] ∪ [low, high].
  double ood_low = 0.7;
  double ood_high = 1.0;
  bool mirror = true;
  // When set, OOD actions come from this policy instead of the region.
  std::function<Vector(std::span<const double>)> expert;
};

// In-distribution pairs are dataset rows drawn with replacement; OOD pairs
// reuse the same states. Throws UsageError on an empty dataset.
ProbeSets ood_probe_sets(const OfflineDataset& ds, const ProbeOptions& options);

}  // namespace drvf::data
