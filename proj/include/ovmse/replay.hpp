#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ovmse/episode.hpp"

namespace ovmse {

using EpisodePtr = std::shared_ptr<const EpisodeRecord>;

// Fixed-capacity FIFO of whole episodes. One writer and one reader; every
// public operation takes the lock for its own duration only.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);
  ReplayBuffer(const ReplayBuffer& other);
  ReplayBuffer& operator=(const ReplayBuffer&) = delete;

  void add(EpisodeRecord episode);
  void add(EpisodePtr episode);

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::uint64_t insertions() const;

  // Uniform with replacement over the currently stored episodes.
  std::vector<EpisodePtr> sample(std::size_t count, Rng& rng) const;

  // Oldest first.
  std::vector<EpisodePtr> contents() const;

 private:
  std::size_t capacity_;
  std::vector<EpisodePtr> ring_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::uint64_t insertions_ = 0;
  mutable std::mutex mutex_;
};

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetMeta {
  int format_version = kDatasetFormatVersion;
  std::string env_name;
  // Fixture parameters as flat key/value strings (grid size, payoff, ...).
  std::vector<std::pair<std::string, std::string>> env_params;
  DecPomdpSpec spec;
  std::string mode;  // "medium" or "medium-replay"
  std::string behavior_checkpoint_hash;
  double behavior_mean_return = 0.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<EpisodePtr> episodes;

  double mean_return() const;
};

// Line-delimited JSON: one metadata object, then one object per episode.
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(const std::string& text);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

// Offline episodes in a batch: round-half-to-even of ratio * batch_size.
std::size_t offline_share(double ratio, std::size_t batch_size);

// Draws round(ratio * B) episodes from the offline dataset and the rest from
// the online buffer, each uniform with replacement. Offline episodes come
// first in the returned batch.
class MixingRatioSampler {
 public:
  MixingRatioSampler(double ratio, const Dataset* offline, const ReplayBuffer* online);

  double ratio() const { return ratio_; }
  // Whether both sources can currently serve a batch of this size.
  bool ready(std::size_t batch_size, std::size_t warmup_episodes) const;
  std::vector<EpisodePtr> sample(std::size_t batch_size, Rng& rng) const;

 private:
  double ratio_;
  const Dataset* offline_;
  const ReplayBuffer* online_;
};

// Episodes packed for the learner. Every episode contributes length + 1
// decision points ("slots": each step plus the final observation) and
// `length` transitions. Packing replaces zero-padding to the longest episode;
// averages are taken over real transitions only.
struct Batch {
  std::size_t n_agents = 0;
  std::size_t action_dim = 0;
  std::size_t input_dim = 0;
  std::size_t state_dim = 0;
  std::size_t episodes = 0;
  std::size_t slots = 0;

  Tensor agent_inputs;               // [slots * n_agents x input_dim]
  Tensor states;                     // [slots x state_dim]
  std::vector<std::uint8_t> avail;   // [slots * n_agents * action_dim]

  std::vector<std::size_t> slot;     // per transition; successor is slot + 1
  std::vector<int> actions;          // [transitions * n_agents]
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminated;

  std::size_t transitions() const { return slot.size(); }
};

Batch make_batch(const std::vector<EpisodePtr>& episodes, const DecPomdpSpec& spec,
                 const NetShape& shape);

}  // namespace ovmse
