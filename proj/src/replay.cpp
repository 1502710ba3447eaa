#include "ovmse/replay.hpp"

#include <cfenv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ovmse/checkpoint.hpp"
#include "ovmse/errors.hpp"

namespace ovmse {

using Json = nlohmann::ordered_json;

// -------------------------------------------------------------- replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be >= 1");
  ring_.reserve(capacity_);
}

ReplayBuffer::ReplayBuffer(const ReplayBuffer& other) : capacity_(other.capacity_) {
  std::lock_guard lock(other.mutex_);
  ring_ = other.ring_;
  head_ = other.head_;
  insertions_ = other.insertions_;
}

void ReplayBuffer::add(EpisodeRecord episode) {
  add(std::make_shared<const EpisodeRecord>(std::move(episode)));
}

void ReplayBuffer::add(EpisodePtr episode) {
  std::lock_guard lock(mutex_);
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(episode));
  } else {
    ring_[head_] = std::move(episode);
    head_ = (head_ + 1) % capacity_;
  }
  ++insertions_;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return ring_.size();
}

std::uint64_t ReplayBuffer::insertions() const {
  std::lock_guard lock(mutex_);
  return insertions_;
}

std::vector<EpisodePtr> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  std::lock_guard lock(mutex_);
  if (count > 0 && ring_.empty()) throw UsageError("sampling from an empty replay buffer");
  std::vector<EpisodePtr> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(ring_[rng.index(ring_.size())]);
  return out;
}

std::vector<EpisodePtr> ReplayBuffer::contents() const {
  std::lock_guard lock(mutex_);
  std::vector<EpisodePtr> out;
  out.reserve(ring_.size());
  for (std::size_t i = 0; i < ring_.size(); ++i) out.push_back(ring_[(head_ + i) % ring_.size()]);
  return out;
}

// ------------------------------------------------------------------- dataset

double Dataset::mean_return() const {
  if (episodes.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ep : episodes) total += ep->episode_return;
  return total / static_cast<double>(episodes.size());
}

namespace {

Json nested(const std::vector<double>& flat, std::size_t rows) {
  Json out = Json::array();
  const std::size_t width = rows == 0 ? 0 : flat.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    out.push_back(std::vector<double>(flat.begin() + r * width, flat.begin() + (r + 1) * width));
  }
  return out;
}

Json nested_mask(const std::vector<std::uint8_t>& flat, std::size_t rows) {
  Json out = Json::array();
  const std::size_t width = rows == 0 ? 0 : flat.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    Json row = Json::array();
    for (std::size_t k = 0; k < width; ++k) row.push_back(static_cast<int>(flat[r * width + k]));
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<double> flatten(const Json& j) {
  std::vector<double> out;
  for (const auto& row : j) {
    for (const auto& x : row) out.push_back(x.get<double>());
  }
  return out;
}

std::vector<std::uint8_t> flatten_mask(const Json& j) {
  std::vector<std::uint8_t> out;
  for (const auto& row : j) {
    for (const auto& x : row) out.push_back(static_cast<std::uint8_t>(x.get<int>() != 0));
  }
  return out;
}

Json spec_json(const DecPomdpSpec& s) {
  Json j;
  j["n_agents"] = s.n_agents;
  j["state_dim"] = s.state_dim;
  j["obs_dim"] = s.obs_dim;
  j["action_dim"] = s.action_dim;
  j["horizon"] = s.horizon;
  j["gamma"] = s.gamma;
  return j;
}

DecPomdpSpec spec_from_json(const Json& j) {
  DecPomdpSpec s;
  s.n_agents = j.at("n_agents").get<std::size_t>();
  s.state_dim = j.at("state_dim").get<std::size_t>();
  s.obs_dim = j.at("obs_dim").get<std::size_t>();
  s.action_dim = j.at("action_dim").get<std::size_t>();
  s.horizon = j.at("horizon").get<std::size_t>();
  s.gamma = j.at("gamma").get<double>();
  return s;
}

Json timestep_json(const std::vector<double>& state, const std::vector<double>& obs,
                   const std::vector<std::uint8_t>& avail, std::size_t n_agents) {
  Json j;
  j["state"] = state;
  j["obs"] = nested(obs, n_agents);
  j["avail"] = nested_mask(avail, n_agents);
  return j;
}

}  // namespace

std::string encode_dataset(const Dataset& dataset) {
  const auto& m = dataset.meta;
  const std::size_t n = m.spec.n_agents;
  std::string out;
  Json meta;
  meta["format_version"] = m.format_version;
  Json fixture;
  fixture["name"] = m.env_name;
  for (const auto& [k, v] : m.env_params) fixture[k] = v;
  meta["env"] = fixture;
  meta["spec"] = spec_json(m.spec);
  meta["mode"] = m.mode;
  meta["behavior_checkpoint_hash"] = m.behavior_checkpoint_hash;
  meta["behavior_mean_return"] = m.behavior_mean_return;
  meta["seed"] = m.seed;
  meta["episodes"] = dataset.episodes.size();
  out += meta.dump();
  out += '\n';
  for (const auto& ep : dataset.episodes) {
    Json e;
    e["seed"] = ep->seed;
    Json steps = Json::array();
    for (const auto& s : ep->steps) {
      Json js = timestep_json(s.state, s.obs, s.avail, n);
      js["action"] = s.action;
      js["reward"] = s.reward;
      js["term"] = s.terminated;
      js["trunc"] = s.truncated;
      steps.push_back(std::move(js));
    }
    e["steps"] = std::move(steps);
    e["final"] = timestep_json(ep->final.state, ep->final.obs, ep->final.avail, n);
    out += e.dump();
    out += '\n';
  }
  return out;
}

Dataset decode_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Dataset ds;
  if (!std::getline(in, line)) throw ArtifactError("dataset: empty file");
  try {
    const Json meta = Json::parse(line);
    ds.meta.format_version = meta.at("format_version").get<int>();
    if (ds.meta.format_version != kDatasetFormatVersion) {
      throw ArtifactError("dataset: unsupported format_version " +
                          std::to_string(ds.meta.format_version));
    }
    for (const auto& [k, v] : meta.at("env").items()) {
      if (k == "name") {
        ds.meta.env_name = v.get<std::string>();
      } else {
        ds.meta.env_params.emplace_back(k, v.get<std::string>());
      }
    }
    ds.meta.spec = spec_from_json(meta.at("spec"));
    ds.meta.mode = meta.at("mode").get<std::string>();
    ds.meta.behavior_checkpoint_hash = meta.at("behavior_checkpoint_hash").get<std::string>();
    ds.meta.behavior_mean_return = meta.at("behavior_mean_return").get<double>();
    ds.meta.seed = meta.at("seed").get<std::uint64_t>();
    const std::size_t expected = meta.at("episodes").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json e = Json::parse(line);
      EpisodeRecord ep;
      ep.seed = e.at("seed").get<std::uint64_t>();
      for (const auto& js : e.at("steps")) {
        StepRecord s;
        s.state = js.at("state").get<std::vector<double>>();
        s.obs = flatten(js.at("obs"));
        s.avail = flatten_mask(js.at("avail"));
        s.action = js.at("action").get<std::vector<int>>();
        s.reward = js.at("reward").get<double>();
        s.terminated = js.at("term").get<bool>();
        s.truncated = js.at("trunc").get<bool>();
        ep.episode_return += s.reward;
        ep.steps.push_back(std::move(s));
      }
      const Json& f = e.at("final");
      ep.final.state = f.at("state").get<std::vector<double>>();
      ep.final.obs = flatten(f.at("obs"));
      ep.final.avail = flatten_mask(f.at("avail"));
      ep.validate(ds.meta.spec);
      ds.episodes.push_back(std::make_shared<const EpisodeRecord>(std::move(ep)));
    }
    if (ds.episodes.size() != expected) {
      throw ArtifactError("dataset: metadata announces " + std::to_string(expected) +
                          " episodes, file has " + std::to_string(ds.episodes.size()));
    }
  } catch (const Json::exception& e) {
    throw ArtifactError(std::string("dataset: malformed record: ") + e.what());
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file_bytes(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ArtifactError("dataset file not found: '" + path.string() + "'");
  }
  return decode_dataset(read_file_bytes(path));
}

// ------------------------------------------------------------------- sampler

std::size_t offline_share(double ratio, std::size_t batch_size) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("mixing ratio must lie in [0, 1]");
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(ratio * static_cast<double>(batch_size));
  std::fesetround(saved);
  return static_cast<std::size_t>(r);
}

MixingRatioSampler::MixingRatioSampler(double ratio, const Dataset* offline,
                                       const ReplayBuffer* online)
    : ratio_(ratio), offline_(offline), online_(online) {
  if (!(ratio_ >= 0.0 && ratio_ <= 1.0)) throw ConfigError("mixing ratio must lie in [0, 1]");
  if (ratio_ > 0.0 && (offline_ == nullptr || offline_->episodes.empty())) {
    throw ConfigError("mixing ratio > 0 needs a non-empty offline dataset");
  }
  if (ratio_ < 1.0 && online_ == nullptr) throw ConfigError("mixing ratio < 1 needs an online buffer");
}

bool MixingRatioSampler::ready(std::size_t batch_size, std::size_t warmup_episodes) const {
  const std::size_t n_off = offline_share(ratio_, batch_size);
  if (n_off < batch_size && (online_ == nullptr || online_->size() < warmup_episodes ||
                             online_->size() == 0)) {
    return false;
  }
  return true;
}

std::vector<EpisodePtr> MixingRatioSampler::sample(std::size_t batch_size, Rng& rng) const {
  const std::size_t n_off = offline_share(ratio_, batch_size);
  const std::size_t n_on = batch_size - n_off;
  std::vector<EpisodePtr> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < n_off; ++i) {
    out.push_back(offline_->episodes[rng.index(offline_->episodes.size())]);
  }
  if (n_on > 0) {
    if (online_->size() == 0) {
      throw UsageError("online buffer is empty; defer learning until warm-up completes");
    }
    auto online = online_->sample(n_on, rng);
    out.insert(out.end(), online.begin(), online.end());
  }
  return out;
}

// --------------------------------------------------------------------- batch

Batch make_batch(const std::vector<EpisodePtr>& episodes, const DecPomdpSpec& spec,
                 const NetShape& shape) {
  shape.check_compatible(spec);
  Batch b;
  b.n_agents = spec.n_agents;
  b.action_dim = spec.action_dim;
  b.input_dim = shape.agent_input_dim();
  b.state_dim = spec.state_dim;
  b.episodes = episodes.size();
  std::size_t slots = 0;
  for (const auto& ep : episodes) slots += ep->length() + 1;
  b.slots = slots;
  std::vector<double> inputs;
  inputs.reserve(slots * b.n_agents * b.input_dim);
  std::vector<double> states;
  states.reserve(slots * b.state_dim);
  b.avail.reserve(slots * b.n_agents * b.action_dim);
  std::size_t base = 0;
  for (const auto& ep : episodes) {
    auto enc = encode_episode_inputs(*ep, spec, shape.history_window, shape.append_agent_id);
    inputs.insert(inputs.end(), enc.begin(), enc.end());
    for (std::size_t t = 0; t < ep->length(); ++t) {
      const auto& s = ep->steps[t];
      states.insert(states.end(), s.state.begin(), s.state.end());
      b.avail.insert(b.avail.end(), s.avail.begin(), s.avail.end());
      b.slot.push_back(base + t);
      b.actions.insert(b.actions.end(), s.action.begin(), s.action.end());
      b.rewards.push_back(s.reward);
      b.terminated.push_back(s.terminated ? 1 : 0);
    }
    states.insert(states.end(), ep->final.state.begin(), ep->final.state.end());
    b.avail.insert(b.avail.end(), ep->final.avail.begin(), ep->final.avail.end());
    base += ep->length() + 1;
  }
  b.agent_inputs = Tensor({slots * b.n_agents, b.input_dim}, std::move(inputs));
  b.states = Tensor({slots, b.state_dim}, std::move(states));
  return b;
}

}  // namespace ovmse
