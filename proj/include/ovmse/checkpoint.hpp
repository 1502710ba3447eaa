#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ovmse/param_set.hpp"
#include "ovmse/tensor.hpp"

namespace ovmse {

inline constexpr std::string_view kCheckpointMagic = "OVMSE-CKPT";
inline constexpr int kCheckpointVersion = 1;

// Container layout:
//
//   OVMSE-CKPT <version>\n
//   meta <count>\n
//   <key>=<value>\n            (count lines, sorted by key)
//   tensors <count>\n
//   <name> f64 <d0>,<d1>,...\n (count lines)
//   <raw little-endian float64 payloads, in header order>
//
// Names and meta keys may not contain whitespace or '='; meta values may not
// contain newlines.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Appends every value of `params` under "<prefix><name>".
void add_param_values(Checkpoint& ckpt, const ParamSet& params, const std::string& prefix = "");
// Loads values by name; layout must match exactly.
void load_param_values(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix = "");

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::string file_hash(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ovmse
