#include "ovmse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ovmse/errors.hpp"

namespace ovmse {

namespace {

bool has_space_or(std::string_view s, char extra) {
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == extra) return true;
  }
  return s.empty();
}

void append_le(std::string& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

// Reads one '\n'-terminated line starting at pos.
std::string_view next_line(std::string_view bytes, std::size_t& pos) {
  const auto end = bytes.find('\n', pos);
  if (end == std::string_view::npos) throw ArtifactError("checkpoint: truncated header");
  auto line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

std::size_t parse_count(std::string_view line, std::string_view keyword) {
  if (line.substr(0, keyword.size()) != keyword || line.size() <= keyword.size() + 1 ||
      line[keyword.size()] != ' ') {
    throw ArtifactError("checkpoint: expected '" + std::string(keyword) + " <count>'");
  }
  try {
    return std::stoul(std::string(line.substr(keyword.size() + 1)));
  } catch (const std::exception&) {
    throw ArtifactError("checkpoint: bad count in '" + std::string(line) + "'");
  }
}

}  // namespace

void Checkpoint::add(const std::string& name, Tensor tensor) {
  if (has_space_or(name, '\0')) throw ConfigError("checkpoint: invalid tensor name '" + name + "'");
  if (has(name)) throw ConfigError("checkpoint: duplicate tensor '" + name + "'");
  tensors.emplace_back(name, std::move(tensor));
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ArtifactError("checkpoint: missing tensor '" + name + "'");
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ArtifactError("checkpoint: missing meta key '" + key + "'");
  return it->second;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream header;
  header << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  header << "meta " << ckpt.meta.size() << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (has_space_or(k, '=') || v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint: invalid meta entry '" + k + "'");
    }
    header << k << '=' << v << '\n';
  }
  header << "tensors " << ckpt.tensors.size() << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    header << name << " f64 ";
    for (std::size_t i = 0; i < t.shape().size(); ++i) {
      if (i) header << ',';
      header << t.shape()[i];
    }
    header << '\n';
  }
  std::string out = header.str();
  for (const auto& [name, t] : ckpt.tensors) {
    for (double x : t.storage()) append_le(out, x);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  std::size_t pos = 0;
  const auto magic_line = next_line(bytes, pos);
  const std::string expected = std::string(kCheckpointMagic) + ' ';
  if (magic_line.substr(0, expected.size()) != expected) {
    throw ArtifactError("checkpoint: bad magic");
  }
  if (magic_line.substr(expected.size()) != std::to_string(kCheckpointVersion)) {
    throw ArtifactError("checkpoint: unsupported format version '" +
                        std::string(magic_line.substr(expected.size())) + "'");
  }
  Checkpoint ckpt;
  const std::size_t n_meta = parse_count(next_line(bytes, pos), "meta");
  for (std::size_t i = 0; i < n_meta; ++i) {
    const auto line = next_line(bytes, pos);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ArtifactError("checkpoint: bad meta line");
    ckpt.meta.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  const std::size_t n_tensors = parse_count(next_line(bytes, pos), "tensors");
  std::vector<std::pair<std::string, std::vector<std::size_t>>> layout;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    std::istringstream line{std::string(next_line(bytes, pos))};
    std::string name, dtype, dims;
    line >> name >> dtype;
    std::getline(line >> std::ws, dims);
    if (dtype != "f64") throw ArtifactError("checkpoint: unsupported dtype '" + dtype + "'");
    std::vector<std::size_t> shape;
    std::stringstream ds(dims);
    std::string d;
    while (std::getline(ds, d, ',')) {
      try {
        shape.push_back(std::stoul(d));
      } catch (const std::exception&) {
        throw ArtifactError("checkpoint: bad shape for '" + name + "'");
      }
    }
    layout.emplace_back(name, std::move(shape));
  }
  for (auto& [name, shape] : layout) {
    const std::size_t n = shape_product(shape);
    if (bytes.size() < pos + 8 * n) throw ArtifactError("checkpoint: truncated payload");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_le(bytes.data() + pos + 8 * i);
    pos += 8 * n;
    try {
      ckpt.tensors.emplace_back(name, Tensor(shape, std::move(data)));
    } catch (const ConfigError& e) {
      throw ArtifactError("checkpoint: tensor '" + name + "': " + e.what());
    }
  }
  if (pos != bytes.size()) throw ArtifactError("checkpoint: trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

void add_param_values(Checkpoint& ckpt, const ParamSet& params, const std::string& prefix) {
  for (const auto& e : params.entries()) ckpt.add(prefix + e.name, e.value);
}

void load_param_values(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix) {
  for (auto& e : params.entries()) {
    const Tensor& t = ckpt.get(prefix + e.name);
    if (t.shape() != e.value.shape()) {
      throw ConfigError("checkpoint: architecture mismatch for '" + e.name + "': file " +
                        t.shape_string() + " vs network " + e.value.shape_string());
    }
    e.value = t;
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kDigits[value & 0xf];
    value >>= 4;
  }
  return s;
}

std::string file_hash(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file_bytes(path)));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArtifactError("write failed for '" + path.string() + "'");
}

}  // namespace ovmse
