#pragma once

// Checkpoints, flat key = value config files, partition dumps and step
// records.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmc/dense.hpp"
#include "lmc/errors.hpp"
#include "lmc/problem.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'L', 'M', 'C', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { Gcn = 0, RecGcn = 1 };

inline ModelKind parse_model(const std::string& s) {
  if (s == "gcn") return ModelKind::Gcn;
  if (s == "recgcn") return ModelKind::RecGcn;
  throw ConfigError("unknown model '" + s + "' (expected gcn or recgcn)");
}

inline const char* to_string(ModelKind m) { return m == ModelKind::Gcn ? "gcn" : "recgcn"; }

struct Checkpoint {
  ModelKind model = ModelKind::Gcn;
  std::vector<DenseMatrix> params;
  std::vector<DenseMatrix> history;  // empty when absent

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw ConfigError("checkpoint truncated while reading " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

inline void put_blocks(std::string& out, const std::vector<DenseMatrix>& blocks) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    put<std::uint64_t>(out, b.rows());
    put<std::uint64_t>(out, b.cols());
  }
  for (const auto& b : blocks)
    for (double v : b.values()) put<double>(out, v);
}

inline std::vector<DenseMatrix> take_blocks(const std::string& in, std::size_t& pos) {
  const auto count = take<std::uint32_t>(in, pos, "block count");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> dims;
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto r = take<std::uint64_t>(in, pos, "block rows");
    const auto c = take<std::uint64_t>(in, pos, "block cols");
    if (r != 0 && c > (in.size() / 8) / r) throw ConfigError("checkpoint block dimensions exceed file size");
    dims.emplace_back(r, c);
    total += r * c;
  }
  if (pos + total * 8 > in.size()) throw ConfigError("checkpoint truncated: header declares more data than present");
  std::vector<DenseMatrix> blocks;
  for (const auto& [r, c] : dims) {
    DenseMatrix m(r, c);
    for (double& v : m.values()) v = take<double>(in, pos, "block data");
    blocks.push_back(std::move(m));
  }
  return blocks;
}

}  // namespace detail

/// Layout: magic[8], u32 version, u32 model, params section, u32 has_history,
/// optional history section. A section is u32 count, count x (u64 rows, u64
/// cols), then the row-major f64 data of every block in order.
inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.model));
  detail::put_blocks(out, c.params);
  detail::put<std::uint32_t>(out, c.history.empty() ? 0u : 1u);
  if (!c.history.empty()) detail::put_blocks(out, c.history);
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& in) {
  if (in.size() < sizeof kCheckpointMagic || std::memcmp(in.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw ConfigError("not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kCheckpointMagic;
  const auto version = detail::take<std::uint32_t>(in, pos, "version");
  if (version != kCheckpointVersion) throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto model = detail::take<std::uint32_t>(in, pos, "model");
  if (model > 1) throw ConfigError("checkpoint: unknown model tag " + std::to_string(model));
  c.model = static_cast<ModelKind>(model);
  c.params = detail::take_blocks(in, pos);
  const auto has_history = detail::take<std::uint32_t>(in, pos, "history flag");
  if (has_history > 1) throw ConfigError("checkpoint: bad history flag");
  if (has_history == 1) c.history = detail::take_blocks(in, pos);
  if (pos != in.size()) throw ConfigError("checkpoint: trailing bytes after declared blocks");
  return c;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

/// Flat "key = value" text; '#' starts a comment. Later keys win.
inline std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline std::map<std::string, std::string> load_config_file(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.string());
}

inline std::string serialize_partition(const Partition& p) {
  std::string out = "# node\tpart\n";
  for (std::size_t v = 0; v < p.part_of.size(); ++v) {
    out += std::to_string(v) + "\t" + std::to_string(p.part_of[v]) + "\n";
  }
  return out;
}

inline nlohmann::ordered_json to_json(const StepReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["grad_norm"] = r.grad_norm;
  if (r.rel_grad_err) j["rel_grad_err"] = *r.rel_grad_err;
  if (r.d_h) j["d_h"] = *r.d_h;
  if (r.d_v) j["d_v"] = *r.d_v;
  if (r.fwd_iters) j["fwd_iters"] = *r.fwd_iters;
  if (r.bwd_iters) j["bwd_iters"] = *r.bwd_iters;
  j["touched_rows"] = r.touched_rows;
  return j;
}

inline StepReport step_report_from_json(const nlohmann::json& j) {
  StepReport r;
  r.step = j.at("step").get<std::size_t>();
  r.loss = j.at("loss").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  if (j.contains("rel_grad_err")) r.rel_grad_err = j["rel_grad_err"].get<double>();
  if (j.contains("d_h")) r.d_h = j["d_h"].get<double>();
  if (j.contains("d_v")) r.d_v = j["d_v"].get<double>();
  if (j.contains("fwd_iters")) r.fwd_iters = j["fwd_iters"].get<int>();
  if (j.contains("bwd_iters")) r.bwd_iters = j["bwd_iters"].get<int>();
  r.touched_rows = j.at("touched_rows").get<std::size_t>();
  return r;
}

}  // namespace lmc
