#include "nuq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "nuq/errors.hpp"

namespace nuq {

namespace {
constexpr char kMagic[8] = {'N', 'U', 'Q', 'C', 'K', 'P', 'T', '\n'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("checkpoint: truncated read in " + path);
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
  uint64_t n = read_pod<uint64_t>(in, path);
  if (n > (1ULL << 30)) throw FormatError("checkpoint: absurd string length in " + path);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw FormatError("checkpoint: truncated string in " + path);
  return s;
}
}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : blobs)
    if (n == name) return &t;
  return nullptr;
}

bool CheckpointData::has_prefix(const std::string& prefix) const {
  for (const auto& [n, t] : blobs)
    if (n.rfind(prefix, 0) == 0) return true;
  return false;
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open for write: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, data.version);
  write_string(out, data.config_echo);
  write_pod<uint64_t>(out, data.blobs.size());
  for (const auto& [name, t] : data.blobs) {
    write_string(out, name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<uint32_t>(out, static_cast<uint32_t>(t.dim(i)));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw FormatError("checkpoint: write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  CheckpointData data;
  data.version = read_pod<uint32_t>(in, path);
  if (data.version != 1)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(data.version) +
                      " in " + path);
  data.config_echo = read_string(in, path);
  uint64_t n_blobs = read_pod<uint64_t>(in, path);
  for (uint64_t i = 0; i < n_blobs; ++i) {
    std::string name = read_string(in, path);
    uint32_t ndim = read_pod<uint32_t>(in, path);
    if (ndim > 8) throw FormatError("checkpoint: absurd rank in " + path);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d)
      shape.push_back(static_cast<int>(read_pod<uint32_t>(in, path)));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw FormatError("checkpoint: truncated blob '" + name + "' in " + path);
    data.blobs.emplace_back(std::move(name), std::move(t));
  }
  return data;
}

}  // namespace nuq
