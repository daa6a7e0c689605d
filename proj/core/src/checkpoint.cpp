#include "alma/diff/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace alma::diff {

namespace {

constexpr char kMagic[8] = {'A', 'L', 'M', 'A', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

enum SectionKind : std::uint8_t { kTensor = 0, kBlob = 1 };

}  // namespace

void Checkpoint::put_u64(const std::string& name, std::uint64_t v) {
  std::string b(sizeof v, '\0');
  std::memcpy(b.data(), &v, sizeof v);
  blobs[name] = std::move(b);
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end() || it->second.size() != sizeof(std::uint64_t))
    throw ConfigError("checkpoint: missing or malformed counter '" + name + "'");
  std::uint64_t v = 0;
  std::memcpy(&v, it->second.data(), sizeof v);
  return v;
}

void Checkpoint::put_params(const std::string& prefix, const ParameterGraph& pg,
                            bool with_optimizer) {
  for (const auto& name : pg.names()) {
    tensors[prefix + "." + name] = pg.value(name);
    if (with_optimizer) tensors[prefix + ".optim." + name] = pg.slot(name).rms_v;
  }
}

void Checkpoint::load_params(const std::string& prefix, ParameterGraph& pg,
                             bool with_optimizer) const {
  for (const auto& name : pg.names()) {
    auto it = tensors.find(prefix + "." + name);
    if (it == tensors.end())
      throw ConfigError("checkpoint: parameter '" + prefix + "." + name +
                        "' not found (architecture mismatch?)");
    if (!it->second.same_shape(pg.value(name)))
      throw ConfigError("checkpoint: shape mismatch for '" + prefix + "." + name +
                        "' (architecture mismatch between checkpoint and config)");
    pg.value(name).mat() = it->second.mat();
    if (with_optimizer) {
      auto ot = tensors.find(prefix + ".optim." + name);
      if (ot == tensors.end())
        throw ConfigError("checkpoint: optimizer state for '" + name + "' not found");
      pg.slot(name).rms_v.mat() = ot->second.mat();
    }
  }
}

void Checkpoint::put_popart(const std::string& prefix, const PopArtState& pa) {
  Tensor t(1, 4);
  t.mat() << pa.mean_raw, pa.second_moment_raw, static_cast<Scalar>(pa.steps), pa.decay;
  tensors[prefix] = t;
}

PopArtState Checkpoint::get_popart(const std::string& prefix) const {
  auto it = tensors.find(prefix);
  if (it == tensors.end() || it->second.size() != 4)
    throw ConfigError("checkpoint: missing Pop-Art state '" + prefix + "'");
  PopArtState pa;
  pa.mean_raw = it->second.mat()(0, 0);
  pa.second_moment_raw = it->second.mat()(0, 1);
  pa.steps = static_cast<std::int64_t>(it->second.mat()(0, 2));
  pa.decay = it->second.mat()(0, 3);
  return pa;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kVersion);
  write_u64(os, tensors.size() + blobs.size());
  for (const auto& [name, t] : tensors) {
    os.put(static_cast<char>(kTensor));
    write_str(os, name);
    write_u32(os, 2);
    write_u64(os, static_cast<std::uint64_t>(t.rows()));
    write_u64(os, static_cast<std::uint64_t>(t.cols()));
    // Raw 64-bit IEEE values; this artifact targets little-endian hosts.
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(t.size())));
  }
  for (const auto& [name, b] : blobs) {
    os.put(static_cast<char>(kBlob));
    write_str(os, name);
    write_u64(os, b.size());
    os.write(b.data(), static_cast<std::streamsize>(b.size()));
  }
  if (!os) throw ConfigError("checkpoint: write to '" + path + "' failed");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ConfigError("checkpoint: '" + path + "' is not a checkpoint file");
  const std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t sections = read_u64(is);

  Checkpoint ck;
  for (std::uint64_t i = 0; i < sections; ++i) {
    const int kind = is.get();
    const std::string name = read_str(is);
    if (kind == kTensor) {
      const std::uint32_t ndims = read_u32(is);
      if (ndims != 2) throw ConfigError("checkpoint: unsupported tensor rank");
      const auto rows = static_cast<Index>(read_u64(is));
      const auto cols = static_cast<Index>(read_u64(is));
      Tensor t(rows, cols);
      is.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(t.size())));
      ck.tensors[name] = std::move(t);
    } else if (kind == kBlob) {
      const std::uint64_t n = read_u64(is);
      std::string b(n, '\0');
      is.read(b.data(), static_cast<std::streamsize>(n));
      ck.blobs[name] = std::move(b);
    } else {
      throw ConfigError("checkpoint: corrupt section kind");
    }
    if (!is) throw ConfigError("checkpoint: truncated file '" + path + "'");
  }
  return ck;
}

}  // namespace alma::diff
