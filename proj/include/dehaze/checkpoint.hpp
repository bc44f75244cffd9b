#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dehaze/common.hpp"
#include "dehaze/tensor.hpp"

// Versioned named-tensor archive and the checkpoint directory layout.
//
// A checkpoint directory holds:
//   params.bin     all sub-network parameters and normalization buffers
//   optimizer.bin  Adam first/second moments for both optimizer groups
//   state.json     step/epoch counters, optimizer step counts, best metric
//   config.json    the full resolved experiment configuration
//   split.json     identity key -> partition, for exact resumption
//
// Directories are written to "<dir>.tmp" and renamed into place, so a
// half-written checkpoint never shadows a good one. All three sub-network
// families save and restore through one archive, atomically.

namespace dehaze {

inline constexpr char kArchiveMagic[4] = {'D', 'H', 'Z', 'A'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct NamedTensor {
  std::string name;
  const Tensor<float>* tensor;
};

inline void save_archive(const std::string& path, const std::vector<NamedTensor>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write archive: " + path);
  out.write(kArchiveMagic, 4);
  const std::uint32_t version = kArchiveVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t count = entries.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& e : entries) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(e.name.size());
    out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
    out.write(e.name.data(), name_len);
    const std::uint8_t ndim = static_cast<std::uint8_t>(e.tensor->ndim());
    out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
    for (std::size_t d = 0; d < ndim; ++d) {
      const std::int64_t dim = e.tensor->dim(d);
      out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    out.write(reinterpret_cast<const char*>(e.tensor->data()),
              static_cast<std::streamsize>(e.tensor->numel() * sizeof(float)));
  }
  if (!out) throw IoError("short write: " + path);
}

inline std::map<std::string, Tensor<float>> load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open archive: " + path);
  char magic[4];
  in.read(magic, 4);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || std::memcmp(magic, kArchiveMagic, 4) != 0)
    throw CheckpointError("not a parameter archive: " + path);
  if (version != kArchiveVersion)
    throw CheckpointError("unsupported archive version " + std::to_string(version) + ": " + path);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  std::map<std::string, Tensor<float>> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint8_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
    std::vector<std::int64_t> shape(ndim);
    for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), sizeof(d));
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw CheckpointError("truncated archive: " + path);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// Copies archive values into live tensors by name, validating shapes.
template <typename Refs>
void restore_tensors(const std::map<std::string, Tensor<float>>& archive, Refs& refs,
                     const char* what) {
  for (auto& r : refs) {
    auto it = archive.find(r.name);
    if (it == archive.end())
      throw CheckpointError(std::string(what) + " entry missing from checkpoint: " + r.name);
    if (it->second.shape() != r.value->shape())
      throw CheckpointError("checkpoint shape mismatch for " + r.name + ": stored " +
                            Tensor<float>::shape_string(it->second.shape()) + ", model wants " +
                            Tensor<float>::shape_string(r.value->shape()));
    std::copy(it->second.data(), it->second.data() + it->second.numel(), r.value->data());
  }
}

// Atomic directory publish: write under "<dir>.tmp", then swap.
inline std::filesystem::path checkpoint_stage_dir(const std::string& dir) {
  const std::filesystem::path tmp = dir + ".tmp";
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);
  return tmp;
}

inline void checkpoint_publish_dir(const std::string& dir) {
  const std::filesystem::path tmp = dir + ".tmp";
  std::filesystem::remove_all(dir);
  std::filesystem::rename(tmp, dir);
}

}  // namespace dehaze
