#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "levemb/losses.hpp"
#include "levemb/model.hpp"

namespace levemb {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  LossSpec loss;
  std::size_t epochs = 0;            // requested
  std::size_t epochs_completed = 0;
  std::int64_t adam_steps = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::string dataset_hash;          // FNV-1a of the training pair file
  double mean_distance = 0.0;        // M

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::unique_ptr<EmbeddingModel<float>> model;
};

// `LEVEMB01`, u64 LE header length, JSON header, then float32 LE arrays
// (parameters, Adam moments, batch-norm running statistics) in manifest order.
void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel<float>& model,
                     const CheckpointMeta& meta);
// Throws DataError on a bad magic, version or manifest.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a of a file's bytes as 16 hex digits.
std::string fnv1a_file(const std::filesystem::path& path);

}  // namespace levemb
