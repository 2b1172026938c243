#pragma once

#include <map>
#include <string>
#include <vector>

#include "sdh/tensor/tensor.hpp"

namespace sdh::tensor {

// Checkpoint container: "SDCK" magic, u32 version, u64 JSON index length,
// JSON index (names, shapes, dtype, offsets, metadata), little-endian raw
// payload.
struct CheckpointEntry {
  std::string name;
  Shape shape;
};

template <typename T>
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor<T>>> tensors;  // ordered

  void add(const std::string& name, const Tensor<T>& t) {
    tensors.emplace_back(name, t);
  }
  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::string& path);

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path);

}  // namespace sdh::tensor
