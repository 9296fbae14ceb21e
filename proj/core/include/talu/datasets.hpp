#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "talu/tensor.hpp"

namespace talu {

inline constexpr int kNumClasses = 10;

// Images stay as the raw bytes they were read from disk; batch() scales them
// to [0, 1] doubles on the way into the model.
struct Dataset {
  std::string name;  // "mnist" or "cifar10"
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;  // size * height * width * channels
  std::vector<int> labels;      // each in [0, 10)

  int64_t size() const { return static_cast<int64_t>(labels.size()); }

  // [indices.size(), H, W, C] with pixels / 255.
  Tensor batch(std::span<const int64_t> indices) const;
  // The whole split in order.
  Tensor all_images() const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// Reads train-images-idx3-ubyte, train-labels-idx1-ubyte,
// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte from dir.
DatasetPair load_mnist(const std::filesystem::path& dir);

// Reads data_batch_1..5.bin and test_batch.bin from dir.
DatasetPair load_cifar10(const std::filesystem::path& dir);

// Loader for either by name.
DatasetPair load_dataset(std::string_view name,
                         const std::filesystem::path& dir);

// Seeded class-balanced sample: per_class examples of every label, in label
// order. Throws DataError when a class cannot supply enough examples.
Dataset subset_per_class(const Dataset& data, int64_t per_class,
                         uint64_t seed);

}  // namespace talu
