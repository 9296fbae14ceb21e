#include "talu/datasets.hpp"

#include <array>
#include <fstream>

#include "talu/error.hpp"
#include "talu/rng.hpp"

namespace talu {

Tensor Dataset::batch(std::span<const int64_t> indices) const {
  const int64_t img = height * width * channels;
  Tensor out =
      Tensor::uninitialized({static_cast<int64_t>(indices.size()), height,
                             width, channels});
  std::span<double> dst = out.mutable_data();
  int64_t o = 0;
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= size()) {
      throw ContractError("batch: index " + std::to_string(idx) +
                          " out of range for " + name + " of size " +
                          std::to_string(size()));
    }
    const uint8_t* src = pixels.data() + idx * img;
    for (int64_t i = 0; i < img; ++i) {
      dst[o++] = static_cast<double>(src[i]) / 255.0;
    }
  }
  return out;
}

Tensor Dataset::all_images() const {
  std::vector<int64_t> indices(static_cast<size_t>(size()));
  for (int64_t i = 0; i < size(); ++i) indices[static_cast<size_t>(i)] = i;
  return batch(indices);
}

namespace {

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

uint32_t read_be32(const std::vector<uint8_t>& bytes, size_t offset) {
  return (uint32_t(bytes[offset]) << 24) | (uint32_t(bytes[offset + 1]) << 16) |
         (uint32_t(bytes[offset + 2]) << 8) | uint32_t(bytes[offset + 3]);
}

void check_labels(const std::vector<int>& labels,
                  const std::filesystem::path& path) {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= kNumClasses) {
      throw DataError(path.string() + ": label " + std::to_string(labels[i]) +
                      " at record " + std::to_string(i) + " is outside [0,10)");
    }
  }
}

// Big-endian idx format: magic, dims, payload.
std::vector<uint8_t> read_idx(const std::filesystem::path& path,
                              uint32_t want_magic, int dims,
                              std::array<uint32_t, 3>& sizes) {
  std::vector<uint8_t> bytes = read_file(path);
  const size_t header = 4 + 4 * static_cast<size_t>(dims);
  if (bytes.size() < header) {
    throw FormatError(path.string() + ": truncated header (" +
                      std::to_string(bytes.size()) + " bytes)");
  }
  const uint32_t magic = read_be32(bytes, 0);
  if (magic != want_magic) {
    throw FormatError(path.string() + ": bad magic " + std::to_string(magic) +
                      ", expected " + std::to_string(want_magic));
  }
  size_t payload = 1;
  for (int d = 0; d < dims; ++d) {
    sizes[static_cast<size_t>(d)] = read_be32(bytes, 4 + 4 * static_cast<size_t>(d));
    payload *= sizes[static_cast<size_t>(d)];
  }
  if (bytes.size() != header + payload) {
    throw FormatError(path.string() + ": expected " +
                      std::to_string(header + payload) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  bytes.erase(bytes.begin(), bytes.begin() + static_cast<long>(header));
  return bytes;
}

Dataset load_mnist_split(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
  std::array<uint32_t, 3> img_sizes{};
  std::vector<uint8_t> pixels = read_idx(images_path, 0x00000803, 3, img_sizes);
  std::array<uint32_t, 3> label_sizes{};
  std::vector<uint8_t> raw_labels =
      read_idx(labels_path, 0x00000801, 1, label_sizes);
  if (img_sizes[0] != label_sizes[0]) {
    throw DataError(images_path.string() + " has " +
                    std::to_string(img_sizes[0]) + " images but " +
                    labels_path.string() + " has " +
                    std::to_string(label_sizes[0]) + " labels");
  }
  Dataset data;
  data.name = "mnist";
  data.height = img_sizes[1];
  data.width = img_sizes[2];
  data.channels = 1;
  data.pixels = std::move(pixels);
  data.labels.assign(raw_labels.begin(), raw_labels.end());
  check_labels(data.labels, labels_path);
  return data;
}

}  // namespace

DatasetPair load_mnist(const std::filesystem::path& dir) {
  DatasetPair pair;
  pair.train = load_mnist_split(dir / "train-images-idx3-ubyte",
                                dir / "train-labels-idx1-ubyte");
  pair.test = load_mnist_split(dir / "t10k-images-idx3-ubyte",
                               dir / "t10k-labels-idx1-ubyte");
  return pair;
}

namespace {

constexpr int64_t kCifarSide = 32;
constexpr int64_t kCifarChannels = 3;
constexpr int64_t kCifarRecord = 1 + kCifarSide * kCifarSide * kCifarChannels;
constexpr int64_t kCifarPerFile = 10000;

// 3073-byte records: label byte, then the three color planes. Planar RGB
// becomes interleaved HWC.
void append_cifar_file(const std::filesystem::path& path, Dataset& data) {
  std::vector<uint8_t> bytes = read_file(path);
  if (static_cast<int64_t>(bytes.size()) != kCifarRecord * kCifarPerFile) {
    throw FormatError(path.string() + ": expected " +
                      std::to_string(kCifarRecord * kCifarPerFile) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  const int64_t plane = kCifarSide * kCifarSide;
  for (int64_t r = 0; r < kCifarPerFile; ++r) {
    const uint8_t* rec = bytes.data() + r * kCifarRecord;
    const int label = rec[0];
    if (label < 0 || label >= kNumClasses) {
      throw DataError(path.string() + ": label " + std::to_string(label) +
                      " at record " + std::to_string(r) + " is outside [0,10)");
    }
    data.labels.push_back(label);
    const uint8_t* planes = rec + 1;
    const size_t base = data.pixels.size();
    data.pixels.resize(base + static_cast<size_t>(plane * kCifarChannels));
    uint8_t* dst = data.pixels.data() + base;
    for (int64_t p = 0; p < plane; ++p) {
      for (int64_t c = 0; c < kCifarChannels; ++c) {
        dst[p * kCifarChannels + c] = planes[c * plane + p];
      }
    }
  }
}

}  // namespace

DatasetPair load_cifar10(const std::filesystem::path& dir) {
  DatasetPair pair;
  for (Dataset* split : {&pair.train, &pair.test}) {
    split->name = "cifar10";
    split->height = kCifarSide;
    split->width = kCifarSide;
    split->channels = kCifarChannels;
  }
  for (int i = 1; i <= 5; ++i) {
    append_cifar_file(dir / ("data_batch_" + std::to_string(i) + ".bin"),
                      pair.train);
  }
  append_cifar_file(dir / "test_batch.bin", pair.test);
  return pair;
}

DatasetPair load_dataset(std::string_view name,
                         const std::filesystem::path& dir) {
  if (name == "mnist") return load_mnist(dir);
  if (name == "cifar10") return load_cifar10(dir);
  throw DataError("unknown dataset \"" + std::string(name) +
                  "\"; expected mnist or cifar10");
}

Dataset subset_per_class(const Dataset& data, int64_t per_class,
                         uint64_t seed) {
  if (per_class <= 0) {
    throw DataError("subset_per_class: per_class must be positive, got " +
                    std::to_string(per_class));
  }
  std::vector<std::vector<int64_t>> by_class(kNumClasses);
  for (int64_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<size_t>(data.labels[static_cast<size_t>(i)])]
        .push_back(i);
  }
  Rng rng(seed);
  std::vector<int64_t> chosen;
  chosen.reserve(static_cast<size_t>(per_class * kNumClasses));
  for (int c = 0; c < kNumClasses; ++c) {
    auto& pool = by_class[static_cast<size_t>(c)];
    if (static_cast<int64_t>(pool.size()) < per_class) {
      throw DataError(data.name + ": class " + std::to_string(c) + " has " +
                      std::to_string(pool.size()) + " examples, need " +
                      std::to_string(per_class));
    }
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
  }
  Dataset out;
  out.name = data.name;
  out.height = data.height;
  out.width = data.width;
  out.channels = data.channels;
  const int64_t img = data.height * data.width * data.channels;
  out.pixels.reserve(chosen.size() * static_cast<size_t>(img));
  out.labels.reserve(chosen.size());
  for (int64_t idx : chosen) {
    const uint8_t* src = data.pixels.data() + idx * img;
    out.pixels.insert(out.pixels.end(), src, src + img);
    out.labels.push_back(data.labels[static_cast<size_t>(idx)]);
  }
  return out;
}

}  // namespace talu
