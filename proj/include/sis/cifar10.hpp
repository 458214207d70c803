#pragma once

#include "sis/image.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sis {

// CIFAR-10 binary layout: records of 3073 bytes, 1 label byte (0-9) followed
// by 3072 pixel bytes in channel-plane order (1024 R, 1024 G, 1024 B),
// row-major 32x32. The in-memory batch is pixel-major; the loader and writer
// convert between the two layouts.
inline constexpr int kCifarSide = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr int kCifarClasses = 10;
inline constexpr int kCifarRecordBytes = 3073;
inline constexpr InputShape kCifarShape{kCifarSide, kCifarSide,
                                        kCifarChannels};

struct DatasetManifest {
  struct FileEntry {
    std::string path;
    int records = 0;
    std::uint64_t fnv1a = 0;  // checksum of the raw bytes
  };
  std::vector<FileEntry> files;
  std::string split;  // train | test | extra
  int total_records = 0;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

std::pair<ImageBatch, DatasetManifest> load_cifar10(
    const std::vector<std::string>& paths, const std::string& split = "train");

void write_cifar10(const ImageBatch& batch, const std::string& path);

void save_dataset_manifest(const DatasetManifest& manifest,
                           const std::string& path);
DatasetManifest load_dataset_manifest(const std::string& path);

}  // namespace sis
