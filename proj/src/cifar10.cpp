#include "sis/cifar10.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace sis {

namespace {

std::uint64_t fnv1a_bytes(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::pair<ImageBatch, DatasetManifest> load_cifar10(
    const std::vector<std::string>& paths, const std::string& split) {
  require(!paths.empty(), "load_cifar10: no input files");

  DatasetManifest manifest;
  manifest.split = split;

  std::vector<std::string> blobs;
  blobs.reserve(paths.size());
  int total = 0;
  for (const auto& path : paths) {
    std::string bytes = read_file_bytes(path);
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw DataError(path + ": byte length " + std::to_string(bytes.size()) +
                      " is not a multiple of " +
                      std::to_string(kCifarRecordBytes) +
                      " (truncated record at offset " +
                      std::to_string(bytes.size() -
                                     bytes.size() % kCifarRecordBytes) +
                      ")");
    }
    const int records = static_cast<int>(bytes.size() / kCifarRecordBytes);
    manifest.files.push_back({path, records, fnv1a_bytes(bytes)});
    total += records;
    blobs.push_back(std::move(bytes));
  }
  manifest.total_records = total;

  const int plane = kCifarSide * kCifarSide;
  Matrix values(total, kCifarShape.features());
  IntVector labels(total);

  int row = 0;
  for (std::size_t f = 0; f < blobs.size(); ++f) {
    const auto& bytes = blobs[f];
    const int records = manifest.files[f].records;
    for (int r = 0; r < records; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * kCifarRecordBytes;
      const auto label = static_cast<unsigned char>(bytes[base]);
      if (label >= kCifarClasses) {
        throw DataError(paths[f] + ": label byte " + std::to_string(label) +
                        " > 9 at record " + std::to_string(r) +
                        " (byte offset " + std::to_string(base) + ")");
      }
      labels(row) = label;
      for (int c = 0; c < kCifarChannels; ++c) {
        for (int p = 0; p < plane; ++p) {
          const auto v = static_cast<unsigned char>(
              bytes[base + 1 + static_cast<std::size_t>(c) * plane + p]);
          values(row, p * kCifarChannels + c) = static_cast<double>(v);
        }
      }
      ++row;
    }
  }

  return {make_batch(kCifarShape, std::move(values), std::move(labels),
                     ValueSpace::RawBytes),
          manifest};
}

void write_cifar10(const ImageBatch& batch, const std::string& path) {
  require(batch.shape == kCifarShape,
          "write_cifar10: batch shape must be 32x32x3");
  require(batch.space == ValueSpace::RawBytes,
          "write_cifar10: batch must hold raw byte values");
  require(batch.labeled(), "write_cifar10: batch must be labeled");

  const int plane = kCifarSide * kCifarSide;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");

  std::string record(kCifarRecordBytes, '\0');
  for (int i = 0; i < batch.size(); ++i) {
    const int label = batch.labels(i);
    require(label >= 0 && label < kCifarClasses,
            "write_cifar10: label out of range");
    record[0] = static_cast<char>(label);
    for (int c = 0; c < kCifarChannels; ++c) {
      for (int p = 0; p < plane; ++p) {
        const double v = batch.values(i, p * kCifarChannels + c);
        require(v >= 0.0 && v <= 255.0 && v == std::floor(v),
                "write_cifar10: pixel value is not an integral byte");
        record[1 + static_cast<std::size_t>(c) * plane + p] =
            static_cast<char>(static_cast<unsigned char>(v));
      }
    }
    out.write(record.data(), record.size());
  }
  if (!out) throw DataError("short write to " + path);
}

std::string DatasetManifest::to_json() const {
  nlohmann::json j;
  j["split"] = split;
  j["total_records"] = total_records;
  j["files"] = nlohmann::json::array();
  for (const auto& f : files) {
    j["files"].push_back(
        {{"path", f.path}, {"records", f.records}, {"fnv1a", f.fnv1a}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest manifest;
  const auto j = nlohmann::json::parse(text);
  manifest.split = j.at("split").get<std::string>();
  manifest.total_records = j.at("total_records").get<int>();
  for (const auto& f : j.at("files")) {
    manifest.files.push_back({f.at("path").get<std::string>(),
                              f.at("records").get<int>(),
                              f.at("fnv1a").get<std::uint64_t>()});
  }
  return manifest;
}

void save_dataset_manifest(const DatasetManifest& manifest,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << manifest.to_json();
}

DatasetManifest load_dataset_manifest(const std::string& path) {
  return DatasetManifest::from_json(read_file_bytes(path));
}

}  // namespace sis
