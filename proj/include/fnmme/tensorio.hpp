#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fnmme/activation.hpp"
#include "fnmme/config.hpp"
#include "fnmme/fne.hpp"
#include "fnmme/mmspace.hpp"
#include "fnmme/textenc.hpp"

/// Persistent formats: FNEA activation files, JSON-lines dataset manifests,
/// FNES statistics files and FNEC checkpoints. Binary numbers are
/// little-endian, floats IEEE-754 binary32, strings u32-length-prefixed UTF-8.
namespace fnmme::tensorio {

inline constexpr std::uint32_t kActivationVersion = 1;
inline constexpr std::uint32_t kStatsVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Activation files: "FNEA" | version | image_id | layer_count | layers...
std::vector<std::uint8_t> encode_activation(const ActivationSet& set);
ActivationSet decode_activation(std::span<const std::uint8_t> bytes);
ActivationSet read_activation_file(const std::filesystem::path& path);
void write_activation_file(const ActivationSet& set, const std::filesystem::path& path);

enum class Split { train, val, test };

std::string_view split_name(Split s);
/// Throws ValidationError on anything but "train", "val" or "test".
Split parse_split(std::string_view name);

struct ManifestEntry {
  std::string image_id;
  Split split = Split::train;
  std::string activation_path;
  std::vector<std::string> captions;

  bool operator==(const ManifestEntry&) const = default;
};

/// One JSON object per line:
///   {"image_id": "...", "split": "train", "activation_path": "...", "captions": ["..."]}
/// Relative activation paths resolve against `base_dir` (the manifest's directory).
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::map<Split, std::size_t> counts() const;
  std::vector<const ManifestEntry*> entries_in(Split split) const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;
};

DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir = {});
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Statistics plus the thresholds they are meant to be used with.
struct StatsFile {
  fne::FneStats stats;
  fne::FneConfig config;

  bool operator==(const StatsFile&) const = default;
};

// "FNES" | version | D | mean[D] | std[D] | theta_pos | theta_neg | fitted_on u32
std::vector<std::uint8_t> encode_stats(const StatsFile& file);
StatsFile decode_stats(std::span<const std::uint8_t> bytes);
StatsFile load_stats(const std::filesystem::path& path);
void save_stats(const StatsFile& file, const std::filesystem::path& path);

struct Provenance {
  std::uint32_t epoch = 0;
  std::uint64_t seed = 0;
  double validation_score = 0;

  bool operator==(const Provenance&) const = default;
};

/// Everything inference needs, in one file.
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  TrainConfig config;
  fne::FneConfig fne_config;
  textenc::Vocabulary vocab;
  fne::FneStats stats;
  mmspace::ModelParams<float> params;
  Provenance provenance;

  bool operator==(const Checkpoint&) const = default;
};

// "FNEC" | version | header_len u64 | JSON header | float32 payloads (row-major)
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes through a sibling temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace fnmme::tensorio
