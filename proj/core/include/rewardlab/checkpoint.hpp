#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rewardlab {

inline constexpr int kCheckpointFormatVersion = 1;

/// On-disk artifact shared by every stage: one line of compact JSON (the
/// header) terminated by '\n', followed by `blob_floats` little-endian
/// IEEE-754 binary32 values in row-major order.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<float> blob;

  /// Header accessor that raises FormatError naming the missing key.
  const nlohmann::json& field(const std::string& key) const;
};

/// Stamps "format", "format_version", "kind" and "blob_floats" into the
/// header and returns the serialized bytes.
std::string serialize_checkpoint(Checkpoint ckpt, const std::string& kind);
Checkpoint parse_checkpoint(std::string_view bytes,
                            const std::string& expected_kind);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                      const std::string& kind);
Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::string& expected_kind);

/// Content hash of the serialized checkpoint.
std::uint64_t checkpoint_fingerprint(const Checkpoint& ckpt,
                                     const std::string& kind);

std::string fingerprint_hex(std::uint64_t fp);
std::uint64_t parse_fingerprint_hex(const std::string& text);

/// Narrowing helpers used by the per-module (de)serializers.
void append_floats(std::vector<float>& blob, std::span<const double> values);
std::vector<double> take_floats(std::span<const float> blob,
                                std::size_t& cursor, std::size_t count);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace rewardlab
