#include "rewardlab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rewardlab/errors.hpp"
#include "rewardlab/rng.hpp"

namespace rewardlab {

namespace {

constexpr const char* kFormatName = "rewardlab-checkpoint";

void put_le32(std::string& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((bits >> shift) & 0xffU));
  }
}

float get_le32(std::string_view bytes, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) {
    bits |= static_cast<std::uint32_t>(
                static_cast<unsigned char>(bytes[offset + k]))
            << (8 * k);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace

const nlohmann::json& Checkpoint::field(const std::string& key) const {
  if (!header.contains(key)) {
    throw FormatError("checkpoint header is missing field '" + key + "'");
  }
  return header.at(key);
}

std::string serialize_checkpoint(Checkpoint ckpt, const std::string& kind) {
  ckpt.header["format"] = kFormatName;
  ckpt.header["format_version"] = kCheckpointFormatVersion;
  ckpt.header["kind"] = kind;
  ckpt.header["blob_floats"] = ckpt.blob.size();
  std::string out = ckpt.header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 4 * ckpt.blob.size());
  for (float v : ckpt.blob) put_le32(out, v);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes,
                            const std::string& expected_kind) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) {
    throw FormatError("checkpoint header is not terminated; format-version unreadable");
  }
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception&) {
    throw FormatError("corrupted checkpoint header; format-version unreadable");
  }
  if (!ckpt.header.is_object() || !ckpt.header.contains("format_version") ||
      !ckpt.header["format_version"].is_number_integer()) {
    throw FormatError("checkpoint header carries no format-version");
  }
  const int version = ckpt.header["format_version"].get<int>();
  if (version != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint format-version " +
                      std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointFormatVersion) + ")");
  }
  if (ckpt.header.value("format", "") != kFormatName) {
    throw FormatError("not a rewardlab checkpoint");
  }
  const std::string kind = ckpt.header.value("kind", "");
  if (!expected_kind.empty() && kind != expected_kind) {
    throw FormatError("expected a '" + expected_kind + "' checkpoint, found '" +
                      kind + "'");
  }
  const auto count = ckpt.field("blob_floats").get<std::size_t>();
  const std::size_t body = bytes.size() - newline - 1;
  if (body != 4 * count) {
    throw FormatError("checkpoint blob has " + std::to_string(body) +
                      " bytes, header declares " + std::to_string(4 * count));
  }
  ckpt.blob.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    ckpt.blob[k] = get_le32(bytes, newline + 1 + 4 * k);
  }
  return ckpt;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                      const std::string& kind) {
  write_file_bytes(path, serialize_checkpoint(ckpt, kind));
}

Checkpoint read_checkpoint(const std::filesystem::path& path,
                           const std::string& expected_kind) {
  return parse_checkpoint(read_file_bytes(path), expected_kind);
}

std::uint64_t checkpoint_fingerprint(const Checkpoint& ckpt,
                                     const std::string& kind) {
  return fnv1a64(serialize_checkpoint(ckpt, kind));
}

std::string fingerprint_hex(std::uint64_t fp) {
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx",
                static_cast<unsigned long long>(fp));
  return std::string(buf.data(), 16);
}

std::uint64_t parse_fingerprint_hex(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto value = std::stoull(text, &used, 16);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return value;
  } catch (const std::exception&) {
    throw FormatError("malformed fingerprint '" + text + "'");
  }
}

void append_floats(std::vector<float>& blob, std::span<const double> values) {
  for (double v : values) blob.push_back(static_cast<float>(v));
}

std::vector<double> take_floats(std::span<const float> blob,
                                std::size_t& cursor, std::size_t count) {
  if (cursor + count > blob.size()) {
    throw FormatError("checkpoint blob is shorter than its header declares");
  }
  std::vector<double> out(blob.begin() + static_cast<std::ptrdiff_t>(cursor),
                          blob.begin() + static_cast<std::ptrdiff_t>(cursor + count));
  cursor += count;
  return out;
}

}  // namespace rewardlab
