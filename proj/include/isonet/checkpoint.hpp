#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "isonet/network.hpp"

namespace isonet {

/// Binary parameter checkpoint. All integers and reals are little-endian.
///
///   offset  size  field
///   0       4     magic "ISON"
///   4       4     u32 format version (kCheckpointVersion)
///   8       4     u32 byte length L of the spec text
///   12      L     spec text (serialize_spec, UTF-8 key=value lines)
///           4     u32 parameter count P
///   then P records, in declaration order:
///           4     u32 name length, followed by the name bytes
///           4     u32 rank R, followed by R u32 dimensions
///           8R'   f64 values, R' = product of dimensions
///
/// Optimizer state (momentum buffers) is not stored.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const NetworkParams& params);
/// Throws FormatError (with the offending byte offset) on any malformed input.
NetworkParams decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace isonet
