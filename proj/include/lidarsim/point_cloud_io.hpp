#pragma once

#include <filesystem>

#include "lidarsim/point_cloud.hpp"

namespace lidarsim {

enum class CloudFormat { Ply, Pcd };
enum class CloudEncoding { Ascii, Binary };

/// Picks PLY/PCD by file extension; throws ValidationError for anything else.
CloudFormat format_from_extension(const std::filesystem::path& path);

/// Reads an ASCII or binary little-endian PLY/PCD file. Coordinates are
/// stored in files as 32-bit floats; the optional `label` field populates
/// per-point classes (defaulting to `unknown` when absent). Class names are
/// recovered from `class <id> <name>` header comments when present.
/// Throws ParseError (with byte offset) on malformed input, truncated
/// payloads, or unsupported encodings.
SemanticPointCloud read_point_cloud(const std::filesystem::path& path, CloudFormat format);
SemanticPointCloud read_point_cloud(const std::filesystem::path& path);

/// Writes a cloud re-readable by read_point_cloud with equal content.
/// Throws EmptyCloudError for empty clouds and IoError on unwritable paths.
void write_point_cloud(const SemanticPointCloud& cloud, const std::filesystem::path& path,
                       CloudFormat format, CloudEncoding encoding = CloudEncoding::Binary);

}  // namespace lidarsim
