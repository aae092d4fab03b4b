#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csconf/tensor.hpp"
#include "csconf/types.hpp"

namespace csconf {

// PCT1 layout, all little-endian:
//   "PCT1" | u32 ndim | ndim x u64 dims | row-major f32 payload
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

// Labels travel as f32 tensors holding integral values.
std::vector<int> labels_from_tensor(const Tensor& t);
Tensor labels_to_tensor(std::span<const int> labels, std::vector<std::uint64_t> shape);

enum class Role { Validation, Target };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

struct ManifestEntry {
  std::string id;
  std::filesystem::path logits;
  std::optional<std::filesystem::path> labels;
};

// Text grammar (UTF-8, '\n' line endings):
//
//   # comment lines and blank lines are ignored
//   role=validation|target
//   task=classification|segmentation
//   class_count=<int>
//   <id>\t<logits-path>\t<labels-path or ->
//   ...
//
// The header block (key=value lines, each key exactly once) comes first;
// every following line is a tab-separated entry. Relative paths resolve
// against the manifest's directory.
struct Manifest {
  Role role = Role::Validation;
  Task task = Task::Classification;
  int class_count = 0;
  std::vector<ManifestEntry> entries;
};

Manifest parse_manifest(const std::string& text);
std::string format_manifest(const Manifest& m);

struct LoadedManifest {
  Manifest manifest;
  Dataset data;
};

// Accepts a manifest file or a directory holding "manifest.txt".
std::filesystem::path resolve_manifest_path(const std::filesystem::path& path);

LoadedManifest load_manifest(const std::filesystem::path& path);

// Writes <dir>/manifest.txt plus one PCT1 file per logits/labels tensor.
// Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& data, Role role,
                                    const std::filesystem::path& dir);

}  // namespace csconf
