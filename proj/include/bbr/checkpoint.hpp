#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bbr/nn.hpp"
#include "bbr/tensor.hpp"

namespace bbr {

/// Binary container shared by model checkpoints and datasets.
///
/// Layout:
///   "BBR1"
///   manifest line: space-separated key=value fields, ending with
///                  tensors=<name>,<name>,...  and a '\n'
///   per tensor, in manifest order:
///     rank     u64 little-endian
///     extents  rank x u64 little-endian
///     values   prod(extents) x f64 little-endian
struct Checkpoint {
  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(std::string_view name) const;
  const std::string& field(std::string_view key) const;
  bool has_field(std::string_view key) const { return fields.contains(std::string(key)); }
};

inline constexpr std::string_view kCheckpointMagic = "BBR1";

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, malformed manifest or truncated data.
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Stores the layers of `net` as <prefix>layerN.weight/bias plus a <prefix>widths field.
void store_network(Checkpoint& ckpt, const Mlp& net, const std::string& prefix);
Mlp load_network(const Checkpoint& ckpt, const std::string& prefix);

void save_classifier(const Classifier& model, const std::filesystem::path& path,
                     std::map<std::string, std::string> fields = {});
Classifier load_classifier(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace bbr
