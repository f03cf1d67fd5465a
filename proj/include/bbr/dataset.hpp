#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bbr/tensor.hpp"

namespace bbr {

enum class DatasetRole { kTrueTrain, kTrueTest, kProxy };

std::string_view to_string(DatasetRole role);
DatasetRole parse_role(std::string_view text);

/// Images (m x d, values in [0, 1]) with integer labels in [0, class_names.size()).
/// `ids` identify each sample within the generated pool so splits can be audited.
struct LabeledDataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::vector<std::uint64_t> ids;
  DatasetRole role = DatasetRole::kTrueTrain;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const { return images.cols(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }

  /// Throws InvalidInputError when labels, ids, shapes or pixel range disagree.
  void validate() const;
};

/// Per-class sample counts.
std::vector<std::size_t> class_histogram(const LabeledDataset& data);

// Persistence uses the checkpoint container; see checkpoint.hpp.
void save_dataset(const LabeledDataset& data, const std::filesystem::path& path,
                  std::string_view config_hash = {});

/// Loads a dataset; when `expected` is set a different role tag is a RoleMismatchError.
LabeledDataset load_dataset(const std::filesystem::path& path,
                            std::optional<DatasetRole> expected = std::nullopt);

/// Plain-text (P2) PGM of one image, upscaled by `scale` for viewing.
void write_pgm(std::span<const double> image, std::size_t side, const std::filesystem::path& path,
               std::size_t scale = 1);

}  // namespace bbr
