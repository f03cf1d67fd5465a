#include "bbr/dataset.hpp"

#include <cmath>
#include <fstream>

#include "bbr/checkpoint.hpp"
#include "bbr/error.hpp"

namespace bbr {

std::string_view to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::kTrueTrain: return "true-train";
    case DatasetRole::kTrueTest: return "true-test";
    case DatasetRole::kProxy: return "proxy";
  }
  return "unknown";
}

DatasetRole parse_role(std::string_view text) {
  if (text == "true-train") return DatasetRole::kTrueTrain;
  if (text == "true-test") return DatasetRole::kTrueTest;
  if (text == "proxy") return DatasetRole::kProxy;
  throw FormatError("unknown dataset role '" + std::string(text) + "'");
}

void LabeledDataset::validate() const {
  if (images.rank() != 2) throw InvalidInputError("dataset images must be a matrix");
  if (images.rows() != labels.size() || ids.size() != labels.size()) {
    throw InvalidInputError("dataset images, labels and ids disagree in length");
  }
  for (std::size_t label : labels) {
    if (label >= class_names.size()) throw InvalidInputError("label out of range");
  }
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInputError("pixel value outside [0, 1]");
  }
}

std::vector<std::size_t> class_histogram(const LabeledDataset& data) {
  std::vector<std::size_t> counts(data.num_classes(), 0);
  for (std::size_t label : data.labels) ++counts.at(label);
  return counts;
}

void save_dataset(const LabeledDataset& data, const std::filesystem::path& path, std::string_view config_hash) {
  data.validate();
  Checkpoint ckpt;
  ckpt.fields["kind"] = "dataset";
  ckpt.fields["role"] = std::string(to_string(data.role));
  std::string names;
  for (const auto& n : data.class_names) names += (names.empty() ? "" : ",") + n;
  if (names.empty()) throw InvalidInputError("dataset has no classes");
  ckpt.fields["classes"] = names;
  if (!config_hash.empty()) ckpt.fields["config_hash"] = std::string(config_hash);

  std::vector<double> labels(data.labels.begin(), data.labels.end());
  std::vector<double> ids(data.ids.begin(), data.ids.end());
  ckpt.tensors.emplace_back("images", data.images);
  ckpt.tensors.emplace_back("labels", Tensor::vector(std::move(labels)));
  ckpt.tensors.emplace_back("ids", Tensor::vector(std::move(ids)));
  write_checkpoint(ckpt, path);
}

LabeledDataset load_dataset(const std::filesystem::path& path, std::optional<DatasetRole> expected) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (!ckpt.has_field("kind") || ckpt.field("kind") != "dataset") {
    throw FormatError(path.string() + " is not a dataset file");
  }
  LabeledDataset data;
  data.role = parse_role(ckpt.field("role"));
  if (expected && *expected != data.role) {
    throw RoleMismatchError(path.string() + " holds a " + std::string(to_string(data.role)) +
                            " dataset where " + std::string(to_string(*expected)) + " was expected");
  }
  const std::string& names = ckpt.field("classes");
  std::size_t start = 0;
  while (true) {
    const auto at = names.find(',', start);
    data.class_names.push_back(names.substr(start, at - start));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  data.images = ckpt.tensor("images");
  const Tensor& labels = ckpt.tensor("labels");
  const Tensor& ids = ckpt.tensor("ids");
  if (data.images.rank() != 2 || labels.rank() != 1 || ids.rank() != 1) {
    throw FormatError("dataset tensors have the wrong rank");
  }
  for (double v : labels.data()) {
    if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(data.class_names.size())) {
      throw FormatError("dataset label is not a valid class index");
    }
    data.labels.push_back(static_cast<std::size_t>(v));
  }
  for (double v : ids.data()) {
    if (!(v >= 0.0) || v != std::floor(v) || v > 9007199254740992.0) throw FormatError("dataset id is not an integer");
    data.ids.push_back(static_cast<std::uint64_t>(v));
  }
  try {
    data.validate();
  } catch (const InvalidInputError& e) {
    throw FormatError(std::string("inconsistent dataset file: ") + e.what());
  }
  return data;
}

void write_pgm(std::span<const double> image, std::size_t side, const std::filesystem::path& path,
               std::size_t scale) {
  if (image.size() != side * side) throw ShapeError("write_pgm: image is not side x side");
  if (scale == 0) scale = 1;
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  const std::size_t n = side * scale;
  f << "P2\n" << n << " " << n << "\n255\n";
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = std::clamp(image[(r / scale) * side + c / scale], 0.0, 1.0);
      f << static_cast<int>(std::lround(v * 255.0)) << (c + 1 == n ? '\n' : ' ');
    }
  }
}

}  // namespace bbr
