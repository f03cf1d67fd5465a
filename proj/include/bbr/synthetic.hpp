#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bbr/dataset.hpp"

namespace bbr {

enum class DatasetFamily { kShapes, kGaussianMixture };

struct DatasetSpec {
  DatasetFamily family = DatasetFamily::kShapes;
  /// Class names; all from the true catalog or all from the proxy catalog.
  std::vector<std::string> classes;
  std::size_t samples_per_class = 50;
  std::size_t side = 10;       // shapes: image is side x side
  std::size_t dimension = 2;   // gaussian mixture
  double noise_std = 0.15;
  bool jitter = true;          // shapes: shift by up to one pixel in each direction
  std::uint64_t seed = 0;

  void validate() const;
};

/// {horizontal-bar, vertical-bar, cross, main-diagonal}
const std::vector<std::string>& true_shape_catalog();
/// {circle-outline, triangle, filled-square, checkerboard}
const std::vector<std::string>& proxy_shape_catalog();
/// mixture-true-0.. or mixture-proxy-0..
std::vector<std::string> mixture_catalog(bool proxy, std::size_t count);

/// Noise-free binary template of a shape class, shifted by (dx, dy).
std::vector<double> render_shape(const std::string& name, std::size_t side, int dx = 0, int dy = 0);

/// Mean of a mixture class in [0, 1]^dimension; true classes sit at radius
/// [0.15, 0.25] from the cube centre, proxy classes at [0.30, 0.40].
std::vector<double> mixture_center(const std::string& name, std::size_t dimension, std::uint64_t seed);

LabeledDataset generate_shapes(const DatasetSpec& spec);
LabeledDataset generate_gaussian_mixture(const DatasetSpec& spec);
/// Dispatches on spec.family.
LabeledDataset generate(const DatasetSpec& spec);

/// Stratified split; returns (train, test). A true-train input yields a
/// true-test test half; proxy data stays proxy on both sides.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double test_fraction,
                                                std::uint64_t seed);

/// Samples with labels in `keep`, relabelled 0..keep.size()-1 in `keep` order.
LabeledDataset select_classes(const LabeledDataset& data, const std::vector<std::size_t>& keep);

}  // namespace bbr
