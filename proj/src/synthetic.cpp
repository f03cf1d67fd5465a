#include "bbr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "bbr/error.hpp"
#include "bbr/rng.hpp"

namespace bbr {
namespace {

enum class Catalog { kTrue, kProxy };

Catalog catalog_of(const std::string& name, DatasetFamily family) {
  if (family == DatasetFamily::kShapes) {
    const auto& t = true_shape_catalog();
    const auto& p = proxy_shape_catalog();
    if (std::find(t.begin(), t.end(), name) != t.end()) return Catalog::kTrue;
    if (std::find(p.begin(), p.end(), name) != p.end()) return Catalog::kProxy;
  } else {
    if (name.starts_with("mixture-true-")) return Catalog::kTrue;
    if (name.starts_with("mixture-proxy-")) return Catalog::kProxy;
  }
  throw InvalidInputError("unknown class '" + name + "'");
}

DatasetRole role_for(const DatasetSpec& spec) {
  if (spec.classes.empty()) throw InvalidInputError("dataset spec selects no classes");
  const Catalog first = catalog_of(spec.classes.front(), spec.family);
  for (const auto& name : spec.classes) {
    if (catalog_of(name, spec.family) != first) {
      throw DisjointnessError("dataset mixes true-catalog and proxy-catalog classes ('" +
                              spec.classes.front() + "', '" + name + "')");
    }
  }
  for (std::size_t i = 0; i < spec.classes.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.classes.size(); ++j) {
      if (spec.classes[i] == spec.classes[j]) throw InvalidInputError("duplicate class '" + spec.classes[i] + "'");
    }
  }
  return first == Catalog::kTrue ? DatasetRole::kTrueTrain : DatasetRole::kProxy;
}

constexpr long kStroke = 3;

void set(std::vector<double>& img, std::size_t side, long r, long c) {
  const long s = static_cast<long>(side);
  if (r >= 0 && r < s && c >= 0 && c < s) img[static_cast<std::size_t>(r * s + c)] = 1.0;
}

}  // namespace

void DatasetSpec::validate() const {
  if (samples_per_class < 1) throw InvalidInputError("samples per class must be at least 1");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw InvalidInputError("noise std must be finite and >= 0");
  if (family == DatasetFamily::kShapes && side < 6) throw InvalidInputError("shape side length must be at least 6");
  if (family == DatasetFamily::kGaussianMixture && dimension < 2) {
    throw InvalidInputError("mixture dimensionality must be at least 2");
  }
  role_for(*this);
}

const std::vector<std::string>& true_shape_catalog() {
  static const std::vector<std::string> names{"horizontal-bar", "vertical-bar", "cross", "main-diagonal"};
  return names;
}

const std::vector<std::string>& proxy_shape_catalog() {
  static const std::vector<std::string> names{"circle-outline", "triangle", "filled-square", "checkerboard"};
  return names;
}

std::vector<std::string> mixture_catalog(bool proxy, std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    names.push_back((proxy ? "mixture-proxy-" : "mixture-true-") + std::to_string(i));
  }
  return names;
}

std::vector<double> render_shape(const std::string& name, std::size_t side, int dx, int dy) {
  if (side < 6) throw InvalidInputError("shape side length must be at least 6");
  std::vector<double> img(side * side, 0.0);
  const long s = static_cast<long>(side);
  const long mid = s / 2;
  const long lo = 1;
  const long hi = s - 2;
  auto put = [&](long r, long c) { set(img, side, r + dy, c + dx); };

  if (name == "horizontal-bar" || name == "cross") {
    for (long t = 0; t < kStroke; ++t) for (long c = lo; c <= hi; ++c) put(mid - t, c);
  }
  if (name == "vertical-bar" || name == "cross") {
    for (long t = 0; t < kStroke; ++t) for (long r = lo; r <= hi; ++r) put(r, mid - t);
  }
  if (name == "main-diagonal") {
    for (long t = 0; t < kStroke; ++t) for (long i = lo; i <= hi; ++i) put(i, i - t);
  } else if (name == "circle-outline") {
    const double centre = (static_cast<double>(s) - 1.0) / 2.0;
    const double radius = (static_cast<double>(s) - 4.0) / 2.0;
    for (long r = 0; r < s; ++r) {
      for (long c = 0; c < s; ++c) {
        const double d = std::hypot(static_cast<double>(r) - centre, static_cast<double>(c) - centre);
        if (std::abs(d - radius) < 0.6) put(r, c);
      }
    }
  } else if (name == "filled-square") {
    for (long r = mid - 2; r < mid + 2; ++r) {
      for (long c = mid - 2; c < mid + 2; ++c) put(r, c);
    }
  } else if (name == "checkerboard") {
    for (long r = 2; r <= s - 3; ++r) {
      for (long c = 2; c <= s - 3; ++c) {
        if (((r - 2) / 2 + (c - 2) / 2) % 2 == 0) put(r, c);
      }
    }
  } else if (name == "triangle") {
    for (long r = 2; r <= s - 3; ++r) {
      for (long c = 2; c <= r; ++c) put(r, c);
    }
  } else if (name != "horizontal-bar" && name != "vertical-bar" && name != "cross") {
    throw InvalidInputError("unknown shape class '" + name + "'");
  }
  return img;
}

std::vector<double> mixture_center(const std::string& name, std::size_t dimension, std::uint64_t seed) {
  const bool proxy = catalog_of(name, DatasetFamily::kGaussianMixture) == Catalog::kProxy;
  Rng rng(derive_seed(seed, name));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> direction(dimension);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (double& v : direction) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
  }
  std::uniform_real_distribution<double> radius_dist(proxy ? 0.30 : 0.15, proxy ? 0.40 : 0.25);
  const double radius = radius_dist(rng);
  std::vector<double> centre(dimension);
  for (std::size_t i = 0; i < dimension; ++i) centre[i] = 0.5 + radius * direction[i] / norm;
  return centre;
}

namespace {

LabeledDataset assemble(const DatasetSpec& spec, std::size_t dim,
                        const std::function<std::vector<double>(std::size_t, Rng&)>& draw) {
  LabeledDataset data;
  data.role = role_for(spec);
  data.class_names = spec.classes;
  const std::size_t m = spec.classes.size() * spec.samples_per_class;
  data.images = Tensor::matrix(m, dim);
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++row) {
      const auto clean = draw(c, rng);
      auto out = data.images.row(row);
      for (std::size_t j = 0; j < dim; ++j) {
        const double v = spec.noise_std > 0.0 ? clean[j] + spec.noise_std * noise(rng) : clean[j];
        out[j] = std::clamp(v, 0.0, 1.0);
      }
      data.labels.push_back(c);
      data.ids.push_back(row);
    }
  }
  return data;
}

}  // namespace

LabeledDataset generate_shapes(const DatasetSpec& spec) {
  if (spec.family != DatasetFamily::kShapes) throw InvalidInputError("generate_shapes needs a shapes spec");
  spec.validate();
  std::uniform_int_distribution<int> shift(-1, 1);
  return assemble(spec, spec.side * spec.side, [&](std::size_t c, Rng& rng) {
    int dx = 0;
    int dy = 0;
    if (spec.jitter) {
      dx = shift(rng);
      dy = shift(rng);
    }
    return render_shape(spec.classes[c], spec.side, dx, dy);
  });
}

LabeledDataset generate_gaussian_mixture(const DatasetSpec& spec) {
  if (spec.family != DatasetFamily::kGaussianMixture) {
    throw InvalidInputError("generate_gaussian_mixture needs a mixture spec");
  }
  spec.validate();
  std::vector<std::vector<double>> centres;
  for (const auto& name : spec.classes) centres.push_back(mixture_center(name, spec.dimension, spec.seed));
  return assemble(spec, spec.dimension, [&](std::size_t c, Rng&) { return centres[c]; });
}

LabeledDataset generate(const DatasetSpec& spec) {
  return spec.family == DatasetFamily::kShapes ? generate_shapes(spec) : generate_gaussian_mixture(spec);
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double test_fraction,
                                                std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidInputError("test fraction must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) by_class.at(data.labels[i]).push_back(i);

  Rng rng(seed);
  std::vector<bool> to_test(data.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 2) {
      throw InvalidInputError("class '" + data.class_names[c] + "' has fewer than 2 samples to split");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n_test; ++i) to_test[idx[i]] = true;
  }

  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < data.size(); ++i) (to_test[i] ? test_rows : train_rows).push_back(i);

  auto take = [&](const std::vector<std::size_t>& rows, DatasetRole role) {
    LabeledDataset out;
    out.images = data.images.gather_rows(rows);
    for (std::size_t r : rows) {
      out.labels.push_back(data.labels[r]);
      out.ids.push_back(data.ids[r]);
    }
    out.role = role;
    out.class_names = data.class_names;
    return out;
  };
  const bool proxy = data.role == DatasetRole::kProxy;
  return {take(train_rows, proxy ? DatasetRole::kProxy : DatasetRole::kTrueTrain),
          take(test_rows, proxy ? DatasetRole::kProxy : DatasetRole::kTrueTest)};
}

LabeledDataset select_classes(const LabeledDataset& data, const std::vector<std::size_t>& keep) {
  std::map<std::size_t, std::size_t> relabel;
  LabeledDataset out;
  out.role = data.role;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    relabel[keep[i]] = i;
    out.class_names.push_back(data.class_names.at(keep[i]));
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto it = relabel.find(data.labels[i]);
    if (it == relabel.end()) continue;
    rows.push_back(i);
    out.labels.push_back(it->second);
    out.ids.push_back(data.ids[i]);
  }
  out.images = data.images.gather_rows(rows);
  return out;
}

}  // namespace bbr
