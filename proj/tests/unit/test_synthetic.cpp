#include <doctest.h>

#include <algorithm>
#include <set>

#include "bbr/checkpoint.hpp"
#include "bbr/dataset.hpp"
#include "bbr/error.hpp"
#include "bbr/synthetic.hpp"
#include "helpers.hpp"

using namespace bbr;

namespace {

DatasetSpec shapes_spec(std::vector<std::string> classes, std::size_t per_class, std::uint64_t seed) {
  DatasetSpec s;
  s.classes = std::move(classes);
  s.samples_per_class = per_class;
  s.seed = seed;
  return s;
}

DatasetSpec mixture_spec(bool proxy, std::size_t classes, std::size_t per_class, double noise) {
  DatasetSpec s;
  s.family = DatasetFamily::kGaussianMixture;
  s.classes = mixture_catalog(proxy, classes);
  s.samples_per_class = per_class;
  s.dimension = 16;
  s.noise_std = noise;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_SUITE("synthetic") {
  TEST_CASE("noise-free unjittered horizontal bar is the exact template") {
    DatasetSpec s = shapes_spec({"horizontal-bar"}, 3, 1);
    s.noise_std = 0.0;
    s.jitter = false;
    const LabeledDataset d = generate_shapes(s);
    std::vector<double> expected(100, 0.0);
    for (std::size_t r = 3; r <= 5; ++r) {
      for (std::size_t c = 1; c <= 8; ++c) expected[r * 10 + c] = 1.0;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto row = d.images.row(i);
      CHECK(std::vector<double>(row.begin(), row.end()) == expected);
    }
    CHECK(render_shape("horizontal-bar", 10) == expected);
  }

  TEST_CASE("templates are binary and distinct across the eight classes") {
    std::set<std::vector<double>> seen;
    for (const auto* catalog : {&true_shape_catalog(), &proxy_shape_catalog()}) {
      for (const auto& name : *catalog) {
        const auto img = render_shape(name, 10);
        for (double v : img) CHECK((v == 0.0 || v == 1.0));
        CHECK(std::count(img.begin(), img.end(), 1.0) > 0);
        seen.insert(img);
      }
    }
    CHECK(seen.size() == 8);
    CHECK_THROWS_AS(render_shape("spiral", 10), InvalidInputError);
  }

  TEST_CASE("generation is a pure function of the spec") {
    const auto s = shapes_spec(true_shape_catalog(), 20, 42);
    const LabeledDataset a = generate(s);
    const LabeledDataset b = generate(s);
    CHECK(bitwise_equal(a.images, b.images));
    CHECK(a.labels == b.labels);
    CHECK_FALSE(bitwise_equal(a.images, generate(shapes_spec(true_shape_catalog(), 20, 43)).images));
  }

  TEST_CASE("50 samples per class over 4 classes") {
    const LabeledDataset d = generate(shapes_spec(proxy_shape_catalog(), 50, 5));
    CHECK(d.size() == 200);
    CHECK(d.dim() == 100);
    CHECK(class_histogram(d) == std::vector<std::size_t>{50, 50, 50, 50});
    CHECK(d.role == DatasetRole::kProxy);
    for (double v : d.images.data()) REQUIRE((v >= 0.0 && v <= 1.0));
  }

  TEST_CASE("mixing catalogs is a disjointness error") {
    CHECK_THROWS_AS(generate(shapes_spec({"cross", "triangle"}, 5, 1)), DisjointnessError);
    auto m = mixture_spec(false, 2, 5, 0.1);
    m.classes.push_back("mixture-proxy-0");
    CHECK_THROWS_AS(generate(m), DisjointnessError);
  }

  TEST_CASE("spec preconditions") {
    auto s = shapes_spec({"cross"}, 0, 1);
    CHECK_THROWS_AS(generate(s), InvalidInputError);
    s = shapes_spec({"cross"}, 5, 1);
    s.side = 5;
    CHECK_THROWS_AS(generate(s), InvalidInputError);
  }

  TEST_CASE("true and proxy data share no class and no image") {
    const LabeledDataset t = generate(shapes_spec(true_shape_catalog(), 100, 1));
    const LabeledDataset p = generate(shapes_spec(proxy_shape_catalog(), 100, 1));
    for (const auto& name : t.class_names) {
      CHECK(std::find(p.class_names.begin(), p.class_names.end(), name) == p.class_names.end());
    }
    std::set<std::vector<double>> true_images;
    for (std::size_t i = 0; i < t.size(); ++i) true_images.emplace(t.images.row(i).begin(), t.images.row(i).end());
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(true_images.count(std::vector<double>(p.images.row(i).begin(), p.images.row(i).end())) == 0);
    }
  }

  TEST_CASE("noise-free mixture samples sit on their class centers") {
    const auto s = mixture_spec(false, 4, 25, 0.0);
    const LabeledDataset d = generate(s);
    CHECK(d.size() == 100);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto center = mixture_center(d.class_names[d.labels[i]], 16, s.seed);
      CHECK(std::vector<double>(d.images.row(i).begin(), d.images.row(i).end()) == center);
    }
  }

  TEST_CASE("true and proxy mixture centers are separated") {
    const auto t = mixture_catalog(false, 6);
    const auto p = mixture_catalog(true, 6);
    for (const auto& a : t) {
      for (const auto& b : p) {
        const auto ca = mixture_center(a, 16, 9);
        const auto cb = mixture_center(b, 16, 9);
        double d2 = 0.0;
        for (std::size_t i = 0; i < 16; ++i) d2 += (ca[i] - cb[i]) * (ca[i] - cb[i]);
        CHECK(d2 > 0.0);
      }
    }
  }

  TEST_CASE("stratified split arithmetic") {
    const LabeledDataset d = generate(shapes_spec(true_shape_catalog(), 50, 7));
    const auto [train, test] = split(d, 0.5, 11);
    CHECK(train.size() == 100);
    CHECK(test.size() == 100);
    CHECK(class_histogram(train) == std::vector<std::size_t>{25, 25, 25, 25});
    CHECK(class_histogram(test) == std::vector<std::size_t>{25, 25, 25, 25});
    CHECK(train.role == DatasetRole::kTrueTrain);
    CHECK(test.role == DatasetRole::kTrueTest);
    CHECK(train.class_names == test.class_names);
  }

  TEST_CASE("split halves partition the input") {
    const LabeledDataset d = generate(shapes_spec(true_shape_catalog(), 30, 8));
    const auto [train, test] = split(d, 0.3, 12);
    std::vector<std::pair<std::uint64_t, std::vector<double>>> merged;
    for (const auto* part : {&train, &test}) {
      for (std::size_t i = 0; i < part->size(); ++i) {
        merged.emplace_back(part->ids[i], std::vector<double>(part->images.row(i).begin(), part->images.row(i).end()));
      }
    }
    std::sort(merged.begin(), merged.end());
    REQUIRE(merged.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(merged[i].first == d.ids[i]);
      CHECK(merged[i].second == std::vector<double>(d.images.row(i).begin(), d.images.row(i).end()));
    }
  }

  TEST_CASE("split is seeded") {
    const LabeledDataset d = generate(shapes_spec(true_shape_catalog(), 30, 8));
    CHECK(split(d, 0.25, 3).first.ids == split(d, 0.25, 3).first.ids);
    CHECK(split(d, 0.25, 3).first.ids != split(d, 0.25, 4).first.ids);
  }

  TEST_CASE("split preconditions") {
    const LabeledDataset d = generate(shapes_spec({"cross", "main-diagonal"}, 1, 8));
    CHECK_THROWS_AS(split(d, 0.5, 1), InvalidInputError);
    const LabeledDataset ok = generate(shapes_spec({"cross"}, 4, 8));
    CHECK_THROWS_AS(split(ok, 0.0, 1), InvalidInputError);
    CHECK_THROWS_AS(split(ok, 1.0, 1), InvalidInputError);
  }

  TEST_CASE("select_classes keeps and relabels") {
    const LabeledDataset d = generate(shapes_spec(proxy_shape_catalog(), 10, 2));
    const LabeledDataset s = select_classes(d, {3, 0});
    CHECK(s.class_names == std::vector<std::string>{"checkerboard", "circle-outline"});
    CHECK(class_histogram(s) == std::vector<std::size_t>{10, 10});
  }

  TEST_CASE("dataset round trip and role checks") {
    const auto dir = test::scratch_dir("dataset");
    const LabeledDataset d = generate(shapes_spec(proxy_shape_catalog(), 10, 2));
    save_dataset(d, dir / "z.bbd", "feedface");
    const LabeledDataset back = load_dataset(dir / "z.bbd", DatasetRole::kProxy);
    CHECK(bitwise_equal(back.images, d.images));
    CHECK(back.labels == d.labels);
    CHECK(back.ids == d.ids);
    CHECK(back.class_names == d.class_names);
    CHECK(back.role == d.role);
    CHECK_THROWS_AS(load_dataset(dir / "z.bbd", DatasetRole::kTrueTrain), RoleMismatchError);
  }

  TEST_CASE("corrupted dataset files") {
    const auto dir = test::scratch_dir("dataset_bad");
    save_dataset(generate(shapes_spec({"cross"}, 4, 2)), dir / "x.bbd");
    std::string bytes = read_file(dir / "x.bbd");
    const auto rec = bytes.find('\n') + 1;
    bytes[rec + 8 + 7] = 0x7f;  // first extent of the image tensor
    write_file(dir / "bad.bbd", bytes);
    CHECK_THROWS_AS(load_dataset(dir / "bad.bbd"), FormatError);
    write_file(dir / "short.bbd", read_file(dir / "x.bbd").substr(0, 40));
    CHECK_THROWS_AS(load_dataset(dir / "short.bbd"), FormatError);
    bytes = read_file(dir / "x.bbd");
    bytes[1] = 'Q';
    write_file(dir / "magic.bbd", bytes);
    CHECK_THROWS_AS(load_dataset(dir / "magic.bbd"), FormatError);
  }

  TEST_CASE("PGM export") {
    const auto dir = test::scratch_dir("pgm");
    write_pgm(render_shape("cross", 10), 10, dir / "c.pgm", 2);
    const std::string text = read_file(dir / "c.pgm");
    CHECK(text.rfind("P2\n20 20\n255\n", 0) == 0);
  }
}
