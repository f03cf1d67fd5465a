#include <doctest.h>

#include <cmath>
#include <limits>

#include "bbr/error.hpp"
#include "bbr/tensor.hpp"

using namespace bbr;

TEST_SUITE("tensor") {
  TEST_CASE("extents product must equal the data length") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    const Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 2) == 6.0);
  }

  TEST_CASE("from_rows rejects ragged input") {
    CHECK_THROWS_AS(Tensor::from_rows({{1, 2}, {3}}), ShapeError);
    const Tensor t = Tensor::from_rows({{1, 2}, {3, 4}});
    CHECK(t.row(1)[0] == 3.0);
  }

  TEST_CASE("rows and cols need rank 2") {
    const Tensor v = Tensor::vector({1, 2, 3});
    CHECK_THROWS_AS(v.rows(), ShapeError);
  }

  TEST_CASE("gather_rows copies the selected rows in order") {
    const Tensor t = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
    const std::vector<std::size_t> idx{2, 0};
    CHECK(t.gather_rows(idx) == Tensor::from_rows({{5, 6}, {1, 2}}));
    const std::vector<std::size_t> bad{3};
    CHECK_THROWS_AS(t.gather_rows(bad), ShapeError);
  }

  TEST_CASE("argmax breaks ties toward the lowest index") {
    const std::vector<double> v{0.2, 0.4, 0.4, 0.1};
    CHECK(argmax(v) == 1);
  }

  TEST_CASE("bitwise_equal distinguishes signed zeros") {
    const Tensor a = Tensor::vector({0.0});
    const Tensor b = Tensor::vector({-0.0});
    CHECK(a == b);
    CHECK_FALSE(bitwise_equal(a, b));
    CHECK(bitwise_equal(a, a));
  }

  TEST_CASE("all_finite") {
    Tensor t = Tensor::vector({1.0, 2.0});
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
  }

  TEST_CASE("affine matches hand arithmetic") {
    const Tensor x = Tensor::from_rows({{1, 2}});
    const Tensor w = Tensor::from_rows({{1, 0, -1}, {2, 1, 0}});
    const Tensor b = Tensor::vector({0.5, -0.5, 0.0});
    Tensor out;
    affine(x, w, b, out);
    CHECK(out == Tensor::from_rows({{5.5, 1.5, -1.0}}));
    CHECK_THROWS_AS(affine(Tensor::matrix(1, 3), w, b, out), ShapeError);
  }
}
