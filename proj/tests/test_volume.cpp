#include <catch2/catch_amalgamated.hpp>

#include "rgdiff/volume.hpp"

using namespace rgdiff;

TEST_CASE("volume construction validates shape and length") {
  CHECK_THROWS_AS(ImageVolume(Shape{2, 0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(ImageVolume(Shape{2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(ImageVolume(Shape{}, {}), std::invalid_argument);
  const ImageVolume v(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(v.size() == 6);
  CHECK(v.at(1, 2) == 6.0);
}

TEST_CASE("hadamard identity, arithmetic, annihilator") {
  const ImageVolume a(Shape{1, 3}, {1, 2, 3});
  const ImageVolume b(Shape{1, 3}, {4, 5, 6});
  CHECK(bit_equal(hadamard(a, ImageVolume::ones(a.shape())), a));
  const ImageVolume prod = hadamard(a, b);
  CHECK(prod[0] == 4.0);
  CHECK(prod[1] == 10.0);
  CHECK(prod[2] == 18.0);
  CHECK(bit_equal(hadamard(a, ImageVolume::zeros(a.shape())),
                  ImageVolume::zeros(a.shape())));
  CHECK_THROWS_AS(hadamard(a, ImageVolume::zeros(Shape{3, 1})),
                  std::invalid_argument);
}

TEST_CASE("axpy_combine identities") {
  const ImageVolume v(Shape{2, 2}, {1, -2, 3, 0.5});
  CHECK(bit_equal(axpy_combine({1.0}, {&v}), v));
  const ImageVolume cancelled = axpy_combine({1.0, -1.0}, {&v, &v});
  for (std::int64_t i = 0; i < cancelled.size(); ++i) CHECK(cancelled[i] == 0.0);
  const ImageVolume p(Shape{1, 2}, {2, 4});
  const ImageVolume q(Shape{1, 2}, {4, 8});
  const ImageVolume r = axpy_combine({0.5, 0.25}, {&p, &q});
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 4.0);
  CHECK_THROWS_AS(axpy_combine({}, {}), std::invalid_argument);
  const ImageVolume other(Shape{4}, {0, 0, 0, 0});
  CHECK_THROWS_AS(axpy_combine({1.0, 1.0}, {&v, &other}), std::invalid_argument);
}

TEST_CASE("axpy_combine accumulates left to right") {
  // Order-sensitive values: (a + b) + c differs from a + (b + c) here.
  const ImageVolume a(Shape{1}, {1e16});
  const ImageVolume b(Shape{1}, {-1e16});
  const ImageVolume c(Shape{1}, {1.0});
  const ImageVolume lr = axpy_combine({1.0, 1.0, 1.0}, {&a, &b, &c});
  CHECK(lr[0] == 1.0);
  const ImageVolume rl = axpy_combine({1.0, 1.0, 1.0}, {&c, &b, &a});
  CHECK(rl[0] == 0.0);
}

TEST_CASE("elementwise ops preserve shape and finiteness") {
  SeededRng rng(123, 0);
  const ImageVolume a = gaussian_volume(Shape{5, 7}, rng, 0.0, 1.0);
  const ImageVolume b = gaussian_volume(Shape{5, 7}, rng, 1.0, 0.5);
  const ImageVolume h = hadamard(a, b);
  const ImageVolume s = axpy_combine({0.3, -1.7}, {&a, &b});
  CHECK(h.shape() == a.shape());
  CHECK(s.shape() == a.shape());
  CHECK(h.all_finite());
  CHECK(s.all_finite());
}
