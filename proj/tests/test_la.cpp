#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "floe/la.hpp"
#include "floe/rng.hpp"

using namespace floe;

namespace {

Matrix seeded_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix a(rows, cols);
  Rng rng(seed);
  for (float &v : a.data) v = rng.normal_f();
  return a;
}

Vec seeded_vec(std::size_t n, std::uint64_t seed) {
  Vec x(n);
  Rng rng(seed, 1);
  for (float &v : x) v = rng.normal_f();
  return x;
}

}  // namespace

TEST_SUITE("la") {

TEST_CASE("gemv identity matrix returns its input") {
  Matrix id(4, 4);
  for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0f;
  Vec x = {1.5f, -2.25f, 0.0f, 3.0f};
  Vec y;
  gemv(id, x, y);
  REQUIRE(y.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("gemv zero matrix returns zeros") {
  Matrix z(3, 5);
  Vec x = seeded_vec(5, 2);
  Vec y;
  gemv(z, x, y);
  for (float v : y) CHECK(v == 0.0f);
}

TEST_CASE("gemv matches a hand-rolled loop bit for bit") {
  Matrix a = seeded_matrix(7, 5, 3);
  Vec x = seeded_vec(5, 4);
  Vec y;
  gemv(a, x, y);
  for (std::size_t r = 0; r < 7; ++r) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < 5; ++c) acc += a(r, c) * x[c];
    CHECK(y[r] == acc);
  }
}

TEST_CASE("gemv is linear to float tolerance") {
  Matrix a = seeded_matrix(6, 8, 5);
  Vec x = seeded_vec(8, 6), w = seeded_vec(8, 7);
  const float alpha = 0.75f, beta = -1.5f;
  Vec mix(8);
  for (std::size_t i = 0; i < 8; ++i) mix[i] = alpha * x[i] + beta * w[i];
  Vec ymix, yx, yw;
  gemv(a, mix, ymix);
  gemv(a, x, yx);
  gemv(a, w, yw);
  for (std::size_t r = 0; r < 6; ++r) {
    float expect = alpha * yx[r] + beta * yw[r];
    CHECK(std::fabs(ymix[r] - expect) <=
          1e-5f * std::max(1.0f, std::fabs(expect)));
  }
}

TEST_CASE("silu fixed points and deep-negative decay") {
  CHECK(silu(0.0f) == 0.0f);
  // x * sigmoid(x) at x = -20 is about -4.1e-8.
  CHECK(std::fabs(silu(-20.0f)) < 1e-7f);
  CHECK(silu(5.0f) == doctest::Approx(5.0f / (1.0f + std::exp(-5.0f))));
}

TEST_CASE("silu global minimum is about -0.2785 near x = -1.2785") {
  float min_v = 0.0f, arg = 0.0f;
  for (double x = -6.0; x <= 6.0; x += 1e-3) {
    float v = silu(static_cast<float>(x));
    CHECK(v + 0.2785f >= -1e-4f);
    if (v < min_v) {
      min_v = v;
      arg = static_cast<float>(x);
    }
  }
  CHECK(min_v == doctest::Approx(-0.27846).epsilon(1e-3));
  CHECK(arg == doctest::Approx(-1.2785).epsilon(1e-2));
}

TEST_CASE("softmax of equal logits is uniform") {
  std::vector<float> v = {0.0f, 0.0f};
  softmax_inplace(v);
  CHECK(v[0] == 0.5f);
  CHECK(v[1] == 0.5f);
}

TEST_CASE("softmax survives huge logits without overflow") {
  std::vector<float> v = {1000.0f, 0.0f};
  softmax_inplace(v);
  CHECK(std::isfinite(v[0]));
  CHECK(std::isfinite(v[1]));
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("softmax matches an extended-precision oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> v(9);
    for (float &x : v) x = static_cast<float>(rng.normal() * 3.0);
    std::vector<float> got = v;
    softmax_inplace(got);
    long double sum = 0.0L;
    std::vector<long double> e(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      e[i] = std::exp(static_cast<long double>(v[i]));
      sum += e[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(std::fabs(got[i] - static_cast<float>(e[i] / sum)) <= 1e-6f);
  }
}

TEST_CASE("top_k picks largest entries, reports indices ascending") {
  Vec v = {0.1f, 0.9f, 0.5f};
  auto idx = top_k(v, 2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 1);
  CHECK(idx[1] == 2);
}

TEST_CASE("top_k breaks ties toward the lower index") {
  Vec v = {1.0f, 1.0f, 1.0f, 1.0f};
  auto idx = top_k(v, 2);
  REQUIRE(idx.size() == 2);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
}

TEST_CASE("top_k rejects out-of-range k") {
  Vec v = {1.0f, 2.0f};
  CHECK_THROWS(top_k(v, 0));
  CHECK_THROWS(top_k(v, 3));
  CHECK(top_k(v, 2).size() == 2);
}

TEST_CASE("l2_norm on a 3-4 right triangle") {
  Vec v = {3.0f, 4.0f};
  CHECK(l2_norm(v) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("cosine similarity endpoints") {
  Vec a = seeded_vec(16, 8);
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Vec neg(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
  CHECK(cosine_similarity(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  Vec ex = {1.0f, 0.0f}, ey = {0.0f, 1.0f};
  CHECK(cosine_similarity(ex, ey) == doctest::Approx(0.0));
}

TEST_CASE("cosine similarity rejects zero-norm input") {
  Vec a = {0.0f, 0.0f}, b = {1.0f, 2.0f};
  CHECK_THROWS(cosine_similarity(a, b));
  CHECK_THROWS(cosine_similarity(b, a));
}

TEST_CASE("dot_f32 accumulates left to right") {
  float a[3] = {1.0f, 2.0f, 3.0f};
  float b[3] = {4.0f, 5.0f, 6.0f};
  CHECK(dot_f32(a, b, 3) == ((1.0f * 4.0f + 2.0f * 5.0f) + 3.0f * 6.0f));
}

}  // TEST_SUITE("la")
