#ifndef FLOE_LA_HPP
#define FLOE_LA_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

// Small dense linear algebra kernels. Everything is float32 with a fixed
// left-to-right accumulation order so results are bit-reproducible across
// runs and worker counts; metric helpers (norms, cosine) accumulate in
// double because they feed comparisons, not model math.

namespace floe {

using Vec = std::vector<float>;

// Row-major dense matrix. Owners that need column-major semantics store the
// transpose and document it at the field.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float *row(std::size_t r) { return data.data() + r * cols; }
  const float *row(std::size_t r) const { return data.data() + r * cols; }
  float &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return rows * cols; }
};

// y[r] = sum_c A[r,c] * x[c]; strict left-to-right float accumulation.
void gemv(const Matrix &a, const float *x, float *y);
void gemv(const Matrix &a, const Vec &x, Vec &y);

float dot_f32(const float *a, const float *b, std::size_t n);

float silu(float x);                 // x * sigmoid(x)
void silu_inplace(float *x, std::size_t n);

// Numerically shifted softmax over v, in place.
void softmax_inplace(std::vector<float> &v);

// Indices of the k largest entries (ties broken toward the lower index),
// returned sorted ascending by index. Requires 1 <= k <= v.size().
std::vector<std::uint32_t> top_k(const Vec &v, std::size_t k);

double l2_norm(const float *x, std::size_t n);
double l2_norm(const Vec &x);

// dot(a,b)/(|a||b|); zero-norm input is an error.
double cosine_similarity(const Vec &a, const Vec &b);

}  // namespace floe

#endif
