#include "floe/la.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace floe {

void gemv(const Matrix &a, const float *x, float *y) {
  for (std::size_t r = 0; r < a.rows; ++r) {
    const float *row = a.row(r);
    float acc = 0.0f;
    for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void gemv(const Matrix &a, const Vec &x, Vec &y) {
  if (x.size() != a.cols) throw std::runtime_error("gemv: dimension mismatch");
  y.resize(a.rows);
  gemv(a, x.data(), y.data());
}

float dot_f32(const float *a, const float *b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

void silu_inplace(float *x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = silu(x[i]);
}

void softmax_inplace(std::vector<float> &v) {
  if (v.empty()) return;
  float mx = *std::max_element(v.begin(), v.end());
  float sum = 0.0f;
  for (float &e : v) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (float &e : v) e /= sum;
}

std::vector<std::uint32_t> top_k(const Vec &v, std::size_t k) {
  if (k == 0 || k > v.size()) throw std::runtime_error("top_k: k out of range");
  std::vector<std::uint32_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;  // deterministic tie-break toward the lower index
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                    idx.end(), better);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());  // selection reported in index order
  return idx;
}

double l2_norm(const float *x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
  return std::sqrt(acc);
}

double l2_norm(const Vec &x) { return l2_norm(x.data(), x.size()); }

double cosine_similarity(const Vec &a, const Vec &b) {
  if (a.size() != b.size())
    throw std::runtime_error("cosine_similarity: size mismatch");
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw std::runtime_error("cosine_similarity: zero-norm input");
  return num / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace floe
