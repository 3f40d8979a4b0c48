#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kgc/error.hpp"

namespace kgc {

// Dense row-major tensor of doubles. Rank 1 is a vector, rank 2 a matrix;
// scalars are stored as shape {1}. This is the substrate every other module
// builds on, so it stays deliberately small: no broadcasting, no strides,
// no views.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }

  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str() + " does not match " +
                       std::to_string(data.size()) + " elements");
    }
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vec(std::vector<double> d) {
    std::size_t n = d.size();
    return Tensor({n}, std::move(d));
  }

  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> d) {
    return Tensor({r, c}, std::move(d));
  }

  // Identity matrix, handy in tests and fixtures.
  static Tensor eye(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  bool is_scalar() const { return data.size() == 1 && shape.size() <= 1; }
  bool is_vector() const { return shape.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }

  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  double value() const {
    if (data.size() != 1) {
      throw ShapeError("tensor: value() on non-scalar of shape " + shape_str());
    }
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ')';
    return os.str();
  }
};

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double l2(const Tensor& a) { return std::sqrt(dot(a, a)); }

// Mask of the k highest-importance entries; ties break toward the lower
// index. With by_magnitude the importance of entry i is |v[i]|, otherwise
// v[i] itself.
inline std::vector<char> topk_select(const std::vector<double>& v, std::size_t k,
                                     bool by_magnitude) {
  std::vector<char> mask(v.size(), 0);
  if (k >= v.size()) {
    std::fill(mask.begin(), mask.end(), 1);
    return mask;
  }
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto importance = [&](std::size_t i) { return by_magnitude ? std::fabs(v[i]) : v[i]; };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    double ia = importance(a), ib = importance(b);
    if (ia != ib) return ia > ib;
    return a < b;
  });
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

// Deterministic RNG. Gaussian draws go through an explicit Box-Muller
// transform instead of std::normal_distribution so that a seed produces
// the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n) by rejection.
  std::size_t below(std::size_t n) {
    if (n == 0) throw Error("rng: below(0)");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return (gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates, deterministic across platforms.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used to derive per-parameter sub-seeds from one master seed.
inline std::uint64_t hash_name(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = hash_name(name) ^ (seed + 0x9e3779b97f4a7c15ull);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

// Entries i.i.d. N(0, 2/(rows+cols)); deterministic per seed.
inline Tensor xavier_normal_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) {
    throw Error("xavier_normal_init: dimensions must be >= 1");
  }
  double stddev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  Tensor t({rows, cols});
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace kgc
