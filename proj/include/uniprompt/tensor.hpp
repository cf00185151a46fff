#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uniprompt/errors.hpp"
#include "uniprompt/rng.hpp"

namespace uniprompt {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major tensor of 64-bit floats. Shapes are explicit; there is no
// broadcasting. Most ops below work on rank-2 tensors; vectors are 1xN.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("tensor buffer length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  static std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
      if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
      n *= static_cast<std::size_t>(e);
    }
    return n;
  }

  static Tensor zeros(const std::vector<int>& shape) {
    Tensor t;
    t.shape = shape;
    t.data.assign(numel(shape), 0.0);
    return t;
  }

  static Tensor full(const std::vector<int>& shape, double v) {
    Tensor t;
    t.shape = shape;
    t.data.assign(numel(shape), v);
    return t;
  }

  static Tensor randn(const std::vector<int>& shape, double stddev, Rng& rng) {
    Tensor t = zeros(shape);
    for (double& x : t.data) x = stddev * rng.normal();
    return t;
  }

  static Tensor row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
  }

  static Tensor matrix(int r, int c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const {
    if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape));
    return shape[0];
  }
  int cols() const {
    if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape));
    return shape[1];
  }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void check_finite(const Tensor& t, const char* where) {
  for (double x : t.data) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + where);
    }
  }
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return a.data.empty() ||
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

// FNV-1a over raw bytes; used for checkpoint checksums and cache versions.
inline std::uint64_t fnv1a64(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* b = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h = 0xcbf29ce484222325ull) {
  h = fnv1a64(t.shape.data(), t.shape.size() * sizeof(int), h);
  h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
  return h;
}

inline std::uint64_t hash_string(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// Round-trip every value through IEEE binary32, the checkpoint storage type.
inline void quantize_f32(Tensor& t) {
  for (double& x : t.data) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace uniprompt
