#pragma once

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace tdmask {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major double tensor, the only numeric container the toy
/// attention kernel needs.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(), 0.0);
  }

  std::size_t count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }

  double& operator()(int i) { return data[i]; }
  double operator()(int i) const { return data[i]; }
  double& operator()(int i, int j) { return data[i * shape[1] + j]; }
  double operator()(int i, int j) const { return data[i * shape[1] + j]; }
  double& operator()(int i, int j, int k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double operator()(int i, int j, int k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  void fill_uniform(std::mt19937_64& rng, double lo = -0.1, double hi = 0.1) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& x : data) x = dist(rng);
  }

  bool finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace tdmask
