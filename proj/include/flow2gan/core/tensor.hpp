// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace flow2gan {

/// Dense row-major tensor of doubles. The shape is a list of extents;
/// a rank-0 tensor (shape {}) holds a single scalar.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t dim(size_t i) const { return shape[i]; }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  // 2-D accessors; row-major with row extent shape[0], column extent shape[1].
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
  }
};

}  // namespace flow2gan
