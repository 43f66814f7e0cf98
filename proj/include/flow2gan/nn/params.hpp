// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "flow2gan/core/rng.hpp"
#include "flow2gan/nn/autodiff.hpp"

namespace flow2gan::nn {

/// Registry of named trainable tensors. Insertion order is the canonical
/// iteration order everywhere (optimizers, checkpoints), which keeps every
/// run bit-reproducible.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  ad::Value create(const std::string& name, Tensor init);
  /// Normal(0, std) with resampling outside two standard deviations.
  ad::Value create_trunc_normal(const std::string& name, std::vector<int64_t> shape,
                                Rng& rng, double std_dev);
  ad::Value create_zeros(const std::string& name, std::vector<int64_t> shape);
  ad::Value create_full(const std::string& name, std::vector<int64_t> shape, double v);

  ad::Value get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, ad::Value>>& items() const { return items_; }

  /// Values whose name starts with prefix, in insertion order.
  std::vector<ad::Value> group(const std::string& prefix) const;
  std::vector<std::pair<std::string, ad::Value>> group_items(const std::string& prefix) const;

  int64_t total_params() const;
  int64_t total_params(const std::string& prefix) const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, ad::Value>> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace flow2gan::nn
