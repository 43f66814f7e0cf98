// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/nn/params.hpp"

#include "flow2gan/core/errors.hpp"

namespace flow2gan::nn {

ad::Value ParameterStore::create(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  ad::Value v(std::move(init), true);
  v.node()->name = name;
  index_[name] = items_.size();
  items_.emplace_back(name, v);
  return v;
}

ad::Value ParameterStore::create_trunc_normal(const std::string& name,
                                              std::vector<int64_t> shape, Rng& rng,
                                              double std_dev) {
  Tensor t(std::move(shape));
  for (auto& x : t.data) {
    double z = rng.gaussian();
    while (std::abs(z) > 2.0) z = rng.gaussian();
    x = z * std_dev;
  }
  return create(name, std::move(t));
}

ad::Value ParameterStore::create_zeros(const std::string& name, std::vector<int64_t> shape) {
  return create(name, Tensor(std::move(shape)));
}

ad::Value ParameterStore::create_full(const std::string& name, std::vector<int64_t> shape,
                                      double v) {
  return create(name, Tensor::full(std::move(shape), v));
}

ad::Value ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return items_[it->second].second;
}

bool ParameterStore::has(const std::string& name) const { return index_.count(name) > 0; }

std::vector<ad::Value> ParameterStore::group(const std::string& prefix) const {
  std::vector<ad::Value> out;
  for (const auto& [name, v] : items_)
    if (name.rfind(prefix, 0) == 0) out.push_back(v);
  return out;
}

std::vector<std::pair<std::string, ad::Value>> ParameterStore::group_items(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, ad::Value>> out;
  for (const auto& item : items_)
    if (item.first.rfind(prefix, 0) == 0) out.push_back(item);
  return out;
}

int64_t ParameterStore::total_params() const {
  int64_t n = 0;
  for (const auto& [name, v] : items_) n += v.val().numel();
  return n;
}

int64_t ParameterStore::total_params(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& [name, v] : items_)
    if (name.rfind(prefix, 0) == 0) n += v.val().numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, v] : items_) v.zero_grad();
}

}  // namespace flow2gan::nn
