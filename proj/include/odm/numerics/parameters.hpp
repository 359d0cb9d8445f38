#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "odm/numerics/tensor.hpp"

namespace odm::nn {

/// Gradients keyed by parameter name.
using GradientMap = std::map<std::string, Tensor, std::less<>>;

/// Named parameters plus their Adam state. Entries are never removed, and
/// their storage is stable while no parameter is being added, so a tape may
/// reference values directly.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor first_moment;
    Tensor second_moment;
    std::uint64_t updates = 0;
    bool frozen = false;
  };

  std::size_t add(std::string name, Tensor init) {
    if (index_.count(name))
      throw std::invalid_argument("duplicate parameter '" + name + "'");
    Entry e;
    e.first_moment = Tensor(init.shape());
    e.second_moment = Tensor(init.shape());
    e.value = std::move(init);
    e.name = std::move(name);
    index_.emplace(e.name, entries_.size());
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  std::size_t add_uniform(std::string name, Shape shape, std::size_t fan_in,
                          std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = dist(rng);
    return add(std::move(name), std::move(t));
  }

  bool contains(std::string_view name) const {
    return index_.find(std::string(name)) != index_.end();
  }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
      throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  Entry& entry(std::string_view name) { return entries_[index_of(name)]; }
  const Entry& entry(std::string_view name) const { return entries_[index_of(name)]; }
  Tensor& value(std::string_view name) { return entry(name).value; }
  const Tensor& value(std::string_view name) const { return entry(name).value; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Freezes or unfreezes every parameter whose name starts with `prefix`.
  void set_frozen_prefix(std::string_view prefix, bool frozen) {
    for (auto& e : entries_)
      if (std::string_view(e.name).starts_with(prefix)) e.frozen = frozen;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Hash over the values of every parameter under `prefix`.
  std::size_t hash_prefix(std::string_view prefix) const {
    std::size_t h = 0;
    for (const auto& e : entries_) {
      if (!std::string_view(e.name).starts_with(prefix)) continue;
      h ^= hash_tensor(e.value) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= std::hash<std::string>{}(e.name) + (h << 6) + (h >> 2);
    }
    return h;
  }

  std::uint64_t step_count() const { return steps_; }
  void increment_step() { ++steps_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t steps_ = 0;
};

}  // namespace odm::nn
