#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dualran/rng.hpp"
#include "dualran/tensor.hpp"

namespace dualran {

/// Ordered registry of every trainable array of a model (the W_all set).
///
/// Registration order is construction order, which fixes both the optimizer's
/// iteration order and the checkpoint record order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  /// Registers a new trainable leaf. Duplicate names raise ConfigError.
  Tensor<T> add(std::string name, Shape shape, std::vector<T> init);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const Entry* find(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  /// Total number of scalar parameters.
  std::size_t count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

template <typename T>
std::vector<T> uniform_values(Rng& rng, std::size_t n, double bound);
template <typename T>
std::vector<T> normal_values(Rng& rng, std::size_t n, double stddev);

}  // namespace dualran
