#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aaunet/tensor.hpp"

namespace aaunet {

enum class Init { Zeros, Ones, KaimingNormal };

/// Named parameter registry for one model instance.
///
/// Each tensor is initialized from its own stream seeded by (seed, name), so
/// adding or removing a sub-block never perturbs the values of the others.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  /// Registers a new trainable tensor. Throws ConfigError on a duplicate name.
  Tensor<T> create(const std::string& name, Shape shape, Init init, int64_t fan_in = 1);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T> at(const std::string& name) const;

  /// Registration order.
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::string> names() const;
  int64_t scalar_count() const;
  void zero_grad();
  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

/// splitmix64 finalizer; used to derive independent seeds.
uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t hash_string(const std::string& s);

}  // namespace aaunet
