#include "aaunet/params.hpp"

#include <cmath>
#include <random>

#include "aaunet/errors.hpp"
#include "aaunet/rng.hpp"

namespace aaunet {

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t hash_string(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape, Init init,
                                int64_t fan_in) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  std::vector<T> values(static_cast<size_t>(shape_numel(shape)));
  switch (init) {
    case Init::Zeros:
      std::fill(values.begin(), values.end(), T(0));
      break;
    case Init::Ones:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::KaimingNormal: {
      Rng rng(mix_seed(seed_, hash_string(name)));
      const double stddev = std::sqrt(2.0 / static_cast<double>(std::max<int64_t>(fan_in, 1)));
      for (auto& v : values) v = static_cast<T>(rng.normal() * stddev);
      break;
    }
  }
  Tensor<T> t(std::move(shape), std::move(values), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].second;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [n, _] : entries_) out.push_back(n);
  return out;
}

template <typename T>
int64_t ParamStore<T>::scalar_count() const {
  int64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace aaunet
