#include "dualran/params.hpp"

#include "dualran/errors.hpp"

namespace dualran {

template <typename T>
Tensor<T> ParamStore<T>::add(std::string name, Shape shape, std::vector<T> init) {
  if (find(name) != nullptr) throw ConfigError("parameter '" + name + "' registered twice");
  auto t = Tensor<T>::from_data(std::move(shape), std::move(init), true);
  entries_.push_back({std::move(name), t});
  return t;
}

template <typename T>
const typename ParamStore<T>::Entry* ParamStore<T>::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
std::size_t ParamStore<T>::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
std::vector<T> uniform_values(Rng& rng, std::size_t n, double bound) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return v;
}

template <typename T>
std::vector<T> normal_values(Rng& rng, std::size_t n, double stddev) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
  return v;
}

template class ParamStore<float>;
template class ParamStore<double>;
template std::vector<float> uniform_values<float>(Rng&, std::size_t, double);
template std::vector<double> uniform_values<double>(Rng&, std::size_t, double);
template std::vector<float> normal_values<float>(Rng&, std::size_t, double);
template std::vector<double> normal_values<double>(Rng&, std::size_t, double);

}  // namespace dualran
