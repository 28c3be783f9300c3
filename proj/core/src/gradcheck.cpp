#include "dualran/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dualran/errors.hpp"

namespace dualran {

namespace {

double scalar_of(const Tensord& t) {
  if (!t.defined() || t.numel() != 1) {
    throw ContractError("grad_check: function must return a scalar, got " +
                        (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
  }
  return t.item();
}

double deviation(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

double grad_check(const std::function<Tensord(const Tensord&)>& f, const Tensord& x, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
  Tensord leaf = x.detach(true);
  GradCheckOptions opts;
  opts.epsilon = epsilon;
  return grad_check_leaves([&] { return f(leaf); }, {{"x", leaf}}, opts).max_deviation;
}

GradCheckResult grad_check_leaves(const std::function<Tensord()>& f,
                                  const std::vector<std::pair<std::string, Tensord>>& leaves,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
  for (auto [name, t] : leaves) {
    if (!t.is_leaf() || !t.requires_grad()) throw ContractError("grad_check: '" + name + "' is not a trainable leaf");
    t.zero_grad();
  }

  const Tensord loss = f();
  scalar_of(loss);
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : leaves) {
    auto g = t.grad();
    analytic.emplace_back(t.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }
  if (options.corrupt_analytic && !analytic.empty() && !analytic[0].empty()) {
    analytic[0][0] += 1e-2 * std::max(1.0, std::abs(analytic[0][0]));
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensord t = leaves[k].second;
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double plus = scalar_of(f());
      values[i] = saved - options.epsilon;
      const double minus = scalar_of(f());
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double dev = deviation(analytic[k][i], numeric);
      ++result.coordinates;
      if (result.coordinates == 1 || dev > result.max_deviation) {
        result.max_deviation = dev;
        result.worst_tensor = leaves[k].first;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace dualran
