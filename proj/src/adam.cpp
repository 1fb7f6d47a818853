#include "mcwes/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mcwes {

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].data().size(), 0.0);
      state.second_moment[i].assign(params[i].data().size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    throw std::runtime_error("adam_step: parameter count changed between steps");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data();
    const auto& g = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.size())
      throw std::runtime_error("adam_step: parameter shape changed between steps");
    const bool has_grad = !g.empty();
    for (size_t j = 0; j < p.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      if (!std::isfinite(gj))
        throw std::runtime_error("adam_step: non-finite gradient at parameter " +
                                 std::to_string(i));
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace mcwes
