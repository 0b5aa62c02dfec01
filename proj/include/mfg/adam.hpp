#pragma once

// Adam with bias correction, applied to a ParamSet. Ascent is expressed
// elsewhere as descent on negated gradients so there is one update path.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "network.hpp"
#include "tensor.hpp"

namespace mfg {

// Moment estimates in W0,b0,W1,b1,... order, mirroring ParamSet.
struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  int64_t step_count = 0;

  // Fresh state for a parameter set: zero moments, zero steps.
  static AdamState like(const ParamSet& params) {
    AdamState s;
    const size_t layers = params.weights.size();
    s.first_moment.reserve(2 * layers);
    s.second_moment.reserve(2 * layers);
    for (size_t l = 0; l < layers; ++l) {
      s.first_moment.push_back(Tensor::zeros(params.weights[l].shape));
      s.first_moment.push_back(Tensor::zeros(params.biases[l].shape));
      s.second_moment.push_back(Tensor::zeros(params.weights[l].shape));
      s.second_moment.push_back(Tensor::zeros(params.biases[l].shape));
    }
    return s;
  }
};

// One Adam update:
//   m <- b1*m + (1-b1)*g        v <- b2*v + (1-b2)*g^2
//   mhat = m/(1-b1^t)           vhat = v/(1-b2^t)
//   theta <- theta - lr*mhat/(sqrt(vhat) + eps)
inline std::pair<ParamSet, AdamState> adam_step(const ParamSet& params, const ParamSet& grads,
                                                const AdamState& state, double lr, double beta1,
                                                double beta2, double eps) {
  if (!params.spec.same_layout(grads.spec))
    raise(Errc::precondition, "adam_step: parameter and gradient layouts differ");
  if (!(lr > 0.0)) raise(Errc::precondition, "adam_step: lr must be > 0");
  if (!(beta1 >= 0.0) || beta1 >= 1.0 || !(beta2 >= 0.0) || beta2 >= 1.0)
    raise(Errc::precondition, "adam_step: betas must lie in [0, 1)");
  if (!(eps > 0.0)) raise(Errc::precondition, "adam_step: eps must be > 0");

  const size_t layers = params.weights.size();
  if (state.first_moment.size() != 2 * layers || state.second_moment.size() != 2 * layers)
    raise(Errc::precondition, "adam_step: optimizer state does not match parameter layout");

  ParamSet out = params;
  AdamState next = state;
  next.step_count = state.step_count + 1;
  const double t = static_cast<double>(next.step_count);
  const double corr1 = 1.0 - std::pow(beta1, t);
  const double corr2 = 1.0 - std::pow(beta2, t);

  for (size_t l = 0; l < layers; ++l) {
    for (int part = 0; part < 2; ++part) {
      const Tensor& g = part == 0 ? grads.weights[l] : grads.biases[l];
      Tensor& th = part == 0 ? out.weights[l] : out.biases[l];
      Tensor& m = next.first_moment[2 * l + part];
      Tensor& v = next.second_moment[2 * l + part];
      const char* which = part == 0 ? "weights" : "biases";
      if (!g.same_shape(th) || !m.same_shape(th) || !v.same_shape(th))
        raise(Errc::shape_mismatch,
              "adam_step: shape mismatch in layer " + std::to_string(l) + " " + which);
      if (!g.all_finite())
        raise(Errc::non_finite,
              "adam_step: non-finite gradient in layer " + std::to_string(l) + " " + which);
      for (size_t i = 0; i < th.data.size(); ++i) {
        const double gi = g.data[i];
        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
        v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * (gi * gi);
        const double mhat = m.data[i] / corr1;
        const double vhat = v.data[i] / corr2;
        th.data[i] = th.data[i] - lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
  return {out, next};
}

}  // namespace mfg
