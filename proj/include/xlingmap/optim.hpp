#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xlingmap/error.hpp"
#include "xlingmap/layers.hpp"

namespace xlingmap {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam with bias correction. Moment buffers are bound to parameters by
/// position and name on the first step; later steps must pass the same list.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : config(cfg) {}

  void step(std::span<Param* const> params) {
    // Validate everything before touching any state.
    for (const Param* p : params) {
      if (!p->grad.all_finite()) {
        throw NumericError("non-finite gradient in parameter '" + p->name + "' at Adam step " +
                           std::to_string(t + 1));
      }
    }
    if (names.empty()) {
      for (const Param* p : params) {
        names.push_back(p->name);
        m.emplace_back(p->value.rows(), p->value.cols());
        v.emplace_back(p->value.rows(), p->value.cols());
      }
    } else {
      if (names.size() != params.size()) throw ShapeError("Adam: parameter count changed");
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (names[i] != params[i]->name || m[i].rows() != params[i]->value.rows() ||
            m[i].cols() != params[i]->value.cols()) {
          throw ShapeError("Adam: parameter " + std::to_string(i) + " does not match buffer '" +
                           names[i] + "'");
        }
      }
    }

    ++t;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i]->value.data();
      auto g = params[i]->grad.data();
      auto mi = m[i].data();
      auto vi = v[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        mi[j] = b1 * mi[j] + (1.0 - b1) * g[j];
        vi[j] = b2 * vi[j] + (1.0 - b2) * g[j] * g[j];
        const double mhat = mi[j] / c1;
        const double vhat = vi[j] / c2;
        w[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.eps);
      }
    }
  }

  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<std::string> names;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  friend bool operator==(const Adam&, const Adam&) = default;
};

}  // namespace xlingmap
