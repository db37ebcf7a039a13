#ifndef POLYMORPH_ORACLES_HPP_
#define POLYMORPH_ORACLES_HPP_

// Reference computations used to check the library. Each one is written
// straight from its defining formula with plain loops and deliberately does
// not call into the code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

namespace polymorph::oracle {

// G_t = sum_{k=t}^{T-1} gamma^{k-t} r_k + gamma^{T-t} * tail, per column.
inline std::vector<std::vector<double>> brute_force_returns(
    const std::vector<std::vector<double>>& rewards, double gamma,
    const std::vector<double>& tail) {
  const std::size_t steps = rewards.size();
  std::vector<std::vector<double>> g(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    g[t].assign(rewards[t].size(), 0.0);
    for (std::size_t i = 0; i < rewards[t].size(); ++i) {
      double sum = 0.0;
      for (std::size_t k = t; k < steps; ++k) {
        sum += std::pow(gamma, static_cast<double>(k - t)) * rewards[k][i];
      }
      sum += std::pow(gamma, static_cast<double>(steps - t)) * tail[i];
      g[t][i] = sum;
    }
  }
  return g;
}

// ln of the normal density, evaluated as log(exp(.) / (sigma sqrt(2 pi))).
inline double normal_log_density(double x, double mean, double sigma) {
  const double density =
      std::exp(-(x - mean) * (x - mean) / (2.0 * sigma * sigma)) /
      (sigma * std::sqrt(2.0 * std::numbers::pi));
  return std::log(density);
}

inline double free_fall_height(double z0, double gravity, double t) {
  return z0 - 0.5 * gravity * t * t;
}

struct Sphere {
  double x, y, z, radius;
  bool alive;
};

inline std::vector<std::pair<std::size_t, std::size_t>> brute_force_collisions(
    const std::vector<Sphere>& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j <= i || !s[i].alive || !s[j].alive) continue;
      const double dx = s[i].x - s[j].x;
      const double dy = s[i].y - s[j].y;
      const double dz = s[i].z - s[j].z;
      if (std::sqrt(dx * dx + dy * dy + dz * dz) < s[i].radius + s[j].radius) {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

// S = 1 - |1 - cos(angle between r_hat and the all-ones vector)|.
inline double similarity_of_mean(const std::vector<double>& r_hat) {
  double dot = 0.0, norm2 = 0.0;
  for (double v : r_hat) {
    dot += v;
    norm2 += v * v;
  }
  if (norm2 == 0.0) return 0.0;
  const double cos = dot / (std::sqrt(norm2) * std::sqrt(static_cast<double>(r_hat.size())));
  return 1.0 - std::abs(1.0 - cos);
}

// Straight-line dense layer: y_o = act(sum_i w[o][i] x_i + b_o).
inline std::vector<double> dense_reference(
    const std::vector<std::vector<double>>& w, const std::vector<double>& b,
    const std::vector<double>& x, bool apply_tanh) {
  std::vector<double> y(w.size());
  for (std::size_t o = 0; o < w.size(); ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += w[o][i] * x[i];
    y[o] = apply_tanh ? std::tanh(acc) : acc;
  }
  return y;
}

// Central finite difference of f with respect to params[k].
inline std::vector<double> central_difference(
    const std::function<double()>& f, std::vector<double*> params, double h) {
  std::vector<double> g(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = *params[k];
    *params[k] = saved + h;
    const double up = f();
    *params[k] = saved - h;
    const double down = f();
    *params[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero pairs honest.
inline double relative_error(double a, double b, double floor = 1e-6) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

}  // namespace polymorph::oracle

#endif  // POLYMORPH_ORACLES_HPP_
