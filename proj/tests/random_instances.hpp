#pragma once

// Random networks, boxes and posteriors for fuzz tests.

#include <random>
#include <vector>

#include "bnncert/net.hpp"
#include "bnncert/posterior.hpp"
#include "bnncert/spec.hpp"

namespace fuzz {

struct Instance {
  bnncert::Network net;
  bnncert::InputBox T;
  bnncert::WeightBox R;
};

inline bnncert::Network random_net(std::mt19937_64& rng, std::size_t max_layers = 3, std::size_t min_width = 4,
                                   std::size_t max_width = 32) {
  std::uniform_int_distribution<std::size_t> layers(1, max_layers), width(min_width, max_width), io(1, 6);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> dims{io(rng)};
  const std::size_t hidden = layers(rng);
  for (std::size_t k = 0; k < hidden; ++k) dims.push_back(width(rng));
  dims.push_back(1 + io(rng) % 4);
  return bnncert::Network::mlp(dims, coin(rng) ? bnncert::ActivationKind::relu : bnncert::ActivationKind::tanh);
}

inline Instance random_instance(std::mt19937_64& rng, std::size_t max_layers = 3) {
  auto net = random_net(rng, max_layers);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xl(net.input_dim()), xu(net.input_dim());
  const double xr = 0.5 * u(rng);
  for (std::size_t i = 0; i < xl.size(); ++i) {
    xl[i] = n(rng);
    xu[i] = xl[i] + xr * u(rng);
  }
  const double scale = 1.0 / std::sqrt(8.0);
  const double wr = 0.1 * u(rng);
  std::vector<double> wl(net.num_params()), wu(net.num_params());
  for (std::size_t p = 0; p < wl.size(); ++p) {
    wl[p] = scale * n(rng);
    wu[p] = wl[p] + wr * u(rng);
  }
  return {std::move(net), bnncert::InputBox(xl, xu), bnncert::WeightBox(wl, wu)};
}

inline std::vector<double> uniform_in(const std::vector<double>& lo, const std::vector<double>& hi,
                                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(lo.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::min(hi[i], lo[i] + (hi[i] - lo[i]) * u(rng));
  return v;
}

/// Uniform draw, with a fraction of coordinates snapped to the box faces.
inline std::vector<double> draw_in(const std::vector<double>& lo, const std::vector<double>& hi,
                                   std::mt19937_64& rng) {
  auto v = uniform_in(lo, hi, rng);
  std::uniform_int_distribution<int> pick(0, 9);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int r = pick(rng);
    if (r == 0) v[i] = lo[i];
    if (r == 1) v[i] = hi[i];
  }
  return v;
}

}  // namespace fuzz
