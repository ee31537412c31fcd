#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crn/errors.hpp"
#include "crn/rng.hpp"

namespace crn {

// Ground-truth binary causal Bayesian network: a soft random Boolean network.
// Edges run j -> i only for j < i, so the adjacency mask is strictly lower
// triangular and the graph is a DAG under the node ordering.
struct CausalWorld {
  int n = 0;
  std::vector<uint8_t> mask;     // n*n row-major; mask[i*n+j] = 1 means edge j -> i
  std::vector<int8_t> coupling;  // +-1 where mask is set, 0 elsewhere
  std::vector<int> bias;         // per node, in {1-k_i, k_i-1}
  double beta = 5.0;

  uint8_t edge(int i, int j) const { return mask[static_cast<size_t>(i) * n + j]; }
  int in_degree(int i) const {
    int k = 0;
    for (int j = 0; j < i; ++j) k += edge(i, j);
    return k;
  }
};

struct InterventionSample {
  std::vector<uint8_t> values;  // binary node values
  int target = -1;              // index of the intervened node
};

struct Episode {
  CausalWorld world;
  std::vector<InterventionSample> samples;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Samples mask entries iid Bernoulli(p_edge) over the strict lower triangle,
// couplings uniform over {-1,+1} per edge, and bias uniform over its
// two-element set (forced to 0 when the in-degree is exactly 1).
inline CausalWorld sample_world(int n, double p_edge, Rng& rng, double beta = 5.0) {
  if (n < 2) throw ConfigError("sample_world: need at least 2 nodes, got " + std::to_string(n));
  if (p_edge < 0.0 || p_edge > 1.0)
    throw ConfigError("sample_world: p_edge must be in [0,1], got " + std::to_string(p_edge));
  if (beta <= 0.0) throw ConfigError("sample_world: beta must be positive");
  CausalWorld w;
  w.n = n;
  w.beta = beta;
  w.mask.assign(static_cast<size_t>(n) * n, 0);
  w.coupling.assign(static_cast<size_t>(n) * n, 0);
  w.bias.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j)
      if (rng.bernoulli(p_edge)) w.mask[static_cast<size_t>(i) * n + j] = 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j)
      if (w.edge(i, j)) w.coupling[static_cast<size_t>(i) * n + j] = static_cast<int8_t>(rng.sign());
  for (int i = 0; i < n; ++i) {
    const int k = w.in_degree(i);
    if (k == 1) {
      w.bias[static_cast<size_t>(i)] = 0;  // singleton set {0}
    } else {
      w.bias[static_cast<size_t>(i)] = rng.bernoulli(0.5) ? (k - 1) : (1 - k);
    }
  }
  return w;
}

// P(X_i = 1 | parents, intervened). Hard interventions replace the node's
// conditional with a uniform coin.
inline double conditional_prob_one(const CausalWorld& w, int i, std::span<const uint8_t> values,
                                   bool intervened) {
  if (intervened) return 0.5;
  double acc = static_cast<double>(w.bias[static_cast<size_t>(i)]);
  for (int j = 0; j < i; ++j)
    if (w.edge(i, j))
      acc += static_cast<double>(w.coupling[static_cast<size_t>(i) * w.n + j]) *
             static_cast<double>(values[static_cast<size_t>(j)]);
  return sigmoid(w.beta * acc);
}

// Draws node values in index order, each conditioned on the already-sampled
// prefix; the target node is forced to the uniform intervention coin.
inline InterventionSample ancestral_sample(const CausalWorld& w, int target, Rng& rng) {
  if (target < 0 || target >= w.n)
    throw std::invalid_argument("ancestral_sample: target " + std::to_string(target) +
                                " out of range [0," + std::to_string(w.n) + ")");
  InterventionSample s;
  s.target = target;
  s.values.assign(static_cast<size_t>(w.n), 0);
  for (int i = 0; i < w.n; ++i) {
    const double p = conditional_prob_one(w, i, s.values, i == target);
    s.values[static_cast<size_t>(i)] = rng.bernoulli(p) ? 1 : 0;
  }
  return s;
}

// k samples, each under a fresh uniformly-drawn single intervention.
inline Episode sample_episode(const CausalWorld& w, int k, Rng& rng) {
  if (k < 1) throw ConfigError("sample_episode: episode length must be >= 1");
  Episode ep;
  ep.world = w;
  ep.samples.reserve(static_cast<size_t>(k));
  for (int t = 0; t < k; ++t) {
    const int target = rng.uniform_int(w.n);
    ep.samples.push_back(ancestral_sample(w, target, rng));
  }
  return ep;
}

// log p(x | world, intervention on sample.target); the intervened node
// contributes log(1/2).
inline double sample_log_likelihood(const CausalWorld& w, const InterventionSample& s) {
  if (static_cast<int>(s.values.size()) != w.n)
    throw std::invalid_argument("sample_log_likelihood: sample has " +
                                std::to_string(s.values.size()) + " values, world has " +
                                std::to_string(w.n));
  double ll = 0.0;
  for (int i = 0; i < w.n; ++i) {
    const double p1 = conditional_prob_one(w, i, s.values, i == s.target);
    const double p = s.values[static_cast<size_t>(i)] ? p1 : 1.0 - p1;
    ll += std::log(p);
  }
  return ll;
}

}  // namespace crn
