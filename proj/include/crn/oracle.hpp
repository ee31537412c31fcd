#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "crn/errors.hpp"
#include "crn/metrics.hpp"
#include "crn/scm.hpp"

namespace crn {

// Every (mask, coupling, bias) combination for a given node count, with its
// normalized prior. Worlds are grouped contiguously by mask.
struct WorldEnumeration {
  int n = 0;
  double p_edge = 0.5;
  std::vector<CausalWorld> worlds;
  std::vector<double> log_prior;
  std::vector<std::vector<uint8_t>> masks;  // distinct masks, enumeration order
  std::vector<int> world_mask_id;
};

namespace detail {

inline double log_sum_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace detail

// Exhaustive enumeration; guarded to n <= 4 where the world count stays in
// the tens of thousands.
inline WorldEnumeration enumerate_worlds(int n, double p_edge, double beta = 5.0) {
  if (n < 2) throw ConfigError("enumerate_worlds: need at least 2 nodes");
  if (n > 4)
    throw ConfigError("enumerate_worlds: n=" + std::to_string(n) +
                      " enumeration too large (limit is 4)");
  if (p_edge < 0.0 || p_edge > 1.0) throw ConfigError("enumerate_worlds: p_edge out of [0,1]");

  WorldEnumeration en;
  en.n = n;
  en.p_edge = p_edge;

  std::vector<std::pair<int, int>> positions;  // (i, j) with j < i, row-major
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) positions.emplace_back(i, j);
  const int npos = static_cast<int>(positions.size());

  for (uint32_t mbits = 0; mbits < (1u << npos); ++mbits) {
    CausalWorld base;
    base.n = n;
    base.beta = beta;
    base.mask.assign(static_cast<size_t>(n) * n, 0);
    base.coupling.assign(static_cast<size_t>(n) * n, 0);
    base.bias.assign(static_cast<size_t>(n), 0);
    double mask_log_prior = 0.0;
    bool zero_prior = false;
    for (int p = 0; p < npos; ++p) {
      const bool on = (mbits >> p) & 1;
      const double pe = on ? p_edge : 1.0 - p_edge;
      if (pe == 0.0) zero_prior = true;
      if (on) base.mask[static_cast<size_t>(positions[static_cast<size_t>(p)].first) * n +
                        positions[static_cast<size_t>(p)].second] = 1;
      mask_log_prior += pe > 0 ? std::log(pe) : 0.0;
    }
    if (zero_prior) continue;  // impossible mask under this edge prior

    std::vector<std::pair<int, int>> edges;
    for (int p = 0; p < npos; ++p)
      if ((mbits >> p) & 1) edges.push_back(positions[static_cast<size_t>(p)]);
    const int ne = static_cast<int>(edges.size());

    // bias choice sets per node: {1-k, k-1}, a singleton {0} when k = 1
    std::vector<std::vector<int>> bias_sets(static_cast<size_t>(n));
    double log_param_count = ne * std::log(2.0);
    for (int i = 0; i < n; ++i) {
      const int k = base.in_degree(i);
      if (k == 1)
        bias_sets[static_cast<size_t>(i)] = {0};
      else {
        bias_sets[static_cast<size_t>(i)] = {1 - k, k - 1};
        log_param_count += std::log(2.0);
      }
    }

    en.masks.push_back(base.mask);
    const int mask_id = static_cast<int>(en.masks.size()) - 1;

    // iterate couplings x bias choices
    std::vector<size_t> bias_idx(static_cast<size_t>(n), 0);
    for (uint32_t ubits = 0; ubits < (1u << ne); ++ubits) {
      CausalWorld w = base;
      for (int e = 0; e < ne; ++e)
        w.coupling[static_cast<size_t>(edges[static_cast<size_t>(e)].first) * n +
                   edges[static_cast<size_t>(e)].second] = ((ubits >> e) & 1) ? 1 : -1;
      std::fill(bias_idx.begin(), bias_idx.end(), 0);
      while (true) {
        for (int i = 0; i < n; ++i)
          w.bias[static_cast<size_t>(i)] = bias_sets[static_cast<size_t>(i)][bias_idx[static_cast<size_t>(i)]];
        en.worlds.push_back(w);
        en.log_prior.push_back(mask_log_prior - log_param_count);
        en.world_mask_id.push_back(mask_id);
        int carry = 0;
        while (carry < n) {
          if (++bias_idx[static_cast<size_t>(carry)] < bias_sets[static_cast<size_t>(carry)].size()) break;
          bias_idx[static_cast<size_t>(carry)] = 0;
          ++carry;
        }
        if (carry == n) break;
      }
    }
  }
  return en;
}

// Posterior over adjacency masks given interventional samples, with the
// couplings and biases marginalized out within each mask.
struct StructurePosterior {
  int n = 0;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<double> log_prob;  // normalized

  size_t map_index() const {
    size_t best = 0;
    for (size_t i = 1; i < log_prob.size(); ++i)
      if (log_prob[i] > log_prob[best]) best = i;
    return best;
  }

  const std::vector<uint8_t>& map_mask() const { return masks.at(map_index()); }

  // posterior mass on an exact mask; 0 when absent
  double prob_of(std::span<const uint8_t> mask) const {
    for (size_t i = 0; i < masks.size(); ++i)
      if (std::equal(masks[i].begin(), masks[i].end(), mask.begin(), mask.end()))
        return std::exp(log_prob[i]);
    return 0.0;
  }
};

inline StructurePosterior posterior_over_structures(std::span<const InterventionSample> samples,
                                                    int n, double p_edge, double beta = 5.0) {
  WorldEnumeration en = enumerate_worlds(n, p_edge, beta);
  if (en.worlds.empty()) throw ConfigError("posterior_over_structures: empty enumeration");
  for (const auto& s : samples)
    if (static_cast<int>(s.values.size()) != n)
      throw std::invalid_argument("posterior_over_structures: sample arity mismatch");

  std::vector<double> log_w(en.worlds.size());
  for (size_t i = 0; i < en.worlds.size(); ++i) {
    double lw = en.log_prior[i];
    for (const auto& s : samples) lw += sample_log_likelihood(en.worlds[i], s);
    log_w[i] = lw;
  }

  StructurePosterior post;
  post.n = n;
  post.masks = en.masks;
  post.log_prob.assign(en.masks.size(), -std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> per_mask(en.masks.size());
  for (size_t i = 0; i < log_w.size(); ++i)
    per_mask[static_cast<size_t>(en.world_mask_id[i])].push_back(log_w[i]);
  for (size_t m = 0; m < per_mask.size(); ++m)
    post.log_prob[m] = detail::log_sum_exp(per_mask[m]);
  const double total = detail::log_sum_exp(post.log_prob);
  for (double& lp : post.log_prob) lp -= total;
  return post;
}

// Marginal probability of each directed edge; upper triangle and diagonal
// are exactly zero because every enumerated mask is lower triangular.
inline std::vector<double> edge_marginals(const StructurePosterior& post) {
  const int n = post.n;
  std::vector<double> marg(static_cast<size_t>(n) * n, 0.0);
  for (size_t m = 0; m < post.masks.size(); ++m) {
    const double p = std::exp(post.log_prob[m]);
    for (size_t s = 0; s < marg.size(); ++s)
      if (post.masks[m][s]) marg[s] += p;
  }
  return marg;
}

// Full-matrix edge accuracy of the MAP mask against the generating world.
inline double map_edge_accuracy(std::span<const InterventionSample> samples,
                                const CausalWorld& truth, double p_edge) {
  StructurePosterior post = posterior_over_structures(samples, truth.n, p_edge, truth.beta);
  return edge_accuracy(post.map_mask(), truth.mask, truth.n).full;
}

}  // namespace crn
