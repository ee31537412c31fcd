#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "crn/adam.hpp"
#include "crn/errors.hpp"
#include "crn/metrics.hpp"
#include "crn/nn.hpp"
#include "crn/scm.hpp"
#include "crn/tape.hpp"

namespace crn {

struct CrnConfig {
  int n = 5;
  int enc_hidden1 = 128;  // per-variable trunk, first hidden layer
  int enc_hidden2 = 64;   // per-variable trunk, second hidden layer
  int edge_feat_dim = 16;
  int belief_dim = 64;
  int attn_hidden = 64;
  int pred_hidden = 64;
  int dec_hidden = 128;
  int dec_embed_dim = 16;
  int episode_len = 100;
  bool supervised_variant = false;
  bool zero_belief = false;
  int decoder_train_stride = 1;

  void validate() const {
    if (n < 2) throw ConfigError("model config: n must be >= 2");
    for (int d : {enc_hidden1, enc_hidden2, edge_feat_dim, belief_dim, attn_hidden, pred_hidden,
                  dec_hidden, dec_embed_dim, episode_len, decoder_train_stride})
      if (d <= 0) throw ConfigError("model config: all dimensions must be positive");
  }
};

// One episode prepared for a model: binary values, intervention targets and
// the ground-truth adjacency the decoder is scored against.
struct TrainingEpisode {
  int n = 0;
  int k = 0;
  std::vector<uint8_t> values;     // k*n row-major
  std::vector<int> targets;        // k
  std::vector<uint8_t> adjacency;  // n*n row-major

  static TrainingEpisode from_episode(const Episode& ep) {
    TrainingEpisode te;
    te.n = ep.world.n;
    te.k = static_cast<int>(ep.samples.size());
    te.values.reserve(static_cast<size_t>(te.n) * te.k);
    for (const auto& s : ep.samples) {
      te.values.insert(te.values.end(), s.values.begin(), s.values.end());
      te.targets.push_back(s.target);
    }
    te.adjacency = ep.world.mask;
    return te;
  }

  // Relabels nodes by perm (new index = perm[old index]).
  TrainingEpisode relabeled(const std::vector<int>& perm) const {
    TrainingEpisode out;
    out.n = n;
    out.k = k;
    out.values.assign(values.size(), 0);
    out.adjacency.assign(adjacency.size(), 0);
    for (int t = 0; t < k; ++t)
      for (int i = 0; i < n; ++i)
        out.values[static_cast<size_t>(t) * n + perm[static_cast<size_t>(i)]] =
            values[static_cast<size_t>(t) * n + i];
    for (int t = 0; t < k; ++t) out.targets.push_back(perm[static_cast<size_t>(targets[static_cast<size_t>(t)])]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out.adjacency[static_cast<size_t>(perm[static_cast<size_t>(i)]) * n + perm[static_cast<size_t>(j)]] =
            adjacency[static_cast<size_t>(i) * n + j];
    return out;
  }
};

struct TrainStats {
  double total_loss = 0;
  double recon_loss = 0;
  double dec_loss = 0;
};

// Per-step means over a set of evaluation episodes.
struct EvalCurves {
  std::vector<double> acc_full;
  std::vector<double> acc_lower;
  std::vector<double> recon_loss;
  std::vector<double> dec_loss;
};

struct DecodedGraph {
  std::vector<uint8_t> bits;  // n*n, row-major adjacency
  std::vector<double> probs;  // Bernoulli probability per position
};

// Common train/eval surface shared by the CRN and its baselines.
template <typename Real>
class EpisodeModel {
 public:
  virtual ~EpisodeModel() = default;
  virtual const CrnConfig& config() const = 0;
  virtual ParamStore<Real>& params() = 0;
  virtual std::string kind() const = 0;
  virtual TrainStats train_iteration(const std::vector<TrainingEpisode>& batch,
                                     AdamOpt<Real>& opt) = 0;
  virtual EvalCurves eval_episodes(const std::vector<TrainingEpisode>& episodes) = 0;
};

namespace detail {

template <typename Real>
Tensor<Real> ones_col(int64_t rows) {
  return Tensor<Real>::full({rows}, Real(1));
}

template <typename Real>
void batch_checks(const std::vector<TrainingEpisode>& batch, int n) {
  if (batch.empty()) throw ConfigError("empty episode batch");
  const int k = batch.front().k;
  for (const auto& ep : batch) {
    if (ep.n != n)
      throw ConfigError("episode has n=" + std::to_string(ep.n) + ", model has n=" +
                        std::to_string(n));
    if (ep.k != k) throw ConfigError("episodes in a batch must share k");
    if (static_cast<int>(ep.adjacency.size()) != n * n)
      throw ShapeError("episode adjacency has " + std::to_string(ep.adjacency.size()) +
                       " entries, expected " + std::to_string(n * n));
  }
}

// Stacks episode values/flags into [B*k, n] row-major, episode-major rows.
template <typename Real>
void assemble_inputs(const std::vector<TrainingEpisode>& batch, Tensor<Real>& values,
                     Tensor<Real>& flags) {
  const int64_t B = static_cast<int64_t>(batch.size());
  const int64_t k = batch.front().k;
  const int64_t n = batch.front().n;
  values = Tensor<Real>({B * k, n});
  flags = Tensor<Real>({B * k, n});
  for (int64_t b = 0; b < B; ++b) {
    const TrainingEpisode& ep = batch[static_cast<size_t>(b)];
    for (int64_t t = 0; t < k; ++t) {
      const int64_t row = b * k + t;
      for (int64_t i = 0; i < n; ++i)
        values.at(row, i) = static_cast<Real>(ep.values[static_cast<size_t>(t * n + i)]);
      flags.at(row, ep.targets[static_cast<size_t>(t)]) = Real(1);
    }
  }
}

template <typename Real>
Tensor<Real> column(const Tensor<Real>& m, int64_t j) {
  Tensor<Real> c({m.rows(), 1});
  for (int64_t r = 0; r < m.rows(); ++r) c.data[static_cast<size_t>(r)] = m.at(r, j);
  return c;
}

}  // namespace detail

// Autoregressive LSTM decoder over the flattened adjacency sequence,
// conditioned on a belief vector at every position.
template <typename Real>
struct GraphDecoder {
  int n = 0;
  int emb_dim = 0;
  LstmParams<Real> lstm;
  Dense<Real> head;
  Param<Real>* emb_start = nullptr;
  Param<Real>* emb_zero = nullptr;
  Param<Real>* emb_one = nullptr;

  static GraphDecoder create(ParamStore<Real>& ps, const std::string& prefix, int n,
                             int cond_dim, int emb_dim, int hidden, Rng& rng) {
    GraphDecoder d;
    d.n = n;
    d.emb_dim = emb_dim;
    d.emb_start = &ps.create_xavier(prefix + "/emb_start", {emb_dim}, rng, 1, emb_dim);
    d.emb_zero = &ps.create_xavier(prefix + "/emb_zero", {emb_dim}, rng, 1, emb_dim);
    d.emb_one = &ps.create_xavier(prefix + "/emb_one", {emb_dim}, rng, 1, emb_dim);
    d.lstm = LstmParams<Real>::create(ps, prefix + "/lstm", emb_dim + cond_dim, hidden, rng);
    d.head = Dense<Real>::create(ps, prefix + "/head", hidden, 1, rng);
    return d;
  }

  // Teacher forcing: position s is fed the ground-truth bit s-1. Returns the
  // [rows, n*n] logit matrix.
  Var teacher_forced_logits(Tape<Real>& t, LeafCache<Real>& lf, Var cond,
                            const Tensor<Real>& truth) const {
    const int64_t rows = t.value(cond).rows();
    const int64_t n2 = static_cast<int64_t>(n) * n;
    if (truth.rows() != rows || truth.cols() != n2)
      throw ShapeError("decoder: truth " + Tensor<Real>::shape_str(truth.shape) +
                       " does not match " + std::to_string(rows) + "x" + std::to_string(n2));
    Var h = t.zeros({rows, lstm.hidden});
    Var c = t.zeros({rows, lstm.hidden});
    std::vector<Var> logits;
    logits.reserve(static_cast<size_t>(n2));
    for (int64_t s = 0; s < n2; ++s) {
      Var emb = embed_prev(t, lf, s == 0 ? Tensor<Real>() : detail::column(truth, s - 1), rows);
      Var x = t.concat_cols({emb, cond});
      auto [h2, c2] = lstm_cell(t, lf, x, h, c, lstm);
      h = h2;
      c = c2;
      logits.push_back(head.apply(t, lf, h));
    }
    return t.concat_cols(std::span<const Var>(logits.data(), logits.size()));
  }

  // Free running: position s is fed the argmax of the model's own previous
  // Bernoulli. Deterministic. Returns per-row bits and probabilities.
  std::pair<std::vector<uint8_t>, std::vector<double>> free_run(const Tensor<Real>& cond) const {
    Tape<Real> t;
    LeafCache<Real> lf(t);
    const int64_t rows = cond.rows();
    const int64_t n2 = static_cast<int64_t>(n) * n;
    Var cv = t.constant(cond);
    Var h = t.zeros({rows, lstm.hidden});
    Var c = t.zeros({rows, lstm.hidden});
    std::vector<uint8_t> bits(static_cast<size_t>(rows * n2), 0);
    std::vector<double> probs(static_cast<size_t>(rows * n2), 0.0);
    Tensor<Real> prev;
    for (int64_t s = 0; s < n2; ++s) {
      Var emb = embed_prev(t, lf, s == 0 ? Tensor<Real>() : prev, rows);
      Var x = t.concat_cols({emb, cv});
      auto [h2, c2] = lstm_cell(t, lf, x, h, c, lstm);
      h = h2;
      c = c2;
      Var logit = head.apply(t, lf, h);
      prev = Tensor<Real>({rows});
      for (int64_t r = 0; r < rows; ++r) {
        const Real z = t.value(logit).data[static_cast<size_t>(r)];
        const uint8_t bit = z > Real(0) ? 1 : 0;
        prev.data[static_cast<size_t>(r)] = static_cast<Real>(bit);
        bits[static_cast<size_t>(r * n2 + s)] = bit;
        probs[static_cast<size_t>(r * n2 + s)] =
            static_cast<double>(Tape<Real>::sigmoid_scalar(z));
      }
    }
    return {std::move(bits), std::move(probs)};
  }

 private:
  // prev_bits empty means the learned start token.
  Var embed_prev(Tape<Real>& t, LeafCache<Real>& lf, const Tensor<Real>& prev_bits,
                 int64_t rows) const {
    if (prev_bits.size() == 0)
      return t.outer_param(detail::ones_col<Real>(rows), lf(*emb_start));
    Tensor<Real> inv({rows});
    for (int64_t r = 0; r < rows; ++r)
      inv.data[static_cast<size_t>(r)] = Real(1) - prev_bits.data[static_cast<size_t>(r)];
    return t.add(t.outer_param(prev_bits, lf(*emb_one)), t.outer_param(inv, lf(*emb_zero)));
  }
};

}  // namespace crn
