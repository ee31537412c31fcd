#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "crn/model_base.hpp"

namespace crn {

// Additive belief over an episode prefix: h starts at zero and accumulates
// the per-step encoder outputs, so it is order-insensitive by construction.
template <typename Real>
struct BeliefState {
  Tensor<Real> h;
  int t = 0;

  static BeliefState zero(int dim) {
    BeliefState s;
    s.h = Tensor<Real>::zeros({dim});
    return s;
  }
};

template <typename Real>
BeliefState<Real> belief_update(const BeliefState<Real>& s, const Tensor<Real>& step_output) {
  if (s.h.shape != step_output.shape)
    throw ShapeError("belief_update: " + Tensor<Real>::shape_str(s.h.shape) + " vs " +
                     Tensor<Real>::shape_str(step_output.shape));
  BeliefState<Real> out = s;
  for (int64_t i = 0; i < out.h.size(); ++i)
    out.h.data[static_cast<size_t>(i)] += step_output.data[static_cast<size_t>(i)];
  out.t = s.t + 1;
  return out;
}

template <typename Real>
struct StepOutput {
  Tensor<Real> O;            // [belief_dim]
  Tensor<Real> pred_logits;  // [n]
  Tensor<Real> attn;         // [n, n], row = target variable, diagonal unused
};

// Mean binary cross entropy of the step's reconstruction logits over the
// non-intervened variables.
template <typename Real>
double reconstruction_loss(const StepOutput<Real>& step, const InterventionSample& sample) {
  const int n = static_cast<int>(step.pred_logits.size());
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    if (i == sample.target) continue;
    acc += Tape<Real>::bce_elem(static_cast<double>(step.pred_logits.data[static_cast<size_t>(i)]),
                                static_cast<double>(sample.values[static_cast<size_t>(i)]));
  }
  return acc / (n - 1);
}

// The causal relational network: per-variable relational encoder with a
// shared attention network, additive belief state, and an autoregressive
// graph decoder supervised through a stop gradient.
template <typename Real>
class CrnModel : public EpisodeModel<Real> {
 public:
  explicit CrnModel(CrnConfig cfg, uint64_t seed = 1) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::stream(seed, 2, 0);
    const int n = cfg_.n;
    trunk1_.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::string base = "crn/enc" + std::to_string(i);
      trunk1_.push_back(Dense<Real>::create(ps_, base + "/trunk1", 2, cfg_.enc_hidden1, rng));
      trunk2_.push_back(
          Dense<Real>::create(ps_, base + "/trunk2", cfg_.enc_hidden1, cfg_.enc_hidden2, rng));
      edge_head_.push_back(Dense<Real>::create(ps_, base + "/edges", cfg_.enc_hidden2,
                                               (n - 1) * cfg_.edge_feat_dim, rng));
    }
    readout_ = Dense<Real>::create(ps_, "crn/readout", cfg_.edge_feat_dim, 1, rng);
    attn1_ = Dense<Real>::create(ps_, "crn/attn/l1", 3, cfg_.attn_hidden, rng);
    attn2_ = Dense<Real>::create(ps_, "crn/attn/l2", cfg_.attn_hidden, 1, rng);
    pred1_ = Dense<Real>::create(ps_, "crn/pred/l1", cfg_.edge_feat_dim, cfg_.pred_hidden, rng);
    pred2_ = Dense<Real>::create(ps_, "crn/pred/l2", cfg_.pred_hidden, 1, rng);
    proj_ = Dense<Real>::create(ps_, "crn/proj", n * cfg_.edge_feat_dim, cfg_.belief_dim, rng);
    decoder_ = GraphDecoder<Real>::create(ps_, "crn/dec", n, cfg_.belief_dim, cfg_.dec_embed_dim,
                                          cfg_.dec_hidden, rng);
  }

  const CrnConfig& config() const override { return cfg_; }
  ParamStore<Real>& params() override { return ps_; }

  std::string kind() const override {
    if (cfg_.zero_belief) return "zero-belief";
    if (cfg_.supervised_variant) return "crn-supervised";
    return "crn";
  }

  struct EncoderVars {
    Var pred_logits;            // [R, n]
    Var step_output;            // [R, belief_dim]
    std::vector<Var> attn_rows; // per target, [R, n-1]
  };

  // Relational encoder over a stack of samples (rows).
  EncoderVars build_encoder(Tape<Real>& t, LeafCache<Real>& lf, const Tensor<Real>& values,
                            const Tensor<Real>& flags) const {
    const int n = cfg_.n;
    const int de = cfg_.edge_feat_dim;
    if (values.cols() != n || flags.cols() != n)
      throw ShapeError("encoder: inputs " + Tensor<Real>::shape_str(values.shape) +
                       " do not match n=" + std::to_string(n));
    std::vector<Var> xcol(static_cast<size_t>(n)), fcol(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      xcol[static_cast<size_t>(i)] = t.constant(detail::column(values, i));
      fcol[static_cast<size_t>(i)] = t.constant(detail::column(flags, i));
    }

    // Per-source edge features e_{s->i} and pairwise prediction logits
    // p_{s->i}: how well source s predicts target i.
    std::vector<std::vector<Var>> efeat(static_cast<size_t>(n), std::vector<Var>(static_cast<size_t>(n)));
    std::vector<std::vector<Var>> plogit(static_cast<size_t>(n), std::vector<Var>(static_cast<size_t>(n)));
    for (int s = 0; s < n; ++s) {
      Var u = t.concat_cols({xcol[static_cast<size_t>(s)], fcol[static_cast<size_t>(s)]});
      Var z = trunk2_[static_cast<size_t>(s)].apply(t, lf, t.relu(trunk1_[static_cast<size_t>(s)].apply(t, lf, u)));
      Var edges = edge_head_[static_cast<size_t>(s)].apply(t, lf, z);
      int q = 0;
      for (int i = 0; i < n; ++i) {
        if (i == s) continue;
        Var e = t.slice_cols(edges, q * de, de);
        efeat[static_cast<size_t>(s)][static_cast<size_t>(i)] = e;
        plogit[static_cast<size_t>(s)][static_cast<size_t>(i)] = readout_.apply(t, lf, e);
        ++q;
      }
    }

    // Attention over sources for each target, then the weighted edge-feature
    // sum O_i and the target's reconstruction logit.
    std::vector<Var> step_parts, pred_parts, attn_rows;
    for (int i = 0; i < n; ++i) {
      std::vector<Var> scores;
      for (int s = 0; s < n; ++s) {
        if (s == i) continue;
        Var a_in = t.concat_cols({plogit[static_cast<size_t>(s)][static_cast<size_t>(i)],
                                  xcol[static_cast<size_t>(s)], fcol[static_cast<size_t>(s)]});
        scores.push_back(attn2_.apply(t, lf, t.relu(attn1_.apply(t, lf, a_in))));
      }
      Var w = t.softmax(t.concat_cols(std::span<const Var>(scores.data(), scores.size())), 1);
      attn_rows.push_back(w);
      Var oi{};
      int q = 0;
      for (int s = 0; s < n; ++s) {
        if (s == i) continue;
        Var term = t.scale_rows(efeat[static_cast<size_t>(s)][static_cast<size_t>(i)],
                                t.slice_cols(w, q, 1));
        oi = oi.valid() ? t.add(oi, term) : term;
        ++q;
      }
      step_parts.push_back(oi);
      pred_parts.push_back(pred2_.apply(t, lf, t.relu(pred1_.apply(t, lf, oi))));
    }

    EncoderVars out;
    out.pred_logits = t.concat_cols(std::span<const Var>(pred_parts.data(), pred_parts.size()));
    out.step_output = proj_.apply(
        t, lf, t.concat_cols(std::span<const Var>(step_parts.data(), step_parts.size())));
    out.attn_rows = std::move(attn_rows);
    return out;
  }

  struct Losses {
    Var recon;
    Var dec;
    Var total;
    Var beliefs;  // [B*k, belief_dim]
  };

  // Full training graph over a batch: reconstruction loss at every step plus
  // teacher-forced decoding at the strided steps, conditioned through a stop
  // gradient unless the supervised variant is active.
  Losses build_losses(Tape<Real>& t, const std::vector<TrainingEpisode>& batch) const {
    detail::batch_checks<Real>(batch, cfg_.n);
    const int64_t B = static_cast<int64_t>(batch.size());
    const int64_t k = batch.front().k;
    const int64_t n = cfg_.n;
    const int64_t n2 = n * n;
    Tensor<Real> values, flags;
    detail::assemble_inputs(batch, values, flags);

    LeafCache<Real> lf(t);
    EncoderVars enc = build_encoder(t, lf, values, flags);

    Tensor<Real> recon_mask({B * k, n});
    for (int64_t r = 0; r < B * k; ++r)
      for (int64_t i = 0; i < n; ++i)
        recon_mask.at(r, i) =
            (batch[static_cast<size_t>(r / k)].targets[static_cast<size_t>(r % k)] == i) ? Real(0) : Real(1);
    Var recon = t.bce_with_logits(enc.pred_logits, values, recon_mask);

    Var beliefs = t.cumsum_steps(enc.step_output, B, k);

    // steps t (1-based) with t % stride == 0 are decoded during training
    std::vector<int64_t> rows;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t step = cfg_.decoder_train_stride; step <= k; step += cfg_.decoder_train_stride)
        rows.push_back(b * k + step - 1);
    const int64_t Rd = static_cast<int64_t>(rows.size());
    if (Rd == 0) throw ConfigError("decoder_train_stride leaves no decoded steps");

    Var cond;
    if (cfg_.zero_belief) {
      cond = t.zeros({Rd, cfg_.belief_dim});
    } else {
      Var sel = (Rd == B * k) ? beliefs : t.select_rows(beliefs, rows);
      cond = cfg_.supervised_variant ? sel : t.stop_gradient(sel);
    }

    Tensor<Real> truth({Rd, n2});
    for (int64_t r = 0; r < Rd; ++r) {
      const auto& adj = batch[static_cast<size_t>(rows[static_cast<size_t>(r)] / k)].adjacency;
      for (int64_t s = 0; s < n2; ++s)
        truth.at(r, s) = static_cast<Real>(adj[static_cast<size_t>(s)]);
    }
    Var dec_logits = decoder_.teacher_forced_logits(t, lf, cond, truth);
    Var dec = t.bce_with_logits(dec_logits, truth, Tensor<Real>::full({Rd, n2}, Real(1)));

    Losses out;
    out.recon = recon;
    out.dec = dec;
    out.total = t.add(recon, dec);
    out.beliefs = beliefs;
    return out;
  }

  TrainStats train_iteration(const std::vector<TrainingEpisode>& batch,
                             AdamOpt<Real>& opt) override {
    Tape<Real> t;
    Losses losses = build_losses(t, batch);
    t.backward(losses.total);
    opt.step();
    TrainStats stats;
    stats.recon_loss = static_cast<double>(t.scalar(losses.recon));
    stats.dec_loss = static_cast<double>(t.scalar(losses.dec));
    stats.total_loss = static_cast<double>(t.scalar(losses.total));
    return stats;
  }

  EvalCurves eval_episodes(const std::vector<TrainingEpisode>& episodes) override {
    detail::batch_checks<Real>(episodes, cfg_.n);
    const int64_t k = episodes.front().k;
    const int64_t n = cfg_.n;
    const int64_t n2 = n * n;
    EvalCurves curves;
    curves.acc_full.assign(static_cast<size_t>(k), 0.0);
    curves.acc_lower.assign(static_cast<size_t>(k), 0.0);
    curves.recon_loss.assign(static_cast<size_t>(k), 0.0);
    curves.dec_loss.assign(static_cast<size_t>(k), 0.0);

    const int64_t chunk = std::max<int64_t>(1, 1000 / k);
    for (size_t off = 0; off < episodes.size(); off += static_cast<size_t>(chunk)) {
      const size_t hi = std::min(episodes.size(), off + static_cast<size_t>(chunk));
      std::vector<TrainingEpisode> part(episodes.begin() + static_cast<int64_t>(off),
                                        episodes.begin() + static_cast<int64_t>(hi));
      const int64_t E = static_cast<int64_t>(part.size());
      const int64_t R = E * k;

      Tape<Real> t;
      LeafCache<Real> lf(t);
      Tensor<Real> values, flags;
      detail::assemble_inputs(part, values, flags);
      EncoderVars enc = build_encoder(t, lf, values, flags);
      Var beliefs = t.cumsum_steps(enc.step_output, E, k);

      Tensor<Real> cond = cfg_.zero_belief ? Tensor<Real>::zeros({R, cfg_.belief_dim})
                                           : t.value(beliefs);
      auto [bits, probs] = decoder_.free_run(ps_, cond);

      Tensor<Real> truth({R, n2});
      for (int64_t r = 0; r < R; ++r)
        for (int64_t s = 0; s < n2; ++s)
          truth.at(r, s) =
              static_cast<Real>(part[static_cast<size_t>(r / k)].adjacency[static_cast<size_t>(s)]);
      Tape<Real> t2;
      LeafCache<Real> lf2(t2);
      Var tf_logits = decoder_.teacher_forced_logits(t2, lf2, t2.constant(cond), truth);

      for (int64_t r = 0; r < R; ++r) {
        const int64_t e = r / k, step = r % k;
        const auto& adj = part[static_cast<size_t>(e)].adjacency;
        std::span<const uint8_t> row_bits(bits.data() + r * n2, static_cast<size_t>(n2));
        EdgeAccuracy acc = edge_accuracy(row_bits, adj, static_cast<int>(n));
        curves.acc_full[static_cast<size_t>(step)] += acc.full;
        curves.acc_lower[static_cast<size_t>(step)] += acc.lower;

        double dec_acc = 0;
        for (int64_t s = 0; s < n2; ++s)
          dec_acc += Tape<Real>::bce_elem(static_cast<double>(t2.value(tf_logits).at(r, s)),
                                          static_cast<double>(truth.at(r, s)));
        curves.dec_loss[static_cast<size_t>(step)] += dec_acc / static_cast<double>(n2);

        const int target = part[static_cast<size_t>(e)].targets[static_cast<size_t>(step)];
        double rec = 0;
        for (int64_t i = 0; i < n; ++i) {
          if (i == target) continue;
          rec += Tape<Real>::bce_elem(static_cast<double>(t.value(enc.pred_logits).at(r, i)),
                                      static_cast<double>(values.at(r, i)));
        }
        curves.recon_loss[static_cast<size_t>(step)] += rec / static_cast<double>(n - 1);
      }
    }
    const double E = static_cast<double>(episodes.size());
    for (int64_t s = 0; s < k; ++s) {
      curves.acc_full[static_cast<size_t>(s)] /= E;
      curves.acc_lower[static_cast<size_t>(s)] /= E;
      curves.recon_loss[static_cast<size_t>(s)] /= E;
      curves.dec_loss[static_cast<size_t>(s)] /= E;
    }
    return curves;
  }

  // Single-sample encoder pass.
  StepOutput<Real> encode_step(const InterventionSample& sample) const {
    const int n = cfg_.n;
    if (static_cast<int>(sample.values.size()) != n)
      throw ShapeError("encode_step: sample has " + std::to_string(sample.values.size()) +
                       " values, model expects " + std::to_string(n));
    Tensor<Real> values({1, n}), flags({1, n});
    for (int i = 0; i < n; ++i) values.at(0, i) = static_cast<Real>(sample.values[static_cast<size_t>(i)]);
    flags.at(0, sample.target) = Real(1);
    Tape<Real> t;
    LeafCache<Real> lf(t);
    EncoderVars enc = const_cast<CrnModel*>(this)->build_encoder(t, lf, values, flags);
    StepOutput<Real> out;
    out.O = t.value(enc.step_output).reshaped({cfg_.belief_dim});
    out.pred_logits = t.value(enc.pred_logits).reshaped({n});
    out.attn = Tensor<Real>({n, n});
    for (int i = 0; i < n; ++i) {
      int q = 0;
      for (int s = 0; s < n; ++s) {
        if (s == i) continue;
        out.attn.at(i, s) = t.value(enc.attn_rows[static_cast<size_t>(i)]).at(0, q);
        ++q;
      }
    }
    return out;
  }

  // Beliefs after each step of one episode, [k, belief_dim]; forward only.
  Tensor<Real> episode_beliefs(const TrainingEpisode& ep) const {
    Tape<Real> t;
    LeafCache<Real> lf(t);
    Tensor<Real> values, flags;
    detail::assemble_inputs({ep}, values, flags);
    EncoderVars enc = const_cast<CrnModel*>(this)->build_encoder(t, lf, values, flags);
    return t.value(t.cumsum_steps(enc.step_output, 1, ep.k));
  }

  // Free-running decode from a belief vector; deterministic.
  DecodedGraph decode_graph_free_running(const BeliefState<Real>& state) const {
    Tensor<Real> cond =
        cfg_.zero_belief ? Tensor<Real>::zeros({1, cfg_.belief_dim})
                         : state.h.reshaped({1, cfg_.belief_dim});
    auto [bits, probs] = decoder_.free_run(const_cast<ParamStore<Real>&>(ps_), cond);
    return DecodedGraph{std::move(bits), std::move(probs)};
  }

  // Teacher-forced decode of a known adjacency; returns (mean bce, probs).
  std::pair<double, std::vector<double>> decode_graph_teacher_forced(
      const BeliefState<Real>& state, std::span<const uint8_t> true_adjacency) const {
    const int64_t n2 = static_cast<int64_t>(cfg_.n) * cfg_.n;
    if (static_cast<int64_t>(true_adjacency.size()) != n2)
      throw ShapeError("decode_graph_teacher_forced: adjacency has " +
                       std::to_string(true_adjacency.size()) + " entries, expected " +
                       std::to_string(n2));
    Tape<Real> t;
    LeafCache<Real> lf(t);
    Tensor<Real> cond = cfg_.zero_belief ? Tensor<Real>::zeros({1, cfg_.belief_dim})
                                         : state.h.reshaped({1, cfg_.belief_dim});
    Tensor<Real> truth({1, n2});
    for (int64_t s = 0; s < n2; ++s) truth.at(0, s) = static_cast<Real>(true_adjacency[static_cast<size_t>(s)]);
    Var cv = t.constant(cond);
    Var logits = decoder_.teacher_forced_logits(t, lf, cv, truth);
    double loss = 0;
    std::vector<double> probs(static_cast<size_t>(n2));
    for (int64_t s = 0; s < n2; ++s) {
      const double z = static_cast<double>(t.value(logits).at(0, s));
      loss += Tape<Real>::bce_elem(z, static_cast<double>(truth.at(0, s)));
      probs[static_cast<size_t>(s)] = 1.0 / (1.0 + std::exp(-z));
    }
    return {loss / static_cast<double>(n2), std::move(probs)};
  }

  const GraphDecoder<Real>& decoder() const { return decoder_; }

 private:
  CrnConfig cfg_;
  ParamStore<Real> ps_;
  std::vector<Dense<Real>> trunk1_, trunk2_, edge_head_;
  Dense<Real> readout_, attn1_, attn2_, pred1_, pred2_, proj_;
  GraphDecoder<Real> decoder_;
};

}  // namespace crn
