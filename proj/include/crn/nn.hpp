#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "crn/rng.hpp"
#include "crn/tape.hpp"
#include "crn/tensor.hpp"

namespace crn {

// Owns all parameters of a model in creation order. Creation order is the
// canonical ordering for the optimizer, checkpoints and gradient checks.
template <typename Real>
class ParamStore {
 public:
  Param<Real>& create(const std::string& name, std::vector<int64_t> shape) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Param<Real>>(name, Tensor<Real>(std::move(shape))));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  // Weight init: uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
  Param<Real>& create_xavier(const std::string& name, std::vector<int64_t> shape, Rng& rng,
                             int64_t fan_in = -1, int64_t fan_out = -1) {
    Param<Real>& p = create(name, std::move(shape));
    if (fan_in < 0) fan_in = p.value.ndim() == 2 ? p.value.dim(1) : 1;
    if (fan_out < 0) fan_out = p.value.ndim() == 2 ? p.value.dim(0) : p.value.size();
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : p.value.data) v = static_cast<Real>(rng.uniform(-a, a));
    return p;
  }

  Param<Real>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return *params_[it->second];
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  size_t size() const { return params_.size(); }
  Param<Real>& at(size_t i) { return *params_.at(i); }
  const Param<Real>& at(size_t i) const { return *params_.at(i); }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  int64_t total_entries() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  template <typename Fn>
  void for_each(Fn fn) {
    for (auto& p : params_) fn(*p);
  }

 private:
  std::vector<std::unique_ptr<Param<Real>>> params_;
  std::map<std::string, size_t> index_;
};

// One tape node per param per pass, however many ops consume it.
template <typename Real>
class LeafCache {
 public:
  explicit LeafCache(Tape<Real>& t) : tape_(&t) {}
  Var operator()(Param<Real>& p) {
    auto it = cache_.find(&p);
    if (it != cache_.end()) return it->second;
    Var v = tape_->leaf(p);
    cache_.emplace(&p, v);
    return v;
  }

 private:
  Tape<Real>* tape_;
  std::map<Param<Real>*, Var> cache_;
};

// Affine layer bundling its weight and bias params.
template <typename Real>
struct Dense {
  Param<Real>* w = nullptr;
  Param<Real>* b = nullptr;

  static Dense create(ParamStore<Real>& ps, const std::string& prefix, int64_t in, int64_t out,
                      Rng& rng) {
    Dense d;
    d.w = &ps.create_xavier(prefix + "/w", {out, in}, rng);
    d.b = &ps.create(prefix + "/b", {out});
    return d;
  }

  Var apply(Tape<Real>& t, LeafCache<Real>& lf, Var x) const {
    return t.linear(x, lf(*w), lf(*b));
  }
};

template <typename Real>
struct LstmParams {
  Param<Real>* w_ih = nullptr;  // [4H, in]
  Param<Real>* w_hh = nullptr;  // [4H, H]
  Param<Real>* b_ih = nullptr;  // [4H]
  Param<Real>* b_hh = nullptr;  // [4H]
  int64_t hidden = 0;

  static LstmParams create(ParamStore<Real>& ps, const std::string& prefix, int64_t in,
                           int64_t hidden, Rng& rng) {
    LstmParams l;
    l.hidden = hidden;
    l.w_ih = &ps.create_xavier(prefix + "/w_ih", {4 * hidden, in}, rng);
    l.w_hh = &ps.create_xavier(prefix + "/w_hh", {4 * hidden, hidden}, rng);
    l.b_ih = &ps.create(prefix + "/b_ih", {4 * hidden});
    l.b_hh = &ps.create(prefix + "/b_hh", {4 * hidden});
    // Forget gate bias starts at 1 so early training does not wipe the cell.
    for (int64_t i = hidden; i < 2 * hidden; ++i) l.b_ih->value.data[static_cast<size_t>(i)] = Real(1);
    return l;
  }
};

// One LSTM step with gate order (input, forget, cell, output).
template <typename Real>
std::pair<Var, Var> lstm_cell(Tape<Real>& t, LeafCache<Real>& lf, Var x, Var h_prev, Var c_prev,
                              const LstmParams<Real>& p) {
  const int64_t H = p.hidden;
  Var gates = t.add(t.linear(x, lf(*p.w_ih), lf(*p.b_ih)),
                    t.linear(h_prev, lf(*p.w_hh), lf(*p.b_hh)));
  Var i = t.sigmoid(t.slice_cols(gates, 0, H));
  Var f = t.sigmoid(t.slice_cols(gates, H, H));
  Var g = t.tanh_op(t.slice_cols(gates, 2 * H, H));
  Var o = t.sigmoid(t.slice_cols(gates, 3 * H, H));
  Var c = t.add(t.mul(f, c_prev), t.mul(i, g));
  Var h = t.mul(o, t.tanh_op(c));
  return {h, c};
}

}  // namespace crn
