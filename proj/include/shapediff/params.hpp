//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_PARAMS_HPP_
#define SHAPEDIFF_PARAMS_HPP_

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

#include <Eigen/Core>

#include "shapediff/autodiff.hpp"
#include "shapediff/rng.hpp"

namespace shapediff {

/// Named parameter tensors plus gradient accumulation. The map is ordered so
/// every traversal (updates, serialization, gradient reductions) is
/// deterministic.
template <class S>
struct ParamStore {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  std::map<std::string, Mat> tensors;

  Mat& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }
  const Mat& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }

  /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  void init_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                    Eigen::Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r)
        m(r, c) = static_cast<S>((2.0 * rng.uniform() - 1.0) * bound);
    tensors[name] = std::move(m);
  }

  void init_zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    tensors[name] = Mat::Zero(rows, cols);
  }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& [k, v] : tensors) n += v.size();
    return n;
  }

  template <class S2>
  ParamStore<S2> cast() const {
    ParamStore<S2> out;
    for (const auto& [k, v] : tensors) out.tensors[k] = v.template cast<S2>();
    return out;
  }
};

template <class S>
using GradMap = std::map<std::string, Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>>;

/// Per-forward context: owns the tape and caches one leaf per parameter so a
/// tensor used by several layers accumulates a single gradient.
template <class S>
struct Ctx {
  ad::Tape<S> tape;
  ParamStore<S>* params = nullptr;
  std::unordered_map<std::string, ad::Var<S>> leaves;

  explicit Ctx(ParamStore<S>& p) : params(&p) { tape.reserve(1024); }

  ad::Var<S> param(const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    ad::Var<S> v = ad::leaf(tape, params->at(name));
    leaves.emplace(name, v);
    return v;
  }

  ad::Var<S> constant(typename ad::Tape<S>::Mat m) { return ad::constant(tape, std::move(m)); }

  void backward(ad::Var<S> root, S seed = S(1)) { tape.backward(root.id, seed); }

  /// Adds this tape's parameter gradients into `out` (missing grads skipped).
  void accumulate_grads(GradMap<S>& out) const {
    for (const auto& [name, var] : leaves) {
      if (!tape.has_grad(var.id)) continue;
      auto it = out.find(name);
      if (it == out.end()) out.emplace(name, tape.grad(var.id));
      else it->second += tape.grad(var.id);
    }
  }
};

/// Adam with decoupled step count; moment tensors live beside the parameters
/// so checkpoints capture the full optimizer state.
template <class S>
struct Adam {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  double beta1 = 0.950;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Mat> m, v;

  void update(ParamStore<S>& params, const GradMap<S>& grads, double lr) {
    ++step;
    const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
    const S corr1 = static_cast<S>(1.0 - std::pow(beta1, step));
    const S corr2 = static_cast<S>(1.0 - std::pow(beta2, step));
    for (auto& [name, p] : params.tensors) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Mat& g = git->second;
      Mat& mm = m.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
      Mat& vv = v.try_emplace(name, Mat::Zero(p.rows(), p.cols())).first->second;
      mm = b1 * mm + (S(1) - b1) * g;
      vv = b2 * vv + (S(1) - b2) * g.cwiseProduct(g).eval();
      p.array() -= static_cast<S>(lr) * (mm.array() / corr1) /
                   ((vv.array() / corr2).sqrt() + static_cast<S>(eps));
    }
  }
};

}  // namespace shapediff

#endif  // SHAPEDIFF_PARAMS_HPP_
