//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_AUTODIFF_HPP_
#define SHAPEDIFF_AUTODIFF_HPP_

#include <cmath>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace shapediff::ad {

/// Reverse-mode tape over dense Eigen matrices, templated on the scalar so the
/// same network code runs in f32 for training and in f64 for the oracle,
/// equivariance and finite-difference suites.
template <class S>
class Tape {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using BackFn = std::function<void(Tape&, const Mat&)>;

  struct Node {
    Mat val;
    Mat grad;  // allocated lazily during backward
    BackFn back;  // empty for leaves/constants
  };

  int push(Mat val, BackFn back = {}) {
    nodes_.push_back(Node{std::move(val), Mat(), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_back(int id, BackFn back) { nodes_[id].back = std::move(back); }

  const Mat& val(int id) const { return nodes_[id].val; }

  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds the (1x1) root with `seed` and propagates in reverse order.
  void backward(int root, S seed = S(1)) {
    if (nodes_[root].val.size() != 1)
      throw std::logic_error("backward root must be a 1x1 scalar");
    accumulate(root, Mat::Constant(1, 1, seed));
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.back) continue;
      n.back(*this, n.grad);
    }
  }

  const Mat& grad(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  void reserve(std::size_t n) { nodes_.reserve(n); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const typename Tape<S>::Mat& val() const { return tape->val(id); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

namespace detail {
template <class S>
Var<S> make(Tape<S>& t, typename Tape<S>::Mat val, typename Tape<S>::BackFn back) {
  return Var<S>{&t, t.push(std::move(val), std::move(back))};
}
}  // namespace detail

template <class S>
Var<S> constant(Tape<S>& t, typename Tape<S>::Mat m) {
  return detail::make<S>(t, std::move(m), {});
}

/// Same as constant, but named for readability where gradients are read back.
template <class S>
Var<S> leaf(Tape<S>& t, typename Tape<S>::Mat m) {
  return detail::make<S>(t, std::move(m), {});
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val() + b.val()), [a, b](Tape<S>& t, const Mat& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val() - b.val()), [a, b](Tape<S>& t, const Mat& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, Mat(-g));
  });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(c * a.val()),
                         [a, c](Tape<S>& t, const Mat& g) { t.accumulate(a.id, Mat(c * g)); });
}

template <class S>
Var<S> add_scalar(Var<S> a, S c) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().array() + c),
                         [a](Tape<S>& t, const Mat& g) { t.accumulate(a.id, g); });
}

/// Elementwise product.
template <class S>
Var<S> cmul(Var<S> a, Var<S> b) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().cwiseProduct(b.val())),
                         [a, b](Tape<S>& t, const Mat& g) {
                           t.accumulate(a.id, Mat(g.cwiseProduct(t.val(b.id))));
                           t.accumulate(b.id, Mat(g.cwiseProduct(t.val(a.id))));
                         });
}

/// Matrix product with optional transposes: op(A) * op(B).
template <class S>
Var<S> matmul(Var<S> a, Var<S> b, bool ta = false, bool tb = false) {
  using Mat = typename Tape<S>::Mat;
  Mat val;
  if (!ta && !tb) val = a.val() * b.val();
  else if (!ta && tb) val = a.val() * b.val().transpose();
  else if (ta && !tb) val = a.val().transpose() * b.val();
  else val = a.val().transpose() * b.val().transpose();
  return detail::make<S>(*a.tape, std::move(val), [a, b, ta, tb](Tape<S>& t, const Mat& g) {
    const Mat& A = t.val(a.id);
    const Mat& B = t.val(b.id);
    if (!ta && !tb) {
      t.accumulate(a.id, Mat(g * B.transpose()));
      t.accumulate(b.id, Mat(A.transpose() * g));
    } else if (!ta && tb) {
      t.accumulate(a.id, Mat(g * B));
      t.accumulate(b.id, Mat(g.transpose() * A));
    } else if (ta && !tb) {
      t.accumulate(a.id, Mat(B * g.transpose()));
      t.accumulate(b.id, Mat(A * g));
    } else {
      t.accumulate(a.id, Mat((g * B).transpose()));
      t.accumulate(b.id, Mat((A * g).transpose()));
    }
  });
}

/// Broadcast-adds a 1 x m row to every row of a.
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> r) {
  using Mat = typename Tape<S>::Mat;
  Mat v = a.val();
  v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(r.val().row(0));
  return detail::make<S>(*a.tape, std::move(v), [a, r](Tape<S>& t, const Mat& g) {
    t.accumulate(a.id, g);
    t.accumulate(r.id, Mat(g.colwise().sum()));
  });
}

template <class S>
Var<S> leaky_relu(Var<S> a, S slope) {
  using Mat = typename Tape<S>::Mat;
  Mat v = a.val().unaryExpr([slope](S x) { return x >= S(0) ? x : slope * x; });
  return detail::make<S>(*a.tape, std::move(v), [a, slope](Tape<S>& t, const Mat& g) {
    const Mat& x = t.val(a.id);
    Mat gx = g;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (x(i, j) < S(0)) gx(i, j) *= slope;
    t.accumulate(a.id, gx);
  });
}

template <class S>
Var<S> gather_rows(Var<S> a, std::vector<int> idx) {
  using Mat = typename Tape<S>::Mat;
  Mat v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    v.row(static_cast<Eigen::Index>(i)) = a.val().row(idx[i]);
  const Eigen::Index src_rows = a.rows();
  return detail::make<S>(*a.tape, std::move(v),
                         [a, idx = std::move(idx), src_rows](Tape<S>& t, const Mat& g) {
                           Mat gx = Mat::Zero(src_rows, g.cols());
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                           t.accumulate(a.id, gx);
                         });
}

/// Sums consecutive groups of `group` rows; rows must divide evenly.
template <class S>
Var<S> segment_sum(Var<S> a, int group) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index n_out = a.rows() / group;
  Mat v = Mat::Zero(n_out, a.cols());
  for (Eigen::Index s = 0; s < n_out; ++s)
    for (int r = 0; r < group; ++r) v.row(s) += a.val().row(s * group + r);
  return detail::make<S>(*a.tape, std::move(v), [a, group](Tape<S>& t, const Mat& g) {
    Mat gx(g.rows() * group, g.cols());
    for (Eigen::Index s = 0; s < g.rows(); ++s)
      for (int r = 0; r < group; ++r) gx.row(s * group + r) = g.row(s);
    t.accumulate(a.id, gx);
  });
}

/// Softmax over each consecutive group of `group` rows, independently per
/// column. Used for attention weights over fixed-size neighbor lists.
template <class S>
Var<S> softmax_grouped(Var<S> a, int group) {
  using Mat = typename Tape<S>::Mat;
  Tape<S>& t = *a.tape;
  Mat v = a.val();
  const Eigen::Index n_seg = v.rows() / group;
  for (Eigen::Index s = 0; s < n_seg; ++s) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      auto col = v.block(s * group, j, group, 1);
      const S m = col.maxCoeff();
      col = (col.array() - m).exp();
      col /= col.sum();
    }
  }
  Var<S> out = detail::make<S>(t, std::move(v), {});
  t.set_back(out.id, [a, self = out.id, group](Tape<S>& tp, const Mat& g) {
    const Mat& y = tp.val(self);
    Mat gx(y.rows(), y.cols());
    const Eigen::Index n_seg = y.rows() / group;
    for (Eigen::Index s = 0; s < n_seg; ++s) {
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        auto yv = y.block(s * group, j, group, 1);
        auto gv = g.block(s * group, j, group, 1);
        const S dot = (yv.array() * gv.array()).sum();
        gx.block(s * group, j, group, 1) = yv.array() * (gv.array() - dot);
      }
    }
    tp.accumulate(a.id, gx);
  });
  return out;
}

/// Row-wise softmax (across columns).
template <class S>
Var<S> softmax_rows(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  Tape<S>& t = *a.tape;
  Mat v = a.val();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    auto row = v.row(i);
    const S m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
  Var<S> out = detail::make<S>(t, std::move(v), {});
  t.set_back(out.id, [a, self = out.id](Tape<S>& tp, const Mat& g) {
    const Mat& y = tp.val(self);
    Mat gx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const S dot = (y.row(i).array() * g.row(i).array()).sum();
      gx.row(i) = y.row(i).array() * (g.row(i).array() - dot);
    }
    tp.accumulate(a.id, gx);
  });
  return out;
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  using Mat = typename Tape<S>::Mat;
  Tape<S>& t = *parts.front().tape;
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Mat v(parts.front().rows(), cols);
  Eigen::Index at = 0;
  std::vector<std::pair<int, Eigen::Index>> layout;
  layout.reserve(parts.size());
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.val();
    layout.emplace_back(p.id, p.cols());
    at += p.cols();
  }
  return detail::make<S>(t, std::move(v), [layout = std::move(layout)](Tape<S>& t, const Mat& g) {
    Eigen::Index at = 0;
    for (const auto& [id, w] : layout) {
      t.accumulate(id, Mat(g.middleCols(at, w)));
      at += w;
    }
  });
}

template <class S>
Var<S> concat_cols(std::initializer_list<Var<S>> parts) {
  return concat_cols(std::vector<Var<S>>(parts));
}

template <class S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index len) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index total = a.cols();
  return detail::make<S>(*a.tape, Mat(a.val().middleCols(start, len)),
                         [a, start, len, total](Tape<S>& t, const Mat& g) {
                           Mat gx = Mat::Zero(g.rows(), total);
                           gx.middleCols(start, len) = g;
                           t.accumulate(a.id, gx);
                         });
}

template <class S>
Var<S> sum_all(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index r = a.rows(), c = a.cols();
  return detail::make<S>(*a.tape, Mat(Mat::Constant(1, 1, a.val().sum())),
                         [a, r, c](Tape<S>& t, const Mat& g) {
                           t.accumulate(a.id, Mat(Mat::Constant(r, c, g(0, 0))));
                         });
}

/// Column-wise mean, producing a 1 x m row.
template <class S>
Var<S> mean_rows(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index n = a.rows();
  return detail::make<S>(*a.tape, Mat(a.val().colwise().mean()),
                         [a, n](Tape<S>& t, const Mat& g) {
                           Mat gx(n, g.cols());
                           gx.rowwise() = Eigen::Matrix<S, 1, Eigen::Dynamic>(g.row(0) / S(n));
                           t.accumulate(a.id, gx);
                         });
}

/// Repeats a 1 x m row n times.
template <class S>
Var<S> repeat_rows(Var<S> a, Eigen::Index n) {
  using Mat = typename Tape<S>::Mat;
  Mat v(n, a.cols());
  v.rowwise() = Eigen::Matrix<S, 1, Eigen::Dynamic>(a.val().row(0));
  return detail::make<S>(*a.tape, std::move(v), [a](Tape<S>& t, const Mat& g) {
    t.accumulate(a.id, Mat(g.colwise().sum()));
  });
}

template <class S>
Var<S> rowwise_dot(Var<S> a, Var<S> b) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().cwiseProduct(b.val()).rowwise().sum()),
                         [a, b](Tape<S>& t, const Mat& g) {
                           const Mat& A = t.val(a.id);
                           const Mat& B = t.val(b.id);
                           t.accumulate(a.id, Mat(B.array().colwise() * g.col(0).array()));
                           t.accumulate(b.id, Mat(A.array().colwise() * g.col(0).array()));
                         });
}

template <class S>
Var<S> rowwise_sqnorm(Var<S> a) {
  return rowwise_dot(a, a);
}

template <class S>
Var<S> cwise_sqrt(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  Tape<S>& t = *a.tape;
  Var<S> out = detail::make<S>(t, Mat(a.val().array().sqrt()), {});
  t.set_back(out.id, [a, self = out.id](Tape<S>& tp, const Mat& g) {
    tp.accumulate(a.id, Mat(g.array() / (S(2) * tp.val(self).array())));
  });
  return out;
}

template <class S>
Var<S> cwise_exp(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  Tape<S>& t = *a.tape;
  Var<S> out = detail::make<S>(t, Mat(a.val().array().exp()), {});
  t.set_back(out.id, [a, self = out.id](Tape<S>& tp, const Mat& g) {
    tp.accumulate(a.id, Mat(g.array() * tp.val(self).array()));
  });
  return out;
}

template <class S>
Var<S> cwise_log(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().array().log()),
                         [a](Tape<S>& t, const Mat& g) {
                           t.accumulate(a.id, Mat(g.array() / t.val(a.id).array()));
                         });
}

template <class S>
Var<S> cwise_recip(Var<S> a) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().array().inverse()),
                         [a](Tape<S>& t, const Mat& g) {
                           const Mat& x = t.val(a.id);
                           t.accumulate(a.id, Mat(-g.array() / (x.array() * x.array())));
                         });
}

/// max(a, c) elementwise; gradient passes only where a > c.
template <class S>
Var<S> clamp_min(Var<S> a, S c) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().cwiseMax(c)),
                         [a, c](Tape<S>& t, const Mat& g) {
                           const Mat& x = t.val(a.id);
                           Mat gx = g;
                           for (Eigen::Index j = 0; j < x.cols(); ++j)
                             for (Eigen::Index i = 0; i < x.rows(); ++i)
                               if (x(i, j) <= c) gx(i, j) = S(0);
                           t.accumulate(a.id, gx);
                         });
}

/// Scales row i of a by s(i, 0).
template <class S>
Var<S> scale_rows(Var<S> a, Var<S> s) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(a.val().array().colwise() * s.val().col(0).array()),
                         [a, s](Tape<S>& t, const Mat& g) {
                           const Mat& A = t.val(a.id);
                           const Mat& sv = t.val(s.id);
                           t.accumulate(a.id, Mat(g.array().colwise() * sv.col(0).array()));
                           t.accumulate(s.id, Mat(g.cwiseProduct(A).rowwise().sum()));
                         });
}

/// Scales every entry by a 1x1 variable.
template <class S>
Var<S> scale_by(Var<S> a, Var<S> s) {
  using Mat = typename Tape<S>::Mat;
  return detail::make<S>(*a.tape, Mat(s.val()(0, 0) * a.val()),
                         [a, s](Tape<S>& t, const Mat& g) {
                           t.accumulate(a.id, Mat(t.val(s.id)(0, 0) * g));
                           t.accumulate(s.id, Mat(Mat::Constant(1, 1, g.cwiseProduct(t.val(a.id)).sum())));
                         });
}

/// Column-major reshape (storage order preserved).
template <class S>
Var<S> reshape(Var<S> a, Eigen::Index r, Eigen::Index c) {
  using Mat = typename Tape<S>::Mat;
  Mat v = a.val();
  v.resize(r, c);
  const Eigen::Index ar = a.rows(), ac = a.cols();
  return detail::make<S>(*a.tape, std::move(v), [a, ar, ac](Tape<S>& t, const Mat& g) {
    Mat gx = g;
    gx.resize(ar, ac);
    t.accumulate(a.id, gx);
  });
}

/// Per-row Kronecker product: out(i, u*q + v) = a(i, u) * b(i, v).
template <class S>
Var<S> row_kron(Var<S> a, Var<S> b) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index p = a.cols(), q = b.cols();
  Mat v(a.rows(), p * q);
  for (Eigen::Index u = 0; u < p; ++u)
    v.middleCols(u * q, q) = b.val().array().colwise() * a.val().col(u).array();
  return detail::make<S>(*a.tape, std::move(v), [a, b, p, q](Tape<S>& t, const Mat& g) {
    const Mat& A = t.val(a.id);
    const Mat& B = t.val(b.id);
    Mat ga(A.rows(), p);
    Mat gb = Mat::Zero(B.rows(), q);
    for (Eigen::Index u = 0; u < p; ++u) {
      ga.col(u) = g.middleCols(u * q, q).cwiseProduct(B).rowwise().sum();
      gb += (g.middleCols(u * q, q).array().colwise() * A.col(u).array()).matrix();
    }
    t.accumulate(a.id, ga);
    t.accumulate(b.id, gb);
  });
}

/// Mean over `blocks` consecutive column blocks of equal width.
template <class S>
Var<S> block_mean_cols(Var<S> a, int blocks) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index w = a.cols() / blocks;
  Mat v = Mat::Zero(a.rows(), w);
  for (int m = 0; m < blocks; ++m) v += a.val().middleCols(m * w, w);
  v /= S(blocks);
  return detail::make<S>(*a.tape, std::move(v), [a, blocks, w](Tape<S>& t, const Mat& g) {
    Mat gx(g.rows(), w * blocks);
    for (int m = 0; m < blocks; ++m) gx.middleCols(m * w, w) = g / S(blocks);
    t.accumulate(a.id, gx);
  });
}

/// Sum over `blocks` consecutive column blocks of equal width.
template <class S>
Var<S> block_sum_cols(Var<S> a, int blocks) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index w = a.cols() / blocks;
  Mat v = Mat::Zero(a.rows(), w);
  for (int m = 0; m < blocks; ++m) v += a.val().middleCols(m * w, w);
  return detail::make<S>(*a.tape, std::move(v), [a, blocks, w](Tape<S>& t, const Mat& g) {
    Mat gx(g.rows(), w * blocks);
    for (int m = 0; m < blocks; ++m) gx.middleCols(m * w, w) = g;
    t.accumulate(a.id, gx);
  });
}

/// Sums the columns inside each of `blocks` consecutive equal-width blocks,
/// producing one column per block: out(i, m) = sum_c a(i, m*w + c).
template <class S>
Var<S> block_inner_sum(Var<S> a, int blocks) {
  using Mat = typename Tape<S>::Mat;
  const Eigen::Index w = a.cols() / blocks;
  Mat v(a.rows(), blocks);
  for (int m = 0; m < blocks; ++m) v.col(m) = a.val().middleCols(m * w, w).rowwise().sum();
  return detail::make<S>(*a.tape, std::move(v), [a, blocks, w](Tape<S>& t, const Mat& g) {
    Mat gx(g.rows(), w * blocks);
    for (int m = 0; m < blocks; ++m)
      for (Eigen::Index c = 0; c < w; ++c) gx.col(m * w + c) = g.col(m);
    t.accumulate(a.id, gx);
  });
}

}  // namespace shapediff::ad

#endif  // SHAPEDIFF_AUTODIFF_HPP_
