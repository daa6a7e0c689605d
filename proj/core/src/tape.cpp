#include "alma/diff/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace alma::diff {

namespace {
constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

void require(bool ok, const char* msg) {
  if (!ok) throw ConfigError(msg);
}
}  // namespace

Var Tape::push(Matrix val) {
  nodes_.push_back(Node{std::move(val), nullptr, Matrix(), nullptr, -1});
  return Var{static_cast<std::int32_t>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
const Tape::Node& Tape::node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

const Matrix& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.view ? *n.view : n.val;
}

bool Tape::has_grad(Var v) const { return node(v).grad.size() != 0; }

void Tape::accum(Var v, const Matrix& g) {
  Node& n = node(v);
  if (n.grad.size() == 0) n.grad = Matrix::Zero(value(v).rows(), value(v).cols());
  n.grad += g;
}

Var Tape::leaf(Matrix value) { return push(std::move(value)); }

Var Tape::param(const std::string& name) {
  // Referenced, not copied. Callers must not mutate a parameter between
  // creating its leaf and the last read of the tape (the Pop-Art head rescale
  // happens before the corresponding value graph is built).
  Var v = push(Matrix());
  node(v).view = &params_->value(name).mat();
  if (grad_) {
    param_leaves_.push_back(name);
    param_leaf_nodes_.push_back(v.id);
    node(v).param_leaf = static_cast<std::int32_t>(param_leaves_.size()) - 1;
  }
  return v;
}

Var Tape::matmul(Var a, Var b) {
  require(cols(a) == rows(b), "matmul: inner extents differ");
  Var out = push(value(a) * value(b));
  if (grad_)
    node(out).back = [this, a, b, out] {
      const Matrix& g = node(out).grad;
      accum(a, g * value(b).transpose());
      accum(b, value(a).transpose() * g);
    };
  return out;
}

Var Tape::add(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "add: shape mismatch");
  Var out = push(value(a) + value(b));
  if (grad_)
    node(out).back = [this, a, b, out] {
      accum(a, node(out).grad);
      accum(b, node(out).grad);
    };
  return out;
}

Var Tape::sub(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "sub: shape mismatch");
  Var out = push(value(a) - value(b));
  if (grad_)
    node(out).back = [this, a, b, out] {
      accum(a, node(out).grad);
      accum(b, -node(out).grad);
    };
  return out;
}

Var Tape::mul(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "mul: shape mismatch");
  Var out = push(value(a).cwiseProduct(value(b)));
  if (grad_)
    node(out).back = [this, a, b, out] {
      const Matrix& g = node(out).grad;
      accum(a, g.cwiseProduct(value(b)));
      accum(b, g.cwiseProduct(value(a)));
    };
  return out;
}

Var Tape::add_rowvec(Var a, Var bias) {
  require(rows(bias) == 1 && cols(bias) == cols(a), "add_rowvec: bias must be 1 x cols");
  Matrix out = value(a);
  out.rowwise() += value(bias).row(0);
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, bias, o] {
      const Matrix& g = node(o).grad;
      accum(a, g);
      accum(bias, g.colwise().sum());
    };
  return o;
}

Var Tape::scale(Var a, Scalar c) {
  Var out = push(value(a) * c);
  if (grad_)
    node(out).back = [this, a, out, c] { accum(a, node(out).grad * c); };
  return out;
}

Var Tape::relu(Var a) {
  Var out = push(value(a).cwiseMax(Scalar(0)));
  if (grad_)
    node(out).back = [this, a, out] {
      const Matrix mask = (value(a).array() > 0).cast<Scalar>().matrix();
      accum(a, node(out).grad.cwiseProduct(mask));
    };
  return out;
}

Var Tape::elu(Var a) {
  Matrix out = value(a).unaryExpr(
      [](Scalar x) { return x > 0 ? x : std::expm1(x); });
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, o] {
      // d/dx elu = 1 for x>0, exp(x) = elu(x)+1 otherwise
      const Matrix d = value(a).binaryExpr(value(o), [](Scalar x, Scalar y) {
        return x > 0 ? Scalar(1) : y + Scalar(1);
      });
      accum(a, node(o).grad.cwiseProduct(d));
    };
  return o;
}

Var Tape::abs(Var a) {
  Var out = push(value(a).cwiseAbs());
  if (grad_)
    node(out).back = [this, a, out] {
      const Matrix s = value(a).unaryExpr([](Scalar x) {
        return x > 0 ? Scalar(1) : (x < 0 ? Scalar(-1) : Scalar(0));
      });
      accum(a, node(out).grad.cwiseProduct(s));
    };
  return out;
}

Var Tape::log(Var a) {
  Var out = push(value(a).array().log().matrix());
  if (grad_)
    node(out).back = [this, a, out] {
      accum(a, node(out).grad.cwiseQuotient(value(a)));
    };
  return out;
}

Var Tape::square(Var a) {
  Var out = push(value(a).cwiseProduct(value(a)));
  if (grad_)
    node(out).back = [this, a, out] {
      accum(a, Scalar(2) * node(out).grad.cwiseProduct(value(a)));
    };
  return out;
}

Var Tape::transpose(Var a) {
  Var out = push(value(a).transpose());
  if (grad_)
    node(out).back = [this, a, out] { accum(a, node(out).grad.transpose()); };
  return out;
}

Var Tape::softmax_rows(Var logits) {
  const Matrix& x = value(logits);
  Matrix p(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    p.row(r) = (e / e.sum()).matrix();
  }
  Var out = push(std::move(p));
  if (grad_)
    node(out).back = [this, logits, out] {
      const Matrix& pr = value(out);
      const Matrix& g = node(out).grad;
      Matrix dx(pr.rows(), pr.cols());
      for (Index r = 0; r < pr.rows(); ++r) {
        const Scalar dot = g.row(r).dot(pr.row(r));
        dx.row(r) = pr.row(r).cwiseProduct(g.row(r) - Matrix::Constant(1, pr.cols(), dot));
      }
      accum(logits, dx);
    };
  return out;
}

Var Tape::softmax_rows_masked(Var logits, const AttentionMask& mask, bool* any_empty_row) {
  const Matrix& x = value(logits);
  require(mask.n_queries == x.rows() && mask.n_keys == x.cols(),
          "softmax_rows_masked: mask shape mismatch");
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    Scalar m = kNegInf;
    for (Index c = 0; c < x.cols(); ++c)
      if (mask.at(r, c) && x(r, c) > m) m = x(r, c);
    if (m == kNegInf) {
      if (any_empty_row) *any_empty_row = true;
      continue;  // fully masked row stays all-zero
    }
    Scalar z = 0;
    for (Index c = 0; c < x.cols(); ++c)
      if (mask.at(r, c)) {
        p(r, c) = std::exp(x(r, c) - m);
        z += p(r, c);
      }
    p.row(r) /= z;
  }
  Var out = push(std::move(p));
  if (grad_)
    node(out).back = [this, logits, out] {
      // Masked entries have p == 0, so the softmax Jacobian already routes
      // no gradient to them.
      const Matrix& pr = value(out);
      const Matrix& g = node(out).grad;
      Matrix dx(pr.rows(), pr.cols());
      for (Index r = 0; r < pr.rows(); ++r) {
        const Scalar dot = g.row(r).dot(pr.row(r));
        dx.row(r) = pr.row(r).cwiseProduct(g.row(r) - Matrix::Constant(1, pr.cols(), dot));
      }
      accum(logits, dx);
    };
  return out;
}

Var Tape::sum_all(Var a) {
  Var out = push(Matrix::Constant(1, 1, value(a).sum()));
  if (grad_)
    node(out).back = [this, a, out] {
      accum(a, Matrix::Constant(rows(a), cols(a), node(out).grad(0, 0)));
    };
  return out;
}

Var Tape::mean_all(Var a) {
  require(value(a).size() > 0, "mean_all: empty tensor");
  Var out = push(Matrix::Constant(1, 1, value(a).mean()));
  if (grad_)
    node(out).back = [this, a, out] {
      const Scalar g = node(out).grad(0, 0) / static_cast<Scalar>(value(a).size());
      accum(a, Matrix::Constant(rows(a), cols(a), g));
    };
  return out;
}

Var Tape::slice_rows(Var a, std::vector<Index> sel) {
  Matrix out(static_cast<Index>(sel.size()), cols(a));
  for (std::size_t i = 0; i < sel.size(); ++i) {
    require(sel[i] >= 0 && sel[i] < rows(a), "slice_rows: row out of range");
    out.row(static_cast<Index>(i)) = value(a).row(sel[i]);
  }
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, o, sel = std::move(sel)] {
      Matrix da = Matrix::Zero(rows(a), cols(a));
      const Matrix& g = node(o).grad;
      for (std::size_t i = 0; i < sel.size(); ++i)
        da.row(sel[i]) += g.row(static_cast<Index>(i));
      accum(a, da);
    };
  return o;
}

Var Tape::concat_cols(Var a, Var b) {
  require(rows(a) == rows(b), "concat_cols: row counts differ");
  Matrix out(rows(a), cols(a) + cols(b));
  out.leftCols(cols(a)) = value(a);
  out.rightCols(cols(b)) = value(b);
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, b, o] {
      const Matrix& g = node(o).grad;
      accum(a, g.leftCols(cols(a)));
      accum(b, g.rightCols(cols(b)));
    };
  return o;
}

Var Tape::concat_rows(Var a, Var b) {
  require(cols(a) == cols(b), "concat_rows: column counts differ");
  Matrix out(rows(a) + rows(b), cols(a));
  out.topRows(rows(a)) = value(a);
  out.bottomRows(rows(b)) = value(b);
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, b, o] {
      const Matrix& g = node(o).grad;
      accum(a, g.topRows(rows(a)));
      accum(b, g.bottomRows(rows(b)));
    };
  return o;
}

Var Tape::row_add(Var a, Index row, Var delta) {
  require(rows(delta) == 1 && cols(delta) == cols(a), "row_add: delta must be 1 x cols");
  require(row >= 0 && row < rows(a), "row_add: row out of range");
  Matrix out = value(a);
  out.row(row) += value(delta).row(0);
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, delta, o, row] {
      const Matrix& g = node(o).grad;
      accum(a, g);
      accum(delta, g.row(row));
    };
  return o;
}

Var Tape::gather(Var a, std::vector<std::pair<Index, Index>> elems) {
  Matrix out(static_cast<Index>(elems.size()), 1);
  for (std::size_t i = 0; i < elems.size(); ++i) {
    auto [r, c] = elems[i];
    require(r >= 0 && r < rows(a) && c >= 0 && c < cols(a), "gather: index out of range");
    out(static_cast<Index>(i), 0) = value(a)(r, c);
  }
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, o, elems = std::move(elems)] {
      Matrix da = Matrix::Zero(rows(a), cols(a));
      const Matrix& g = node(o).grad;
      for (std::size_t i = 0; i < elems.size(); ++i)
        da(elems[i].first, elems[i].second) += g(static_cast<Index>(i), 0);
      accum(a, da);
    };
  return o;
}

Var Tape::row_scale(Var a, Var s) {
  require(rows(s) == rows(a) && cols(s) == 1, "row_scale: s must be rows x 1");
  Matrix out = value(s).col(0).asDiagonal() * value(a);
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, s, o] {
      const Matrix& g = node(o).grad;
      accum(a, value(s).col(0).asDiagonal() * g);
      accum(s, g.cwiseProduct(value(a)).rowwise().sum());
    };
  return o;
}

Var Tape::segment_sum_rows(Var a, std::vector<Index> segment_of_row, Index n_segments) {
  require(static_cast<Index>(segment_of_row.size()) == rows(a),
          "segment_sum_rows: one segment per row required");
  Matrix out = Matrix::Zero(n_segments, cols(a));
  for (Index r = 0; r < rows(a); ++r) {
    require(segment_of_row[static_cast<std::size_t>(r)] >= 0 &&
                segment_of_row[static_cast<std::size_t>(r)] < n_segments,
            "segment_sum_rows: segment out of range");
    out.row(segment_of_row[static_cast<std::size_t>(r)]) += value(a).row(r);
  }
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, o, seg = std::move(segment_of_row)] {
      const Matrix& g = node(o).grad;
      Matrix da(rows(a), cols(a));
      for (Index r = 0; r < rows(a); ++r) da.row(r) = g.row(seg[static_cast<std::size_t>(r)]);
      accum(a, da);
    };
  return o;
}

Var Tape::group_mean_rows(Var a, RowGroups groups) {
  const Index n = groups.groups();
  Matrix out = Matrix::Zero(n, cols(a));
  for (Index g = 0; g < n; ++g) {
    const Index lo = groups.offsets[static_cast<std::size_t>(g)];
    const Index hi = groups.offsets[static_cast<std::size_t>(g) + 1];
    if (hi == lo) continue;  // empty group -> zero row
    for (Index i = lo; i < hi; ++i) out.row(g) += value(a).row(groups.indices[static_cast<std::size_t>(i)]);
    out.row(g) /= static_cast<Scalar>(hi - lo);
  }
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, o, groups = std::move(groups)] {
      const Matrix& g = node(o).grad;
      Matrix da = Matrix::Zero(rows(a), cols(a));
      for (Index gi = 0; gi < groups.groups(); ++gi) {
        const Index lo = groups.offsets[static_cast<std::size_t>(gi)];
        const Index hi = groups.offsets[static_cast<std::size_t>(gi) + 1];
        if (hi == lo) continue;
        const Scalar inv = Scalar(1) / static_cast<Scalar>(hi - lo);
        for (Index i = lo; i < hi; ++i)
          da.row(groups.indices[static_cast<std::size_t>(i)]) += g.row(gi) * inv;
      }
      accum(a, da);
    };
  return o;
}

Var Tape::rowwise_dot(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "rowwise_dot: shape mismatch");
  Matrix out = value(a).cwiseProduct(value(b)).rowwise().sum();
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, a, b, o] {
      const Matrix& g = node(o).grad;  // rows x 1
      accum(a, g.col(0).asDiagonal() * value(b));
      accum(b, g.col(0).asDiagonal() * value(a));
    };
  return o;
}

Var Tape::attention_core(Var q, Var k, Var v, const AttnBatch& batch, int heads,
                         bool* any_fully_masked) {
  const Index d = cols(q);
  require(heads > 0 && d % heads == 0, "attention_core: heads must divide embedding width");
  require(cols(k) == d && cols(v) == d, "attention_core: q/k/v widths differ");
  const Index dh = d / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  Matrix out = Matrix::Zero(rows(q), d);
  // Softmax weights per (instance, head), kept for the backward pass. The
  // backward needs spans but not masks: masked weights are exactly zero, so
  // the softmax Jacobian routes no gradient to them.
  struct Span {
    Index q_begin, k_begin, nq, nk;
  };
  auto weights = std::make_shared<std::vector<Matrix>>();
  auto spans = std::make_shared<std::vector<Span>>();
  weights->reserve(batch.instances.size() * static_cast<std::size_t>(heads));
  spans->reserve(batch.instances.size());

  for (const auto& inst : batch.instances) {
    const Index nq = inst.mask.n_queries;
    const Index nk = inst.mask.n_keys;
    require(inst.q_begin >= 0 && inst.q_begin + nq <= rows(q), "attention_core: q span");
    require(inst.k_begin >= 0 && inst.k_begin + nk <= rows(k), "attention_core: k span");
    if (grad_) spans->push_back({inst.q_begin, inst.k_begin, nq, nk});
    for (int h = 0; h < heads; ++h) {
      const auto qb = value(q).block(inst.q_begin, h * dh, nq, dh);
      const auto kb = value(k).block(inst.k_begin, h * dh, nk, dh);
      Matrix logits = qb * kb.transpose() * inv_sqrt;  // nq x nk
      Matrix w = Matrix::Zero(nq, nk);
      for (Index r = 0; r < nq; ++r) {
        Scalar m = kNegInf;
        for (Index c = 0; c < nk; ++c)
          if (inst.mask.at(r, c) && logits(r, c) > m) m = logits(r, c);
        if (m == kNegInf) {
          if (any_fully_masked) *any_fully_masked = true;
          continue;
        }
        Scalar z = 0;
        for (Index c = 0; c < nk; ++c)
          if (inst.mask.at(r, c)) {
            w(r, c) = std::exp(logits(r, c) - m);
            z += w(r, c);
          }
        w.row(r) /= z;
      }
      out.block(inst.q_begin, h * dh, nq, dh) = w * value(v).block(inst.k_begin, h * dh, nk, dh);
      if (grad_) weights->push_back(std::move(w));
    }
  }

  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, q, k, v, o, heads, dh, inv_sqrt, weights, spans]() {
      const Matrix& gout = node(o).grad;
      Matrix dq = Matrix::Zero(rows(q), cols(q));
      Matrix dk = Matrix::Zero(rows(k), cols(k));
      Matrix dv = Matrix::Zero(rows(v), cols(v));
      std::size_t wi = 0;
      for (const auto& sp : *spans) {
        for (int h = 0; h < heads; ++h) {
          const Matrix& w = (*weights)[wi++];
          const auto g = gout.block(sp.q_begin, h * dh, sp.nq, dh);
          const auto vb = value(v).block(sp.k_begin, h * dh, sp.nk, dh);
          const auto qb = value(q).block(sp.q_begin, h * dh, sp.nq, dh);
          const auto kb = value(k).block(sp.k_begin, h * dh, sp.nk, dh);
          dv.block(sp.k_begin, h * dh, sp.nk, dh) += w.transpose() * g;
          Matrix dw = g * vb.transpose();  // nq x nk
          // softmax backward per row; fully-masked rows have w == 0 -> no grad
          Matrix dl(sp.nq, sp.nk);
          for (Index r = 0; r < sp.nq; ++r) {
            const Scalar dot = dw.row(r).dot(w.row(r));
            dl.row(r) = w.row(r).cwiseProduct(dw.row(r) - Matrix::Constant(1, sp.nk, dot));
          }
          dq.block(sp.q_begin, h * dh, sp.nq, dh) += dl * kb * inv_sqrt;
          dk.block(sp.k_begin, h * dh, sp.nk, dh) += dl.transpose() * qb * inv_sqrt;
        }
      }
      accum(q, dq);
      accum(k, dk);
      accum(v, dv);
    };
  return o;
}

Var Tape::entropy_rows_masked(Var probs, const AttentionMask& mask) {
  const Matrix& p = value(probs);
  require(mask.n_queries == p.rows() && mask.n_keys == p.cols(),
          "entropy_rows_masked: mask shape mismatch");
  Matrix out = Matrix::Zero(p.rows(), 1);
  for (Index r = 0; r < p.rows(); ++r) {
    Scalar h = 0;
    for (Index c = 0; c < p.cols(); ++c)
      if (mask.at(r, c) && p(r, c) > 0) h -= p(r, c) * std::log(p(r, c));
    out(r, 0) = h;
  }
  Var o = push(std::move(out));
  if (grad_)
    node(o).back = [this, probs, o, mask] {
      const Matrix& p = value(probs);
      const Matrix& g = node(o).grad;  // rows x 1
      Matrix dp = Matrix::Zero(p.rows(), p.cols());
      for (Index r = 0; r < p.rows(); ++r)
        for (Index c = 0; c < p.cols(); ++c)
          if (mask.at(r, c) && p(r, c) > 0)
            dp(r, c) = -g(r, 0) * (std::log(p(r, c)) + Scalar(1));
      accum(probs, dp);
    };
  return o;
}

void Tape::backward(Var loss, ParameterGraph& into) {
  if (!grad_) throw UsageError("backward: tape was built with gradients disabled");
  if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size())
    throw UsageError("backward: invalid loss node");
  if (value(loss).rows() != 1 || value(loss).cols() != 1)
    throw UsageError("backward: loss must be a scalar (1x1)");

  node(loss).grad = Matrix::Constant(1, 1, Scalar(1));
  for (std::int32_t id = static_cast<std::int32_t>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != 0 && n.back) n.back();
  }
  for (std::size_t i = 0; i < param_leaf_nodes_.size(); ++i) {
    Node& n = nodes_[static_cast<std::size_t>(param_leaf_nodes_[i])];
    if (n.grad.size() != 0) into.grad(param_leaves_[i]).mat() += n.grad;
  }
}

}  // namespace alma::diff
