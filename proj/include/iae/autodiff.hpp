#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iae/fastmath.hpp"

namespace iae::ad {

using Matrix = Eigen::MatrixXd;

/// Tensor operations supported by the graph. Every op has a vector-Jacobian
/// rule expressed in terms of the same op set, so adjoints are ordinary graph
/// nodes and the backward pass can itself be differentiated (the double
/// backprop needed by the gradient penalty).
enum class Op : std::uint8_t {
  kInput,
  kConstant,
  kAdd,
  kSub,
  kMul,       // elementwise
  kScale,     // multiply by compile-time scalar
  kMatMul,
  kTranspose,
  kTanh,
  kSquare,
  kSqrt,
  kRecip,
  kAddCol,    // matrix + column vector broadcast over columns
  kColSum,    // (r x c) -> (1 x c)
  kRowSum,    // (r x c) -> (r x 1)
  kRowRep,    // (1 x c) -> (r x c)
  kColRep,    // (r x 1) -> (r x c)
  kBcast,     // (1 x 1) -> (r x c)
  kReshape,
  kUnfold,    // per-column sliding windows, newest-first layout
  kFold,      // adjoint of kUnfold (scatter-add)
  kSum,       // (r x c) -> (1 x 1)
  kMean,      // (r x c) -> (1 x 1)
};

struct NodeRef {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// A computation graph over double matrices. Nodes are appended in evaluation
/// order (creation order is a topological order) and evaluated eagerly, so a
/// node's value is available immediately after construction. forward() can
/// re-evaluate the whole graph after rebinding inputs.
class Graph {
 public:
  Graph() { nodes_.reserve(256); }

  // ---- leaves ----

  /// Bound input leaf. Set requires_grad to make it a differentiation target.
  NodeRef input(Matrix value, bool requires_grad = false) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(value);
    n.rg = requires_grad;
    return push(std::move(n));
  }

  /// Unbound input leaf; must be bound via set_value before forward().
  NodeRef input(int rows, int cols, bool requires_grad = false) {
    Node n;
    n.op = Op::kInput;
    n.p0 = rows;
    n.p1 = cols;
    n.rg = requires_grad;
    return push(std::move(n));
  }

  NodeRef constant(Matrix value) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(value);
    return push(std::move(n));
  }

  NodeRef constant(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // ---- primitive ops ----

  NodeRef add(NodeRef a, NodeRef b) {
    require_same_shape(a, b, "add");
    return op2(Op::kAdd, a, b);
  }
  NodeRef sub(NodeRef a, NodeRef b) {
    require_same_shape(a, b, "sub");
    return op2(Op::kSub, a, b);
  }
  NodeRef mul(NodeRef a, NodeRef b) {
    require_same_shape(a, b, "mul");
    return op2(Op::kMul, a, b);
  }
  NodeRef scale(NodeRef a, double k) {
    Node n;
    n.op = Op::kScale;
    n.a = a.idx;
    n.k = k;
    return push(std::move(n));
  }
  NodeRef matmul(NodeRef a, NodeRef b) {
    if (at(a).value.cols() != at(b).value.rows()) {
      throw std::invalid_argument("matmul: inner dimensions differ");
    }
    return op2(Op::kMatMul, a, b);
  }
  NodeRef transpose(NodeRef a) { return op1(Op::kTranspose, a); }
  NodeRef tanh(NodeRef a) { return op1(Op::kTanh, a); }
  NodeRef square(NodeRef a) { return op1(Op::kSquare, a); }
  NodeRef sqrt(NodeRef a) { return op1(Op::kSqrt, a); }
  NodeRef recip(NodeRef a) { return op1(Op::kRecip, a); }

  NodeRef add_col(NodeRef m, NodeRef col) {
    if (at(col).value.cols() != 1 || at(m).value.rows() != at(col).value.rows()) {
      throw std::invalid_argument("add_col: bias must be a column matching rows");
    }
    return op2(Op::kAddCol, m, col);
  }

  NodeRef col_sum(NodeRef a) { return op1(Op::kColSum, a); }
  NodeRef row_sum(NodeRef a) { return op1(Op::kRowSum, a); }

  NodeRef row_rep(NodeRef v, int rows) {
    if (at(v).value.rows() != 1) throw std::invalid_argument("row_rep: expects a row vector");
    Node n;
    n.op = Op::kRowRep;
    n.a = v.idx;
    n.p0 = rows;
    return push(std::move(n));
  }
  NodeRef col_rep(NodeRef v, int cols) {
    if (at(v).value.cols() != 1) throw std::invalid_argument("col_rep: expects a column vector");
    Node n;
    n.op = Op::kColRep;
    n.a = v.idx;
    n.p0 = cols;
    return push(std::move(n));
  }
  NodeRef bcast(NodeRef s, int rows, int cols) {
    if (at(s).value.size() != 1) throw std::invalid_argument("bcast: expects a scalar node");
    Node n;
    n.op = Op::kBcast;
    n.a = s.idx;
    n.p0 = rows;
    n.p1 = cols;
    return push(std::move(n));
  }

  NodeRef reshape(NodeRef a, int rows, int cols) {
    if (at(a).value.size() != static_cast<long>(rows) * cols) {
      throw std::invalid_argument("reshape: element count differs");
    }
    Node n;
    n.op = Op::kReshape;
    n.a = a.idx;
    n.p0 = rows;
    n.p1 = cols;
    return push(std::move(n));
  }

  /// Per-column sliding windows. For input (r x c) and window w, emits a
  /// (w x (r-w+1)*c) matrix whose blocks of (r-w+1) consecutive columns are
  /// the windows of one input column, shifted top to bottom.
  NodeRef unfold(NodeRef a, int window) {
    if (window < 1 || window > at(a).value.rows()) {
      throw std::invalid_argument("unfold: window outside [1, rows]");
    }
    Node n;
    n.op = Op::kUnfold;
    n.a = a.idx;
    n.p0 = window;
    return push(std::move(n));
  }

  // ---- reductions ----

  NodeRef sum(NodeRef a) { return op1(Op::kSum, a); }
  NodeRef mean(NodeRef a) { return op1(Op::kMean, a); }

  // ---- composites ----

  /// W*x + b with bias broadcast over columns.
  NodeRef affine(NodeRef W, NodeRef x, NodeRef b) { return add_col(matmul(W, x), b); }

  /// Euclidean norm of all entries, as a scalar node.
  NodeRef l2_norm(NodeRef a) { return sqrt(sum(square(a))); }

  /// Column-wise Euclidean norms as a (1 x c) node. eps is added under the
  /// square root to keep the derivative finite at zero columns.
  NodeRef col_norms(NodeRef a, double eps = 0.0) {
    NodeRef s = col_sum(square(a));
    if (eps != 0.0) {
      s = add(s, constant(Matrix::Constant(1, at(a).value.cols(), eps)));
    }
    return sqrt(s);
  }

  // ---- evaluation ----

  const Matrix& value(NodeRef r) const { return at(r).value; }
  bool requires_grad(NodeRef r) const { return at(r).rg; }
  std::size_t size() const { return nodes_.size(); }

  void set_value(NodeRef r, Matrix v) {
    Node& n = nodes_.at(static_cast<std::size_t>(r.idx));
    if (n.op != Op::kInput) throw std::invalid_argument("set_value: not an input leaf");
    if (n.p0 > 0 && (v.rows() != n.p0 || v.cols() != n.p1)) {
      throw std::invalid_argument("set_value: shape differs from declaration");
    }
    n.value = std::move(v);
  }

  /// Re-evaluates every node in creation order. Inputs must be bound.
  void forward() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) eval(i);
  }

  /// Reverse-mode differentiation of a scalar seed. Returns one adjoint node
  /// per entry of wrt (zero-valued where the leaf does not reach the seed).
  /// Adjoints are ordinary graph nodes, so they can be differentiated again.
  std::vector<NodeRef> backward(NodeRef seed, std::span<const NodeRef> wrt) {
    if (at(seed).value.size() != 1) {
      throw std::invalid_argument("backward: seed must be scalar-valued");
    }
    const int n = static_cast<int>(nodes_.size());

    // useful[i]: some wrt leaf is reachable from i following parent edges.
    std::vector<char> useful(static_cast<std::size_t>(n), 0);
    for (NodeRef w : wrt) useful[static_cast<std::size_t>(w.idx)] = 1;
    for (int i = 0; i < n; ++i) {
      const Node& nd = nodes_[static_cast<std::size_t>(i)];
      if (nd.a >= 0 && useful[static_cast<std::size_t>(nd.a)]) useful[static_cast<std::size_t>(i)] = 1;
      if (nd.b >= 0 && useful[static_cast<std::size_t>(nd.b)]) useful[static_cast<std::size_t>(i)] = 1;
    }

    // anc[i]: i is an ancestor of the seed (or the seed itself).
    std::vector<char> anc(static_cast<std::size_t>(n), 0);
    anc[static_cast<std::size_t>(seed.idx)] = 1;
    for (int i = seed.idx; i >= 0; --i) {
      if (!anc[static_cast<std::size_t>(i)]) continue;
      const Node& nd = nodes_[static_cast<std::size_t>(i)];
      if (nd.a >= 0) anc[static_cast<std::size_t>(nd.a)] = 1;
      if (nd.b >= 0) anc[static_cast<std::size_t>(nd.b)] = 1;
    }

    std::vector<int> adj(static_cast<std::size_t>(n), -1);
    adj[static_cast<std::size_t>(seed.idx)] = constant(1.0).idx;

    for (int i = seed.idx; i >= 0; --i) {
      if (!anc[static_cast<std::size_t>(i)] || adj[static_cast<std::size_t>(i)] < 0) continue;
      if (!useful[static_cast<std::size_t>(i)]) continue;
      propagate(i, NodeRef{adj[static_cast<std::size_t>(i)]}, useful, adj);
    }

    std::vector<NodeRef> out;
    out.reserve(wrt.size());
    for (NodeRef w : wrt) {
      const int a = adj[static_cast<std::size_t>(w.idx)];
      if (a >= 0) {
        out.push_back(NodeRef{a});
      } else {
        out.push_back(constant(Matrix::Zero(at(w).value.rows(), at(w).value.cols())));
      }
    }
    return out;
  }

  /// Convenience wrapper collecting adjoint values.
  std::vector<Matrix> gradients(NodeRef seed, std::span<const NodeRef> wrt) {
    std::vector<NodeRef> refs = backward(seed, wrt);
    std::vector<Matrix> out;
    out.reserve(refs.size());
    for (NodeRef r : refs) out.push_back(at(r).value);
    return out;
  }

 private:
  struct Node {
    Op op = Op::kConstant;
    int a = -1, b = -1;  // parents
    Matrix value;
    double k = 0.0;      // scalar for kScale
    int p0 = 0, p1 = 0;  // shape/window parameters
    bool rg = false;     // some grad-enabled leaf is reachable from here
  };

  std::vector<Node> nodes_;

  const Node& at(NodeRef r) const { return nodes_.at(static_cast<std::size_t>(r.idx)); }

  NodeRef push(Node n) {
    if (n.op != Op::kInput && n.op != Op::kConstant) {
      if (n.a >= 0 && nodes_[static_cast<std::size_t>(n.a)].rg) n.rg = true;
      if (n.b >= 0 && nodes_[static_cast<std::size_t>(n.b)].rg) n.rg = true;
    }
    // An input declared by shape stays unbound until set_value + forward.
    const bool deferred = n.op == Op::kInput && n.value.size() == 0;
    nodes_.push_back(std::move(n));
    const int idx = static_cast<int>(nodes_.size()) - 1;
    if (!deferred) eval(static_cast<std::size_t>(idx));
    return NodeRef{idx};
  }

  NodeRef op1(Op op, NodeRef a) {
    Node n;
    n.op = op;
    n.a = a.idx;
    return push(std::move(n));
  }
  NodeRef op2(Op op, NodeRef a, NodeRef b) {
    Node n;
    n.op = op;
    n.a = a.idx;
    n.b = b.idx;
    return push(std::move(n));
  }

  void require_same_shape(NodeRef a, NodeRef b, const char* what) const {
    const Matrix& x = at(a).value;
    const Matrix& y = at(b).value;
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
  }

  void eval(std::size_t i) {
    Node& n = nodes_[i];
    const auto A = [&]() -> const Matrix& { return nodes_[static_cast<std::size_t>(n.a)].value; };
    const auto B = [&]() -> const Matrix& { return nodes_[static_cast<std::size_t>(n.b)].value; };
    switch (n.op) {
      case Op::kInput:
        if (n.value.size() == 0) throw std::logic_error("forward: unbound input leaf");
        break;
      case Op::kConstant:
        break;
      case Op::kAdd: n.value = A() + B(); break;
      case Op::kSub: n.value = A() - B(); break;
      case Op::kMul: n.value = A().cwiseProduct(B()); break;
      case Op::kScale: n.value = A() * n.k; break;
      case Op::kMatMul: n.value.noalias() = A() * B(); break;
      case Op::kTranspose: n.value = A().transpose(); break;
      case Op::kTanh: n.value = fastmath::tanh_of(A()); break;
      case Op::kSquare: n.value = A().array().square(); break;
      case Op::kSqrt: n.value = A().array().sqrt(); break;
      case Op::kRecip: n.value = A().array().inverse(); break;
      case Op::kAddCol:
        n.value = A();
        n.value.colwise() += Eigen::VectorXd::ConstMapType(B().data(), B().rows());
        break;
      case Op::kColSum: n.value = A().colwise().sum(); break;
      case Op::kRowSum: n.value = A().rowwise().sum(); break;
      case Op::kRowRep: n.value = A().replicate(n.p0, 1); break;
      case Op::kColRep: n.value = A().replicate(1, n.p0); break;
      case Op::kBcast: n.value = Matrix::Constant(n.p0, n.p1, A()(0, 0)); break;
      case Op::kReshape: {
        const Matrix& src = A();
        n.value = Eigen::Map<const Matrix>(src.data(), n.p0, n.p1);
        break;
      }
      case Op::kUnfold: {
        const Matrix& src = A();
        const int w = n.p0;
        const long r = src.rows(), c = src.cols();
        const long per = r - w + 1;
        n.value.resize(w, per * c);
        for (long j = 0; j < c; ++j) {
          for (long s = 0; s < per; ++s) {
            n.value.col(j * per + s) = src.col(j).segment(s, w);
          }
        }
        break;
      }
      case Op::kFold: {
        const Matrix& src = A();
        const int w = n.p0;
        const long r = n.p1;
        const long per = r - w + 1;
        const long c = src.cols() / per;
        n.value = Matrix::Zero(r, c);
        for (long j = 0; j < c; ++j) {
          for (long s = 0; s < per; ++s) {
            n.value.col(j).segment(s, w) += src.col(j * per + s);
          }
        }
        break;
      }
      case Op::kSum: n.value = Matrix::Constant(1, 1, A().sum()); break;
      case Op::kMean: n.value = Matrix::Constant(1, 1, A().mean()); break;
    }
  }

  NodeRef fold(NodeRef a, int window, int out_rows) {
    Node n;
    n.op = Op::kFold;
    n.a = a.idx;
    n.p0 = window;
    n.p1 = out_rows;
    return push(std::move(n));
  }

  void accumulate(std::vector<int>& adj, int target, NodeRef contribution) {
    int& slot = adj[static_cast<std::size_t>(target)];
    slot = (slot < 0) ? contribution.idx : add(NodeRef{slot}, contribution).idx;
  }

  /// Emits adjoint contributions of node i to its parents, as graph nodes.
  void propagate(int i, NodeRef g, const std::vector<char>& useful, std::vector<int>& adj) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const NodeRef self{i};
    const NodeRef pa{n.a}, pb{n.b};
    const bool ua = n.a >= 0 && useful[static_cast<std::size_t>(n.a)];
    const bool ub = n.b >= 0 && useful[static_cast<std::size_t>(n.b)];
    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kAdd:
        if (ua) accumulate(adj, n.a, g);
        if (ub) accumulate(adj, n.b, g);
        break;
      case Op::kSub:
        if (ua) accumulate(adj, n.a, g);
        if (ub) accumulate(adj, n.b, scale(g, -1.0));
        break;
      case Op::kMul:
        if (ua) accumulate(adj, n.a, mul(g, pb));
        if (ub) accumulate(adj, n.b, mul(g, pa));
        break;
      case Op::kScale:
        if (ua) accumulate(adj, n.a, scale(g, n.k));
        break;
      case Op::kMatMul:
        if (ua) accumulate(adj, n.a, matmul(g, transpose(pb)));
        if (ub) accumulate(adj, n.b, matmul(transpose(pa), g));
        break;
      case Op::kTranspose:
        if (ua) accumulate(adj, n.a, transpose(g));
        break;
      case Op::kTanh:
        if (ua) {
          NodeRef one = constant(Matrix::Ones(n.value.rows(), n.value.cols()));
          accumulate(adj, n.a, mul(g, sub(one, square(self))));
        }
        break;
      case Op::kSquare:
        if (ua) accumulate(adj, n.a, scale(mul(g, pa), 2.0));
        break;
      case Op::kSqrt:
        if (ua) accumulate(adj, n.a, mul(g, scale(recip(self), 0.5)));
        break;
      case Op::kRecip:
        if (ua) accumulate(adj, n.a, scale(mul(g, square(self)), -1.0));
        break;
      case Op::kAddCol:
        if (ua) accumulate(adj, n.a, g);
        if (ub) accumulate(adj, n.b, row_sum(g));
        break;
      case Op::kColSum:
        if (ua) accumulate(adj, n.a, row_rep(g, static_cast<int>(nodes_[static_cast<std::size_t>(n.a)].value.rows())));
        break;
      case Op::kRowSum:
        if (ua) accumulate(adj, n.a, col_rep(g, static_cast<int>(nodes_[static_cast<std::size_t>(n.a)].value.cols())));
        break;
      case Op::kRowRep:
        if (ua) accumulate(adj, n.a, col_sum(g));
        break;
      case Op::kColRep:
        if (ua) accumulate(adj, n.a, row_sum(g));
        break;
      case Op::kBcast:
        if (ua) accumulate(adj, n.a, sum(g));
        break;
      case Op::kReshape:
        if (ua) {
          const Matrix& src = nodes_[static_cast<std::size_t>(n.a)].value;
          accumulate(adj, n.a, reshape(g, static_cast<int>(src.rows()), static_cast<int>(src.cols())));
        }
        break;
      case Op::kUnfold:
        if (ua) {
          const Matrix& src = nodes_[static_cast<std::size_t>(n.a)].value;
          accumulate(adj, n.a, fold(g, n.p0, static_cast<int>(src.rows())));
        }
        break;
      case Op::kFold:
        if (ua) accumulate(adj, n.a, unfold(g, n.p0));
        break;
      case Op::kSum:
        if (ua) {
          const Matrix& src = nodes_[static_cast<std::size_t>(n.a)].value;
          accumulate(adj, n.a, bcast(g, static_cast<int>(src.rows()), static_cast<int>(src.cols())));
        }
        break;
      case Op::kMean:
        if (ua) {
          const Matrix& src = nodes_[static_cast<std::size_t>(n.a)].value;
          accumulate(adj, n.a,
                     scale(bcast(g, static_cast<int>(src.rows()), static_cast<int>(src.cols())),
                           1.0 / static_cast<double>(src.size())));
        }
        break;
    }
  }
};

/// Builds the gradient-penalty node (||grad_point D(point)||_2 - 1)^2 where
/// the gradient is taken with respect to the discriminator INPUT at `point`.
/// The returned node stays differentiable with respect to any parameters used
/// inside `apply` (double backprop through the adjoint nodes).
inline NodeRef grad_penalty(Graph& g,
                            const std::function<NodeRef(Graph&, NodeRef)>& apply,
                            Matrix point) {
  NodeRef pt = g.input(std::move(point), /*requires_grad=*/true);
  NodeRef out = apply(g, pt);
  if (g.value(out).size() != 1) {
    throw std::invalid_argument("grad_penalty: discriminator output must be scalar");
  }
  const NodeRef wrt[] = {pt};
  NodeRef gin = g.backward(out, wrt)[0];
  return g.square(g.sub(g.l2_norm(gin), g.constant(1.0)));
}

}  // namespace iae::ad
