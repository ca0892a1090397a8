#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "iae/autodiff.hpp"
#include "iae/rng.hpp"

using iae::ad::Graph;
using iae::ad::Matrix;
using iae::ad::NodeRef;

namespace {

Matrix random_matrix(iae::rng::SplitMix64& gen, long rows, long cols) {
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) m(r, c) = gen.uniform(-1.0, 1.0);
  }
  return m;
}

/// Central finite differences of a scalar function of several matrices.
std::vector<Matrix> finite_diff(
    const std::function<double(const std::vector<Matrix>&)>& f,
    std::vector<Matrix> args, double h = 1e-4) {
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < args.size(); ++k) {
    Matrix g(args[k].rows(), args[k].cols());
    for (long r = 0; r < g.rows(); ++r) {
      for (long c = 0; c < g.cols(); ++c) {
        const double keep = args[k](r, c);
        args[k](r, c) = keep + h;
        const double up = f(args);
        args[k](r, c) = keep - h;
        const double down = f(args);
        args[k](r, c) = keep;
        g(r, c) = (up - down) / (2.0 * h);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double rel_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-10});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Gradient check helper: `build` must construct the same scalar from graph
/// leaves as `numeric` computes from raw matrices.
void check_gradients(const std::function<NodeRef(Graph&, const std::vector<NodeRef>&)>& build,
                     const std::function<double(const std::vector<Matrix>&)>& numeric,
                     const std::vector<Matrix>& args, double tol = 1e-5) {
  Graph g;
  std::vector<NodeRef> leaves;
  for (const Matrix& a : args) leaves.push_back(g.input(a, /*requires_grad=*/true));
  NodeRef out = build(g, leaves);
  REQUIRE(g.value(out).size() == 1);
  REQUIRE(g.value(out)(0, 0) == Catch::Approx(numeric(args)).epsilon(1e-12));
  const std::vector<Matrix> ad = g.gradients(out, leaves);
  const std::vector<Matrix> fd = finite_diff(numeric, args);
  for (std::size_t i = 0; i < args.size(); ++i) {
    INFO("argument " << i);
    CHECK(rel_error(ad[i], fd[i]) < tol);
  }
}

}  // namespace

TEST_CASE("forward evaluates basic expressions") {
  Graph g;
  SECTION("square") {
    NodeRef x = g.input(Matrix::Constant(1, 1, 3.0));
    REQUIRE(g.value(g.square(x))(0, 0) == 9.0);
  }
  SECTION("tanh at origin") {
    NodeRef x = g.input(Matrix::Zero(1, 1));
    REQUIRE(g.value(g.tanh(x))(0, 0) == 0.0);
  }
  SECTION("identity matrix product") {
    NodeRef w = g.input(Matrix::Identity(2, 2));
    Matrix xv(2, 1);
    xv << 1.0, 2.0;
    NodeRef x = g.input(xv);
    const Matrix out = g.value(g.matmul(w, x));
    REQUIRE(out(0, 0) == 1.0);
    REQUIRE(out(1, 0) == 2.0);
  }
}

TEST_CASE("forward rejects inconsistent shapes and unbound leaves") {
  Graph g;
  NodeRef a = g.input(Matrix::Zero(2, 2));
  NodeRef b = g.input(Matrix::Zero(3, 2));
  CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(g.matmul(b, b), std::invalid_argument);

  Graph g2;
  NodeRef unbound = g2.input(2, 2);
  (void)unbound;
  CHECK_THROWS_AS(g2.forward(), std::logic_error);
}

TEST_CASE("backward matches hand derivatives") {
  SECTION("d/dx x^2 = 2x at 3") {
    Graph g;
    NodeRef x = g.input(Matrix::Constant(1, 1, 3.0), true);
    const NodeRef wrt[] = {x};
    REQUIRE(g.gradients(g.square(x), wrt)[0](0, 0) == Catch::Approx(6.0));
  }
  SECTION("tanh'(0) = 1") {
    Graph g;
    NodeRef x = g.input(Matrix::Zero(1, 1), true);
    const NodeRef wrt[] = {x};
    REQUIRE(g.gradients(g.tanh(x), wrt)[0](0, 0) == Catch::Approx(1.0));
  }
  SECTION("seed must be scalar") {
    Graph g;
    NodeRef x = g.input(Matrix::Zero(2, 2), true);
    const NodeRef wrt[] = {x};
    CHECK_THROWS_AS(g.backward(g.square(x), wrt), std::invalid_argument);
  }
  SECTION("leaf unreachable from seed gets a zero adjoint") {
    Graph g;
    NodeRef x = g.input(Matrix::Constant(1, 1, 2.0), true);
    NodeRef y = g.input(Matrix::Constant(3, 2, 1.0), true);
    const NodeRef wrt[] = {y};
    const Matrix gy = g.gradients(g.square(x), wrt)[0];
    REQUIRE(gy.rows() == 3);
    REQUIRE(gy.cols() == 2);
    REQUIRE(gy.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("every primitive gradient matches central finite differences") {
  iae::rng::SplitMix64 gen(0x5eed);
  // Each case wraps the op into sum(C .* op(...)) so all entries matter.
  const auto weighted = [](Graph& g, NodeRef v, const Matrix& c) {
    return g.sum(g.mul(v, g.constant(c)));
  };

  for (int rep = 0; rep < 8; ++rep) {
    const Matrix a34 = random_matrix(gen, 3, 4);
    const Matrix b34 = random_matrix(gen, 3, 4);
    const Matrix a23 = random_matrix(gen, 2, 3);
    const Matrix col = random_matrix(gen, 3, 1);
    const Matrix c34 = random_matrix(gen, 3, 4);
    const Matrix c24 = random_matrix(gen, 2, 4);
    const Matrix c43 = random_matrix(gen, 4, 3);
    const Matrix c14 = random_matrix(gen, 1, 4);
    const Matrix c31 = random_matrix(gen, 3, 1);
    const Matrix c62 = random_matrix(gen, 6, 2);

    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.add(v[0], v[1]), c34); },
        [&](const std::vector<Matrix>& v) { return ((v[0] + v[1]).cwiseProduct(c34)).sum(); },
        {a34, b34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.sub(v[0], v[1]), c34); },
        [&](const std::vector<Matrix>& v) { return ((v[0] - v[1]).cwiseProduct(c34)).sum(); },
        {a34, b34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.mul(v[0], v[1]), c34); },
        [&](const std::vector<Matrix>& v) {
          return (v[0].cwiseProduct(v[1]).cwiseProduct(c34)).sum();
        },
        {a34, b34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.scale(v[0], -1.7), c34); },
        [&](const std::vector<Matrix>& v) { return (v[0] * -1.7).cwiseProduct(c34).sum(); },
        {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) {
          return weighted(g, g.matmul(v[0], v[1]), c24);
        },
        [&](const std::vector<Matrix>& v) { return ((v[0] * v[1]).cwiseProduct(c24)).sum(); },
        {a23, a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.transpose(v[0]), c43); },
        [&](const std::vector<Matrix>& v) { return (v[0].transpose().cwiseProduct(c43)).sum(); },
        {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.tanh(v[0]), c34); },
        [&](const std::vector<Matrix>& v) {
          return (v[0].array().tanh().matrix().cwiseProduct(c34)).sum();
        },
        {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.square(v[0]), c34); },
        [&](const std::vector<Matrix>& v) {
          return (v[0].array().square().matrix().cwiseProduct(c34)).sum();
        },
        {a34});
    // sqrt and recip need inputs bounded away from zero.
    const Matrix pos = (a34.array().abs() + 0.5).matrix();
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.sqrt(v[0]), c34); },
        [&](const std::vector<Matrix>& v) {
          return (v[0].array().sqrt().matrix().cwiseProduct(c34)).sum();
        },
        {pos});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.recip(v[0]), c34); },
        [&](const std::vector<Matrix>& v) {
          return (v[0].array().inverse().matrix().cwiseProduct(c34)).sum();
        },
        {pos});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) {
          return weighted(g, g.add_col(v[0], v[1]), c34);
        },
        [&](const std::vector<Matrix>& v) {
          return ((v[0].colwise() + Eigen::VectorXd(v[1].col(0))).cwiseProduct(c34)).sum();
        },
        {a34, col});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.col_sum(v[0]), c14); },
        [&](const std::vector<Matrix>& v) {
          return (Matrix(v[0].colwise().sum()).cwiseProduct(c14)).sum();
        },
        {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.row_sum(v[0]), c31); },
        [&](const std::vector<Matrix>& v) {
          return (Matrix(v[0].rowwise().sum()).cwiseProduct(c31)).sum();
        },
        {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.row_rep(v[0], 3), c34); },
        [&](const std::vector<Matrix>& v) { return (v[0].replicate(3, 1).cwiseProduct(c34)).sum(); },
        {c14});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.col_rep(v[0], 4), c34); },
        [&](const std::vector<Matrix>& v) { return (v[0].replicate(1, 4).cwiseProduct(c34)).sum(); },
        {col});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) {
          return weighted(g, g.reshape(v[0], 6, 2), c62);
        },
        [&](const std::vector<Matrix>& v) {
          return Matrix(Eigen::Map<const Matrix>(v[0].data(), 6, 2)).cwiseProduct(c62).sum();
        },
        {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return g.sum(v[0]); },
        [&](const std::vector<Matrix>& v) { return v[0].sum(); }, {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return g.mean(g.square(v[0])); },
        [&](const std::vector<Matrix>& v) { return v[0].array().square().mean(); }, {a34});
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return g.l2_norm(v[0]); },
        [&](const std::vector<Matrix>& v) { return v[0].norm(); }, {pos});
    // unfold: windows over each column, weighted by a constant.
    const Matrix c26 = random_matrix(gen, 2, 6);  // window 2, (4-2+1)*2 = 6 columns
    const Matrix a42 = random_matrix(gen, 4, 2);
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& v) { return weighted(g, g.unfold(v[0], 2), c26); },
        [&](const std::vector<Matrix>& v) {
          double s = 0.0;
          for (long j = 0; j < 2; ++j) {
            for (long k = 0; k < 3; ++k) {
              for (long r = 0; r < 2; ++r) s += v[0](k + r, j) * c26(r, j * 3 + k);
            }
          }
          return s;
        },
        {a42});
  }
}

TEST_CASE("three-layer network gradients match finite differences") {
  iae::rng::SplitMix64 gen(0xabc);
  for (int rep = 0; rep < 3; ++rep) {
    const Matrix w1 = random_matrix(gen, 5, 4), b1 = random_matrix(gen, 5, 1);
    const Matrix w2 = random_matrix(gen, 3, 5), b2 = random_matrix(gen, 3, 1);
    const Matrix w3 = random_matrix(gen, 1, 3), b3 = random_matrix(gen, 1, 1);
    const Matrix x = random_matrix(gen, 4, 6);

    const auto numeric = [&x](const std::vector<Matrix>& p) {
      Matrix h1 = ((p[0] * x).colwise() + Eigen::VectorXd(p[1].col(0))).array().tanh();
      Matrix h2 = ((p[2] * h1).colwise() + Eigen::VectorXd(p[3].col(0))).array().tanh();
      Matrix h3 = (p[4] * h2).colwise() + Eigen::VectorXd(p[5].col(0));
      return h3.array().square().mean();
    };
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& p) {
          NodeRef xin = g.constant(x);
          NodeRef h1 = g.tanh(g.affine(p[0], xin, p[1]));
          NodeRef h2 = g.tanh(g.affine(p[2], h1, p[3]));
          NodeRef h3 = g.affine(p[4], h2, p[5]);
          return g.mean(g.square(h3));
        },
        numeric, {w1, b1, w2, b2, w3, b3});
  }
}

TEST_CASE("evaluation is deterministic") {
  const auto run = [] {
    iae::rng::SplitMix64 gen(42);
    Graph g;
    NodeRef w = g.input(random_matrix(gen, 4, 4), true);
    NodeRef x = g.input(random_matrix(gen, 4, 4));
    NodeRef out = g.mean(g.square(g.tanh(g.matmul(w, x))));
    const NodeRef wrt[] = {w};
    return std::pair<double, Matrix>(g.value(out)(0, 0), g.gradients(out, wrt)[0]);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.first == b.first);
  REQUIRE((a.second - b.second).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("re-forward after rebinding an input") {
  Graph g;
  NodeRef x = g.input(Matrix::Constant(1, 1, 2.0));
  NodeRef y = g.square(x);
  REQUIRE(g.value(y)(0, 0) == 4.0);
  g.set_value(x, Matrix::Constant(1, 1, 5.0));
  g.forward();
  REQUIRE(g.value(y)(0, 0) == 25.0);
}

TEST_CASE("gradient penalty closed forms") {
  SECTION("unit-gradient linear discriminator has zero penalty") {
    Matrix w(1, 3);
    w << 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0);
    iae::rng::SplitMix64 gen(9);
    for (int i = 0; i < 5; ++i) {
      Graph g;
      NodeRef wn = g.input(w, true);
      NodeRef pen = iae::ad::grad_penalty(
          g, [&](Graph& gg, NodeRef v) { return gg.matmul(wn, v); }, random_matrix(gen, 3, 1));
      REQUIRE(g.value(pen)(0, 0) == Catch::Approx(0.0).margin(1e-12));
    }
  }
  SECTION("D(v) = 2v has penalty (2-1)^2 = 1") {
    Graph g;
    NodeRef w = g.input(Matrix::Constant(1, 1, 2.0), true);
    NodeRef pen = iae::ad::grad_penalty(
        g, [&](Graph& gg, NodeRef v) { return gg.matmul(w, v); }, Matrix::Constant(1, 1, 0.3));
    REQUIRE(g.value(pen)(0, 0) == Catch::Approx(1.0));
  }
  SECTION("non-scalar discriminator output is rejected") {
    Graph g;
    NodeRef w = g.input(Matrix::Identity(2, 2), true);
    CHECK_THROWS_AS(iae::ad::grad_penalty(
                        g, [&](Graph& gg, NodeRef v) { return gg.matmul(w, v); },
                        Matrix::Constant(2, 1, 0.5)),
                    std::invalid_argument);
  }
}

TEST_CASE("gradient penalty parameter gradients match finite differences") {
  iae::rng::SplitMix64 gen(0x77);
  for (int rep = 0; rep < 4; ++rep) {
    const Matrix w1 = random_matrix(gen, 4, 3), b1 = random_matrix(gen, 4, 1);
    const Matrix w2 = random_matrix(gen, 1, 4), b2 = random_matrix(gen, 1, 1);
    const Matrix point = random_matrix(gen, 3, 1);

    const auto numeric = [&point](const std::vector<Matrix>& p) {
      // Analytic input gradient of the two-layer tanh discriminator.
      const Eigen::VectorXd z = p[0] * point + p[1];
      const Eigen::VectorXd h = z.array().tanh();
      const Eigen::VectorXd dh = 1.0 - h.array().square();
      const Eigen::VectorXd grad = p[0].transpose() * (p[2].transpose().col(0).cwiseProduct(dh));
      const double n = grad.norm();
      return (n - 1.0) * (n - 1.0);
    };
    check_gradients(
        [&](Graph& g, const std::vector<NodeRef>& p) {
          return iae::ad::grad_penalty(
              g,
              [&](Graph& gg, NodeRef v) {
                return gg.affine(p[2], gg.tanh(gg.affine(p[0], v, p[1])), p[3]);
              },
              point);
        },
        numeric, {w1, b1, w2, b2}, 1e-4);
  }
}
