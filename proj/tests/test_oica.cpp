#include "orid/oica.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace orid;
using namespace orid::testing;

namespace {

CrossModalFeatures random_cross(std::mt19937_64& rng, int p, int d) {
  CrossModalFeatures cm;
  for (auto& f : cm.fine) f = ag::constant(random_matrix(rng, p, d));
  cm.coarse = ag::constant(random_matrix(rng, p, d));
  return cm;
}

double elu(double x) { return x > 0 ? x : std::exp(x) - 1; }
double leaky(double x) { return x > 0 ? x : 0.2 * x; }

}  // namespace

TEST(PoolNodes, ConstantAndTwoRowGrids) {
  CrossModalFeatures cm;
  for (auto& f : cm.fine) f = ag::constant(Matrix::Constant(4, 3, 2.5));
  Matrix two(2, 3);
  two << 1, 2, 3, 5, 8, 13;
  cm.coarse = ag::constant(two);
  const Matrix n = pool_nodes(cm).value();
  ASSERT_EQ(n.rows(), 6);
  for (int r = 0; r < 5; ++r) EXPECT_EQ(n.row(r), Matrix::Constant(1, 3, 2.5));
  EXPECT_EQ(n(5, 0), 3.0);
  EXPECT_EQ(n(5, 1), 5.0);
  EXPECT_EQ(n(5, 2), 8.0);
}

TEST(PoolNodes, MatchesLoopMean) {
  std::mt19937_64 rng(1);
  const CrossModalFeatures cm = random_cross(rng, 5, 4);
  const Matrix n = pool_nodes(cm).value();
  for (std::size_t v = 0; v < kNumGraphNodes; ++v) {
    const Matrix& g = v < kNumOrgans ? cm.fine[v].value() : cm.coarse.value();
    for (int c = 0; c < 4; ++c) {
      double acc = 0;
      for (int r = 0; r < 5; ++r) acc += g(r, c);
      EXPECT_NEAR(n(static_cast<int>(v), c), acc / 5, 1e-15);
    }
  }
  CrossModalFeatures no_coarse = cm;
  no_coarse.coarse = Var();
  EXPECT_THROW(pool_nodes(no_coarse), std::invalid_argument);
}

TEST(Gat, HeadsMustDivideDim) {
  nn::ParamStore store;
  nn::Initializer init(1);
  EXPECT_THROW(GatLayer(store, "g", 6, 4, init), std::invalid_argument);
}

TEST(Gat, SelfLoopsOnlyAttendToSelf) {
  nn::ParamStore store;
  nn::Initializer init(2);
  const GatLayer gat(store, "g", 4, 2, init);
  std::mt19937_64 rng(3);
  std::vector<Matrix> w;
  gat(ag::constant(random_matrix(rng, 6, 4)), Matrix::Identity(6, 6), &w);
  for (const Matrix& a : w) EXPECT_EQ(a, Matrix::Identity(6, 6));
}

TEST(Gat, NonNeighboursGetExactlyZeroAndRowsSumToOne) {
  nn::ParamStore store;
  nn::Initializer init(4);
  const GatLayer gat(store, "g", 8, 4, init);
  std::mt19937_64 rng(5);
  const Matrix adj = build_adjacency(default_ds_graph());
  for (int t = 0; t < 20; ++t) {
    std::vector<Matrix> w;
    gat(ag::constant(random_matrix(rng, 6, 8, 3.0)), adj, &w);
    for (const Matrix& a : w)
      for (int v = 0; v < 6; ++v) {
        EXPECT_NEAR(a.row(v).sum(), 1.0, 1e-12);
        for (int u = 0; u < 6; ++u)
          if (adj(v, u) == 0) {
            EXPECT_EQ(a(v, u), 0.0);
          }
      }
  }
}

TEST(Gat, SymmetricIdenticalNodesGiveIdenticalOutputs) {
  nn::ParamStore store;
  nn::Initializer init(6);
  const GatLayer gat(store, "g", 4, 2, init);
  std::mt19937_64 rng(7);
  Matrix x(2, 4);
  x.row(0) = x.row(1) = random_matrix(rng, 1, 4);
  const Matrix out = gat(ag::constant(x), Matrix::Ones(2, 2)).value();
  EXPECT_EQ(out.row(0), out.row(1));
}

TEST(Gat, HandComputedTwoNodeGraph) {
  nn::ParamStore store;
  nn::Initializer init(0);
  GatLayer gat(store, "g", 2, 1, init);
  gat.weight(0).node()->value = Matrix::Identity(2, 2);
  Matrix ad(2, 1), as(2, 1), b(1, 2);
  ad << 1.0, -0.5;
  as << 0.25, 2.0;
  b << 0.1, -0.3;
  gat.att_dst(0).node()->value = ad;
  gat.att_src(0).node()->value = as;
  gat.bias().node()->value = b;
  Matrix x(2, 2);
  x << 0.4, -1.2, 0.7, 0.3;
  const Matrix out = gat(ag::constant(x), Matrix::Ones(2, 2)).value();
  for (int v = 0; v < 2; ++v) {
    const double dst = ad(0) * x(v, 0) + ad(1) * x(v, 1);
    double e[2], z = 0;
    for (int u = 0; u < 2; ++u) z += (e[u] = std::exp(leaky(dst + as(0) * x(u, 0) + as(1) * x(u, 1))));
    for (int c = 0; c < 2; ++c) {
      const double agg = (e[0] * x(0, c) + e[1] * x(1, c)) / z;
      EXPECT_NEAR(out(v, c), elu(agg + b(c)), 1e-15);
    }
  }
}

TEST(Gat, IsolatedNodeIsRejected) {
  nn::ParamStore store;
  nn::Initializer init(0);
  const GatLayer gat(store, "g", 2, 1, init);
  Matrix adj = Matrix::Identity(3, 3);
  adj(1, 1) = 0;
  EXPECT_THROW(gat(ag::constant(Matrix::Zero(3, 2)), adj), std::invalid_argument);
}

TEST(ImportanceHead, ZeroNodesGiveOneHalf) {
  nn::ParamStore store;
  nn::Initializer init(1);
  const ImportanceHead head(store, 4, 3, init);
  const Matrix a = head(ag::constant(Matrix::Zero(6, 4))).value();
  ASSERT_EQ(a.rows(), 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a(i, 0), 0.5);
}

TEST(ImportanceHead, HandSetPerceptron) {
  nn::ParamStore store;
  nn::Initializer init(1);
  ImportanceHead head(store, 2, 2, init);
  Matrix w1(2, 2), b1(1, 2), w2(2, 1), b2(1, 1);
  w1 << 0.5, -1.0, 2.0, 0.25;
  b1 << 0.1, 0.2;
  w2 << 1.5, -0.75;
  b2 << 0.05;
  head.hidden_layer().weight().node()->value = w1;
  head.hidden_layer().bias().node()->value = b1;
  head.output_layer().weight().node()->value = w2;
  head.output_layer().bias().node()->value = b2;
  std::mt19937_64 rng(2);
  const Matrix nodes = random_matrix(rng, 6, 2);
  const Matrix a = head(ag::constant(nodes)).value();
  for (int o = 0; o < 5; ++o) {
    const double h0 = std::tanh(nodes(o, 0) * w1(0, 0) + nodes(o, 1) * w1(1, 0) + b1(0));
    const double h1 = std::tanh(nodes(o, 0) * w1(0, 1) + nodes(o, 1) * w1(1, 1) + b1(1));
    const double expected = 1 / (1 + std::exp(-(h0 * w2(0) + h1 * w2(1) + b2(0))));
    EXPECT_NEAR(a(o, 0), expected, 1e-15);
  }
}

TEST(Analyzer, CoefficientsInUnitInterval) {
  nn::ParamStore store;
  nn::Initializer init(3);
  const ImportanceAnalyzer an(store, {8, 8, 2, 8}, init);
  std::mt19937_64 rng(4);
  std::vector<std::vector<Matrix>> w;
  const Matrix a = an(random_cross(rng, 4, 8), build_adjacency(default_ds_graph()), &w).value();
  ASSERT_EQ(a.rows(), 5);
  for (int i = 0; i < 5; ++i) {
    EXPECT_GT(a(i, 0), 0.0);
    EXPECT_LT(a(i, 0), 1.0);
  }
  EXPECT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].size(), 8u);
}

TEST(Assemble, ZeroAlphaLeavesCoarse) {
  std::mt19937_64 rng(5);
  const CrossModalFeatures cm = random_cross(rng, 4, 3);
  const Var raw = ag::constant(random_matrix(rng, 4, 3));
  const FinalFeatures f = assemble_final(cm, ag::constant(Matrix::Zero(5, 1)), raw);
  EXPECT_EQ(f.fused.value(), cm.coarse.value());
  EXPECT_EQ(f.input.value(), cm.coarse.value() + raw.value());
}

TEST(Assemble, SingleOrganWithZeroCoarse) {
  std::mt19937_64 rng(6);
  CrossModalFeatures cm = random_cross(rng, 4, 3);
  cm.coarse = ag::constant(Matrix::Zero(4, 3));
  Matrix a = Matrix::Zero(5, 1);
  a(3, 0) = 1.0;
  const FinalFeatures f = assemble_final(cm, ag::constant(a), ag::constant(Matrix::Zero(4, 3)));
  EXPECT_EQ(f.fused.value(), cm.fine[3].value());
}

TEST(Assemble, MatchesLoopAccumulation) {
  std::mt19937_64 rng(7);
  const CrossModalFeatures cm = random_cross(rng, 4, 3);
  const Matrix a = random_matrix(rng, 5, 1).cwiseAbs();
  const Matrix raw = random_matrix(rng, 4, 3);
  const FinalFeatures f = assemble_final(cm, ag::constant(a), ag::constant(raw));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = cm.coarse.value()(i, j);
      for (std::size_t o = 0; o < kNumOrgans; ++o) acc += a(static_cast<int>(o), 0) * cm.fine[o].value()(i, j);
      EXPECT_EQ(f.fused.value()(i, j), acc);
      EXPECT_EQ(f.input.value()(i, j), acc + raw(i, j));
    }
}

TEST(Assemble, UndefinedAlphaMeansOne) {
  std::mt19937_64 rng(8);
  CrossModalFeatures cm = random_cross(rng, 2, 2);
  cm.coarse = Var();
  const Matrix raw = random_matrix(rng, 2, 2);
  const FinalFeatures f = assemble_final(cm, Var(), ag::constant(raw));
  Matrix expected = cm.fine[0].value();
  for (std::size_t o = 1; o < kNumOrgans; ++o) expected += cm.fine[o].value();
  EXPECT_EQ(f.fused.value(), expected);
}

TEST(Assemble, ShapeMismatchThrows) {
  std::mt19937_64 rng(9);
  const CrossModalFeatures cm = random_cross(rng, 4, 3);
  EXPECT_THROW(assemble_final(cm, ag::constant(Matrix::Zero(4, 1)), ag::constant(Matrix::Zero(4, 3))),
               std::invalid_argument);
  EXPECT_THROW(assemble_final(cm, ag::constant(Matrix::Zero(5, 1)), ag::constant(Matrix::Zero(3, 3))),
               std::invalid_argument);
}
