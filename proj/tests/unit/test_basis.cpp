#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "specgp/basis.hpp"

using namespace specgp;

namespace {

// The closed form in extended precision, no series: fine away from z = 0.
long double raw_phi(long double alpha, long double beta, long double u) {
  const long double z = alpha * u, w = z * z;
  const long double chi = 1.0L - std::exp(-0.5L * w) * (z * std::sin(z) + std::cos(z));
  const long double den = 2.0L * std::exp(beta) * chi - (w + 1.0L) * std::exp(-w) + 1.0L;
  return w * std::exp(-0.5L * w) / std::sqrt(den);
}

TunableBasisConfig fig2_config(double alpha, double beta) {
  // Five functions on a length-3 domain.
  TunableBasisConfig c;
  c.alpha = alpha;
  c.beta = beta;
  c.m = 5;
  c.lb = -1.5;
  c.ub = 1.5;
  return c;
}

}  // namespace

TEST(Kappa, Values) {
  EXPECT_DOUBLE_EQ(kappa(0.0), 1.0);
  EXPECT_LT(kappa(60.0), 1e-12);
  EXPECT_NEAR(kappa(-5.0), 1.409473, 1e-6);
  EXPECT_NEAR(kappa(-5.0), std::sqrt(2.0 / (std::exp(-5.0) + 1.0)), 1e-15);
}

TEST(Kappa, IsTheMaximumOfPhi) {
  for (double beta : {-5.0, 0.0, 2.0}) {
    double best = 0.0;
    for (int i = -20000; i <= 20000; ++i) best = std::max(best, tunable_phi(3.0, beta, i * 1e-4));
    EXPECT_NEAR(best, kappa(beta), 1e-9) << beta;
  }
}

TEST(Phi, KnotValueIsKappaByExtrapolation) {
  // phi(z) - kappa is quadratic in z near 0, so Richardson extrapolation of
  // the raw formula from z = 0.02 and 0.01 estimates the limit independently.
  for (double beta : {-5.0, 0.0, 4.0}) {
    const long double a = raw_phi(1.0L, beta, 0.02L), b = raw_phi(1.0L, beta, 0.01L);
    const double limit = static_cast<double>((4.0L * b - a) / 3.0L);
    EXPECT_NEAR(limit, kappa(beta), 1e-6) << beta;
    EXPECT_DOUBLE_EQ(tunable_phi(1.0, beta, 0.0), kappa(beta));
  }
  TunableBasisConfig c;
  c.m = 4;
  c.lb = -2.0;
  c.ub = 4.0;
  c.alpha = 3.7;
  for (int j = 0; j < c.m; ++j) EXPECT_DOUBLE_EQ(eval_phi(c, j, c.knot(j)), 1.0);
}

TEST(Phi, MatchesHighPrecisionReference) {
  struct Ref {
    double beta, z, value;
  };
  // 60-digit evaluations of the closed form.
  const Ref refs[] = {
      {0, 1e-3, 0.9999997777777900463},  {0, 0.1, 0.99777900563935988743},  {0, 0.3, 0.98010010409719031806},
      {0, 0.49, 0.94736529155292969936}, {0, 0.51, 0.94304722565758515777}, {0, 1.0, 0.79093346313708779386},
      {0, 3.0, 0.057615102433257433811}, {-5, 1e-3, 1.4094728209483248037}, {-5, 0.1, 1.4071134694535127516},
      {-5, 0.3, 1.3882387761919486554},  {-5, 0.49, 1.3528460319219459801}, {-5, 0.51, 1.348133381023884096},
      {-5, 1.0, 1.1750784960587653316},  {-5, 3.0, 0.099370393975217558296}, {4, 1e-3, 0.18966391349777090468},
      {4, 0.1, 0.18914153465928393438},  {4, 0.3, 0.18500665268762019463}, {4, 0.49, 0.1774588651088959641},
      {4, 0.51, 0.17647352211606379936}, {4, 1.0, 0.14318176705564703246}, {4, 3.0, 0.0094948035043021778775},
  };
  for (const auto& r : refs) EXPECT_NEAR(tunable_phi(1.0, r.beta, r.z), r.value, 2e-14 * r.value) << r.beta << " " << r.z;
}

TEST(Phi, ContinuousAcrossSeriesSwitch) {
  const double tau = detail::kPhiSeriesRadius;
  for (double alpha : {0.1, 1.0, 10.0, 100.0})
    for (double beta : {-5.0, 0.0, 4.0}) {
      const double u = tau / alpha;
      const double below = tunable_phi(alpha, beta, std::nextafter(u, 0.0));
      const double above = tunable_phi(alpha, beta, std::nextafter(u, 1.0));
      EXPECT_LT(std::abs(below - above), 1e-8) << alpha << " " << beta;
      EXPECT_LT(std::abs(below - above), 1e-13) << alpha << " " << beta;
    }
}

TEST(Phi, EvenInOffset) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0), a(-20.0, 20.0), b(-5.0, 5.0);
  for (int t = 0; t < 1000; ++t) {
    const double al = a(rng), be = b(rng), d = u(rng);
    EXPECT_EQ(tunable_phi(al, be, d), tunable_phi(al, be, -d));
    EXPECT_EQ(tunable_phi(al, be, d), tunable_phi(-al, be, d));
  }
}

TEST(Phi, FarFieldDecay) { EXPECT_LT(tunable_phi(5.0, 0.0, 10.0 / 5.0), 1e-15); }

TEST(Phi, ZeroAlphaIsConstantKappa) {
  for (double beta : {-3.0, 0.0, 1.5})
    for (double x : {-100.0, -1.0, 0.0, 0.3, 7.0}) EXPECT_DOUBLE_EQ(tunable_phi(0.0, beta, x), kappa(beta));
}

TEST(Phi, BoundedByKappa) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> a(-50.0, 50.0), b(-6.0, 6.0), u(-5.0, 5.0);
  for (int t = 0; t < 100000; ++t) {
    const double be = b(rng);
    const double v = tunable_phi(a(rng), be, u(rng));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, kappa(be) + 1e-10);
  }
}

TEST(Phi, IndexOutOfRangeThrows) {
  TunableBasisConfig c;
  c.m = 3;
  EXPECT_THROW(eval_phi(c, 3, 0.0), InputError);
  EXPECT_THROW(eval_phi(c, -1, 0.0), InputError);
}

TEST(BasisConfig, KnotsAndValidation) {
  TunableBasisConfig c;
  c.m = 5;
  c.lb = -1.0;
  c.ub = 1.0;
  EXPECT_DOUBLE_EQ(c.spacing(), 0.5);
  EXPECT_DOUBLE_EQ(c.knot(0), -1.0);
  EXPECT_DOUBLE_EQ(c.knot(4), 1.0);
  EXPECT_DOUBLE_EQ(c.knot(2), 0.0);
  c.ub = -1.0;
  EXPECT_THROW(c.validate(), InputError);
  c.ub = 1.0;
  c.m = 0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(FeatureMatrix, SymmetricRowAtCentreKnot) {
  TunableBasisConfig c;
  c.m = 3;
  c.lb = 0.0;
  c.ub = 2.0;
  c.alpha = 2.0;
  const Eigen::MatrixXd psi = feature_matrix(c, Eigen::VectorXd::Constant(1, c.knot(1)));
  const double side = tunable_phi(2.0, 0.0, c.spacing());
  EXPECT_DOUBLE_EQ(psi(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(psi(0, 0), side);
  EXPECT_DOUBLE_EQ(psi(0, 2), side);
}

TEST(FeatureMatrix, LargeAlphaIsLocal) {
  TunableBasisConfig c;
  c.m = 11;
  c.lb = 0.0;
  c.ub = 1.0;
  c.alpha = 500.0;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(997, -0.1, 1.1);
  const Eigen::MatrixXd psi = feature_matrix(c, x);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (int j = 0; j < c.m; ++j) {
      if (std::abs(x[i] - c.knot(j)) > 20.0 / c.alpha) {
        EXPECT_LT(psi(i, j), 1e-6);
      }
    }
  EXPECT_LE(psi.maxCoeff(), kappa(c.beta) + 1e-12);
}

TEST(TensorFeatures, SingleFunctionPerDimension) {
  std::vector<TunableBasisConfig> cfgs(2);
  cfgs[0].m = cfgs[1].m = 1;
  cfgs[0].alpha = 1.3;
  cfgs[1].alpha = 0.4;
  Eigen::MatrixXd X(2, 2);
  X << 0.2, 0.9, -0.5, 0.1;
  const Eigen::MatrixXd psi = tensor_feature_matrix(cfgs, X);
  ASSERT_EQ(psi.cols(), 1);
  for (int i = 0; i < 2; ++i)
    EXPECT_DOUBLE_EQ(psi(i, 0), eval_phi(cfgs[0], 0, X(i, 0)) * eval_phi(cfgs[1], 0, X(i, 1)));
}

TEST(TensorFeatures, OrderingAndKroneckerRows) {
  std::vector<TunableBasisConfig> cfgs(2);
  cfgs[0].m = 3;
  cfgs[0].lb = 0;
  cfgs[0].ub = 2;
  cfgs[0].alpha = 2.0;
  cfgs[1].m = 4;
  cfgs[1].lb = -1;
  cfgs[1].ub = 2;
  cfgs[1].alpha = 1.5;
  const int a = 2, b = 1;
  Eigen::MatrixXd X(2, 2);
  X << cfgs[0].knot(a), cfgs[1].knot(b), 0.37, 1.21;
  const Eigen::MatrixXd psi = tensor_feature_matrix(cfgs, X);
  ASSERT_EQ(psi.cols(), 12);
  EXPECT_DOUBLE_EQ(psi(0, a + b * 3), 1.0);
  EXPECT_DOUBLE_EQ(psi.row(0).maxCoeff(), 1.0);
  for (int bb = 0; bb < 4; ++bb)
    for (int aa = 0; aa < 3; ++aa)
      EXPECT_EQ(psi(1, aa + bb * 3), eval_phi(cfgs[0], aa, 0.37) * eval_phi(cfgs[1], bb, 1.21));
  const Eigen::MatrixXd knots = knot_grid(cfgs);
  EXPECT_DOUBLE_EQ(knots(a + b * 3, 0), cfgs[0].knot(a));
  EXPECT_DOUBLE_EQ(knots(a + b * 3, 1), cfgs[1].knot(b));
  EXPECT_THROW(tensor_feature_matrix(cfgs, Eigen::MatrixXd::Zero(2, 1)), InputError);
}

TEST(Orthogonality, ZeroAlphaGivesThreeKappaSquared) {
  for (double beta : {0.0, -1.0, 2.0})
    EXPECT_NEAR(orthogonality_integral(fig2_config(0.0, beta), 0, 1), 3.0 * kappa(beta) * kappa(beta), 1e-6);
}

TEST(Orthogonality, SymmetricInIndicesAndAlpha) {
  const auto c = fig2_config(2.3, 0.4);
  EXPECT_DOUBLE_EQ(orthogonality_integral(c, 0, 3), orthogonality_integral(c, 3, 0));
  EXPECT_DOUBLE_EQ(orthogonality_integral(c, 1, 2), orthogonality_integral(fig2_config(-2.3, 0.4), 1, 2));
}

TEST(Orthogonality, NearDeltaRegime) {
  EXPECT_LT(orthogonality_integral(fig2_config(500.0, -5.0), 0, 1), 1e-3);
}

TEST(Orthogonality, FallsWithAlphaAndBeta) {
  double prev = INFINITY;
  for (double alpha : {0.5, 2.0, 8.0, 32.0}) {
    const double v = orthogonality_integral(fig2_config(alpha, 0.0), 0, 1);
    EXPECT_LE(v, prev) << alpha;
    prev = v;
  }
  prev = INFINITY;
  for (double beta : {-2.0, 0.0, 2.0, 4.0}) {
    const double v = orthogonality_integral(fig2_config(1.0, beta), 0, 1);
    EXPECT_LE(v, prev) << beta;
    prev = v;
  }
}

TEST(Hilbert, ClosedFormExample) {
  HilbertBasisConfig c{1, 0.0, 2.0};
  const HilbertFeatures f = hilbert_features(c, Eigen::VectorXd::Constant(1, 1.0));
  EXPECT_NEAR(f.phi(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(f.frequencies(0, 0), std::numbers::pi / 2.0, 1e-15);
}

TEST(Hilbert, SatisfiesLaplaceEigenproblem) {
  HilbertBasisConfig c{6, -1.0, 2.0};
  const double h = 1e-4;
  for (double x : {-0.6, 0.1, 1.3}) {
    Eigen::VectorXd xs(3);
    xs << x - h, x, x + h;
    const HilbertFeatures f = hilbert_features(c, xs);
    for (int j = 0; j < c.m; ++j) {
      const double second = (f.phi(0, j) - 2.0 * f.phi(1, j) + f.phi(2, j)) / (h * h);
      const double lam = f.frequencies(j, 0);
      EXPECT_NEAR(-second, lam * lam * f.phi(1, j), 1e-5 * (1.0 + lam * lam));
    }
  }
}

TEST(Hilbert, DirichletBoundaryAndIncreasingFrequencies) {
  HilbertBasisConfig c{8, -3.0, 3.0};
  Eigen::VectorXd x(2);
  x << -3.0, 3.0;
  const HilbertFeatures f = hilbert_features(c, x);
  EXPECT_LT(f.phi.cwiseAbs().maxCoeff(), 1e-14);
  for (int j = 1; j < c.m; ++j) EXPECT_GT(f.frequencies(j, 0), f.frequencies(j - 1, 0));
  EXPECT_GT(f.frequencies(0, 0), 0.0);
}

TEST(Hilbert, Orthonormal) {
  HilbertBasisConfig c{6, -1.0, 2.0};
  const int panels = 4000;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(panels + 1, c.lb, c.ub);
  const Eigen::MatrixXd phi = hilbert_features(c, x).phi;
  Eigen::VectorXd w(panels + 1);
  for (int k = 0; k <= panels; ++k) w[k] = (k == 0 || k == panels) ? 1.0 : (k % 2 ? 4.0 : 2.0);
  w *= (c.ub - c.lb) / panels / 3.0;
  const Eigen::MatrixXd G = phi.transpose() * w.asDiagonal() * phi;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(c.m, c.m)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Hilbert, TensorProductOrderMatchesTunableBasis) {
  std::vector<HilbertBasisConfig> cfgs = {{3, 0.0, 1.0}, {2, -1.0, 1.0}};
  Eigen::MatrixXd X(1, 2);
  X << 0.3, 0.4;
  const HilbertFeatures f = hilbert_features(std::span<const HilbertBasisConfig>(cfgs), X);
  ASSERT_EQ(f.phi.cols(), 6);
  const auto f0 = hilbert_features(cfgs[0], X.col(0)), f1 = hilbert_features(cfgs[1], X.col(1));
  for (int b = 0; b < 2; ++b)
    for (int a = 0; a < 3; ++a) {
      EXPECT_DOUBLE_EQ(f.phi(0, a + 3 * b), f0.phi(0, a) * f1.phi(0, b));
      EXPECT_DOUBLE_EQ(f.frequencies(a + 3 * b, 0), f0.frequencies(a, 0));
      EXPECT_DOUBLE_EQ(f.frequencies(a + 3 * b, 1), f1.frequencies(b, 0));
    }
}
