#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "specgp/kernel_expr.hpp"
#include "specgp/kernels.hpp"
#include "specgp/numerics.hpp"

using namespace specgp;

namespace {

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }

// S(w) = 2 \int_0^R k(r) cos(w r) dr by composite Simpson; k is even and only
// C^2 at 0 for Matern, so the origin is a panel boundary.
double density_by_quadrature(const Kernel& k, double w, double R = 40.0, int panels = 40000) {
  const double h = R / panels;
  auto f = [&](double r) { return k.at_lag(v1(r)) * std::cos(w * r); };
  double s = f(0.0) + f(R);
  for (int i = 1; i < panels; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return 2.0 * s * h / 3.0;
}

Eigen::MatrixXd random_inputs(std::mt19937_64& rng, int n, int d) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = u(rng);
  return X;
}

}  // namespace

TEST(Kernel, SeValues) {
  const Kernel k = Kernel::se(1.0, 1.0);
  EXPECT_DOUBLE_EQ(eval_kernel(k, v1(0.3), v1(0.3)), 1.0);
  EXPECT_NEAR(eval_kernel(k, v1(0.0), v1(1.0)), 0.60653065971263342, 1e-15);
}

TEST(Kernel, CosineFullPeriod) {
  EXPECT_NEAR(eval_kernel(Kernel::cosine(2.0, 1.0), v1(0.0), v1(1.0)), 2.0, 1e-14);
}

TEST(Kernel, MaternZeroLagAndStandardForm) {
  const Kernel k = Kernel::matern52(1.0, 1.0);
  EXPECT_DOUBLE_EQ(eval_kernel(k, v1(2.0), v1(2.0)), 1.0);
  // Standard form at r = l: (1 + sqrt5 + 5/3) exp(-sqrt5).
  const double s5 = std::sqrt(5.0);
  EXPECT_NEAR(eval_kernel(k, v1(0.0), v1(1.0)), (1.0 + s5 + 5.0 / 3.0) * std::exp(-s5), 1e-15);
}

TEST(Kernel, ZeroLagEqualsVariance) {
  const Eigen::Vector2d x(0.4, -1.0);
  for (const Kernel& k : {Kernel::se(2.5, 0.3), Kernel::se_ard(1.7, {0.5, 2.0}), Kernel::cosine(0.9, 3.0),
                          Kernel::matern52(4.0, 1.1)})
    EXPECT_DOUBLE_EQ(k(x, x), k.variance());
}

TEST(Kernel, DimensionMismatchThrows) {
  const Kernel ard = Kernel::se_ard(1.0, {1.0, 2.0});
  EXPECT_THROW(ard(v1(0.0), v1(1.0)), InputError);
  EXPECT_THROW(Kernel::se(1.0, 1.0)(v1(0.0), Eigen::Vector2d(0, 0)), InputError);
  EXPECT_THROW(gram(ard, Eigen::MatrixXd::Zero(3, 1)), InputError);
  EXPECT_THROW(gram(Kernel::se(1, 1), Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(3, 2)), InputError);
}

TEST(Kernel, InvalidHyperparametersThrow) {
  EXPECT_THROW(Kernel::se(0.0, 1.0), InputError);
  EXPECT_THROW(Kernel::se(1.0, -1.0), InputError);
  EXPECT_THROW(Kernel::se_ard(1.0, {}), InputError);
  EXPECT_THROW(Kernel::sum({}), InputError);
  EXPECT_THROW(Kernel::product({Kernel::se_ard(1, {1, 1}), Kernel::se_ard(1, {1, 1, 1})}), InputError);
}

TEST(Gram, Examples) {
  const Kernel k = Kernel::se(1.0, 1.0);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Constant(1, 1, 0.7);
  EXPECT_DOUBLE_EQ(gram(Kernel::se(3.0, 1.0), one)(0, 0), 3.0);
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  const Eigen::MatrixXd K = gram(k, X);
  EXPECT_DOUBLE_EQ(K(0, 0), 1.0);
  EXPECT_NEAR(K(0, 1), 0.60653065971263342, 1e-15);
  EXPECT_NEAR(K(1, 0), 0.60653065971263342, 1e-15);
}

TEST(Gram, ExactSymmetryAndCrossAgreement) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = random_inputs(rng, 25, 2);
  const Kernel k = Kernel::sum({Kernel::se_ard(1.0, {0.4, 1.3}), Kernel::matern52(0.5, 0.7)});
  const Eigen::MatrixXd K = gram(k, X);
  EXPECT_EQ((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((K - gram(k, X, X)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(gram_diag(k, X), K.diagonal());
}

TEST(Gram, PositiveSemidefiniteAfterTinyJitter) {
  std::mt19937_64 rng(11);
  const std::vector<Kernel> ks = {
      Kernel::se(1.0, 0.8),
      Kernel::se_ard(2.0, {0.5, 1.5}),
      Kernel::matern52(1.3, 0.6),
      Kernel::sum({Kernel::se(1.0, 1.0), Kernel::matern52(0.5, 0.3)}),
      Kernel::product({Kernel::se_ard(1.0, {1.0, 2.0}), Kernel::matern52(1.0, 0.9)}),
  };
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);
    const Eigen::MatrixXd X = random_inputs(rng, n, 2);
    for (const auto& k : ks) {
      Eigen::MatrixXd K = gram(k, X);
      K.diagonal().array() += 1e-8 * K.diagonal().mean();
      EXPECT_NO_THROW(jittered_cholesky(K));
    }
  }
}

TEST(Kernel, Stationarity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Kernel k = Kernel::product({Kernel::matern52(1.0, 0.7), Kernel::cosine(1.0, 1.3)});
  for (int t = 0; t < 50; ++t) {
    const Eigen::Vector2d x(u(rng), u(rng)), x2(u(rng), u(rng)), c(u(rng), u(rng));
    EXPECT_NEAR(k(x, x2), k(Eigen::Vector2d(x + c), Eigen::Vector2d(x2 + c)), 1e-14);
  }
}

TEST(Kernel, CompositionIsFold) {
  const Kernel a = Kernel::se(1.2, 0.5), b = Kernel::cosine(0.7, 2.0), c = Kernel::matern52(2.0, 1.5);
  const Eigen::VectorXd x = v1(0.3), y = v1(1.9);
  EXPECT_EQ(Kernel::sum({a, b, c})(x, y), a(x, y) + b(x, y) + c(x, y));
  EXPECT_EQ(Kernel::product({a, b, c})(x, y), a(x, y) * b(x, y) * c(x, y));
}

TEST(Kernel, HyperparameterRoundTrip) {
  const Kernel k = Kernel::sum({Kernel::product({Kernel::matern52(1.0, 2.0), Kernel::cosine(3.0, 4.0)}),
                                Kernel::se_ard(5.0, {6.0, 7.0})});
  const std::vector<double> expect = {1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(k.hyperparameters(), expect);
  const std::vector<std::string> names = {"matern52#0.variance", "matern52#0.lengthscale", "cos#1.variance",
                                          "cos#1.period", "se_ard#2.variance", "se_ard#2.lengthscale[0]",
                                          "se_ard#2.lengthscale[1]"};
  EXPECT_EQ(k.hyperparameter_names(), names);
  const std::vector<double> changed = {1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5};
  EXPECT_EQ(k.with_hyperparameters(changed).hyperparameters(), changed);
  EXPECT_THROW(k.with_hyperparameters(std::vector<double>{1.0}), InputError);
}

TEST(SpectralDensity, Examples) {
  EXPECT_NEAR(spectral_density(Kernel::se(1.0, 1.0), 0.0), std::sqrt(2.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(spectral_density(Kernel::matern52(1.0, 1.0), 0.0), 16.0 * std::pow(5.0, 2.5) / 375.0, 1e-12);
  EXPECT_NEAR(density_by_quadrature(Kernel::se(1.0, 1.0), 0.0), 2.5066, 1e-4);
  EXPECT_NEAR(density_by_quadrature(Kernel::matern52(1.0, 1.0), 0.0), 2.3851, 1e-4);
}

TEST(SpectralDensity, SeDecaysMonotonically) {
  const Kernel k = Kernel::se(1.0, 1.0);
  double prev = spectral_density(k, 0.0);
  for (double w = 0.25; w <= 12.0; w += 0.25) {
    const double s = spectral_density(k, w);
    EXPECT_LT(s, prev);
    prev = s;
  }
  EXPECT_LT(prev, 1e-30);
}

TEST(SpectralDensity, MatchesQuadratureOracle) {
  for (double l : {0.5, 1.0, 2.0})
    for (double w : {0.0, 0.5, 1.0, 2.0, 5.0})
      for (const Kernel& k : {Kernel::se(1.3, l), Kernel::matern52(0.8, l)}) {
        const double closed = spectral_density(k, w);
        // Below ~1e-10 the double-precision quadrature is swamped by round-off;
        // those values come from a 50-digit quadrature instead.
        double quad = density_by_quadrature(k, w);
        if (k.family() == KernelFamily::SE && l == 2.0 && w == 5.0) quad = 1.2570113149351159831e-21;
        EXPECT_LT(std::abs(closed - quad) / quad, 1e-4) << family_name(k.family()) << " l=" << l << " w=" << w;
      }
}

TEST(SpectralDensity, ClosedFormOneDimensional) {
  const double l = 0.7, w = 1.3, s2 = 1.9;
  EXPECT_NEAR(spectral_density(Kernel::matern52(s2, l), w),
              s2 * 16.0 * std::pow(5.0, 2.5) / (3.0 * std::pow(l, 5)) * std::pow(5.0 / (l * l) + w * w, -3.0), 1e-12);
  EXPECT_NEAR(spectral_density(Kernel::se(s2, l), w),
              s2 * std::sqrt(2.0 * std::numbers::pi) * l * std::exp(-0.5 * l * l * w * w), 1e-14);
}

TEST(SpectralDensity, ArdFactorisesOverDimensions) {
  const Kernel k = Kernel::se_ard(2.0, {0.5, 1.5});
  const std::vector<double> w = {0.7, 1.1};
  EXPECT_NEAR(spectral_density(k, w),
              2.0 * spectral_density(Kernel::se(1.0, 0.5), 0.7) * spectral_density(Kernel::se(1.0, 1.5), 1.1), 1e-14);
}

TEST(SpectralDensity, UnsupportedFamilies) {
  EXPECT_FALSE(has_spectral_density(Kernel::cosine(1.0, 1.0)));
  EXPECT_THROW(spectral_density(Kernel::cosine(1.0, 1.0), 0.5), UnsupportedFamilyError);
  EXPECT_THROW(spectral_density(Kernel::product({Kernel::matern52(1, 1), Kernel::cosine(1, 11)}), 0.5),
               UnsupportedFamilyError);
  EXPECT_THROW(spectral_density(Kernel::sum({Kernel::se(1, 1), Kernel::se(1, 2)}), 0.5), UnsupportedFamilyError);
}

// ---------------------------------------------------------------------------
// Kernel expressions

TEST(KernelExpr, ParsesProductWithArguments) {
  const Kernel k = parse_kernel("matern52(var=1,len=1)*cos(var=1,len=11)");
  ASSERT_EQ(k.family(), KernelFamily::Product);
  ASSERT_EQ(k.children().size(), 2u);
  EXPECT_EQ(k.children()[0].family(), KernelFamily::Matern52);
  EXPECT_EQ(k.children()[1].family(), KernelFamily::Cosine);
  EXPECT_EQ(k.children()[1].lengthscales()[0], 11.0);
}

TEST(KernelExpr, PrecedenceAndFlattening) {
  const Kernel k = parse_kernel("se(var=1,len=1) + matern52(var=1,len=2) * cos(var=1,len=3) + se(var=2,len=4)");
  ASSERT_EQ(k.family(), KernelFamily::Sum);
  ASSERT_EQ(k.children().size(), 3u);
  EXPECT_EQ(k.children()[1].family(), KernelFamily::Product);
  const Kernel p = parse_kernel("(se(var=1,len=1) * se(var=1,len=2)) * se(var=1,len=3)");
  EXPECT_EQ(p.children().size(), 3u);
}

TEST(KernelExpr, DefaultsFillMissingValues) {
  KernelDefaults d{2.0, {3.0, 5.0}, 7.0};
  const Kernel k = parse_kernel("se * cos + se_ard + matern(len=0.5)", d);
  const std::vector<double> expect = {2.0, 4.0, 2.0, 7.0, 2.0, 3.0, 5.0, 2.0, 0.5};
  EXPECT_EQ(k.hyperparameters(), expect);
  EXPECT_THROW(parse_kernel("se"), ParseError);
}

TEST(KernelExpr, RoundTrip) {
  for (const char* s : {"se(var=1.5,len=0.25)", "matern52(var=1,len=1)*cos(var=1,len=11)",
                        "(se(var=1,len=1)+se(var=2,len=2))*cos(var=1,len=3)",
                        "se_ard(var=1,len=[0.1,2.5])+matern52(var=0.3,len=7)"}) {
    const Kernel k = parse_kernel(s);
    EXPECT_EQ(to_string(parse_kernel(to_string(k))), to_string(k)) << s;
    EXPECT_EQ(parse_kernel(to_string(k)).hyperparameters(), k.hyperparameters()) << s;
  }
  const Kernel odd = Kernel::se(0.1 + 0.2, 1.0 / 3.0);
  EXPECT_EQ(parse_kernel(to_string(odd)).hyperparameters(), odd.hyperparameters());
}

TEST(KernelExpr, MalformedExpressionsReportPosition) {
  try {
    parse_kernel("se(var=1,len=1) * ");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_GE(e.pos, 17u);
  }
  EXPECT_THROW(parse_kernel("rbf(var=1,len=1"), ParseError);
  EXPECT_THROW(parse_kernel("foo(var=1,len=1)"), ParseError);
  EXPECT_THROW(parse_kernel("se(var=1,len=1,width=2)"), ParseError);
  EXPECT_THROW(parse_kernel("se(var=-1,len=1)"), ParseError);
  EXPECT_THROW(parse_kernel("se(var=1,len=[1,2])"), ParseError);
  EXPECT_THROW(parse_kernel("se(var=1,len=1) extra"), ParseError);
}
