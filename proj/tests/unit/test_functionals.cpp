#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "qsl/functionals.hpp"

using namespace qsl;

namespace {

constexpr double pi = std::numbers::pi;

double quad(auto&& f) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -std::numeric_limits<double>::infinity(),
                                                                       std::numeric_limits<double>::infinity(), 15, 1e-14);
}

// Gaussian e^{-x^2}: the three energy integrals by adaptive quadrature of
// the analytic integrands.
struct GaussOracle {
  double A = quad([](double x) { return 4.0 * x * x * std::exp(-2.0 * x * x); });
  double B = quad([](double x) { return std::exp(-2.0 * x * x) * 4.0 * x * x * std::exp(-2.0 * x * x); });
  double M = quad([](double x) { return std::exp(-2.0 * x * x); });
  double C(double p) const {
    return quad([p](double x) { return std::exp(-(p + 1.0) * x * x); });
  }
};

Field gaussian(double h, double R, double chirp = 0.0) {
  return sample(Grid::line(h, R), [chirp](double x) { return std::exp(-x * x) * std::polar(1.0, chirp * x * x); });
}

Field random_bump(const GridPtr& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  const double a1 = u(rng), a2 = u(rng), s1 = u(rng), s2 = u(rng), c = u(rng);
  return sample(g, [=](double x) {
    return complex(a1 * std::exp(-s1 * x * x) + 0.5 * a2 * std::exp(-s2 * (x - c) * (x - c)),
                   0.3 * a2 * std::exp(-s1 * (x + c) * (x + c)));
  });
}

}  // namespace

TEST(GaussOracle, MatchesClosedForms) {
  const GaussOracle o;
  EXPECT_NEAR(o.A, std::sqrt(pi / 2.0), 1e-12);
  EXPECT_NEAR(o.B, std::sqrt(pi) / 4.0, 1e-12);
  EXPECT_NEAR(o.M, std::sqrt(pi / 2.0), 1e-12);
  EXPECT_NEAR(o.C(3.0), std::sqrt(pi / 4.0), 1e-12);
}

TEST(Energy, ZeroField) {
  const auto g = Grid::line(0.1, 4.0);
  const auto m = ModelParams::with_omega(1, 3.0, 1.0);
  const Field z(g);
  EXPECT_EQ(energy(z, m), 0.0);
  EXPECT_EQ(action_omega(z, m), 0.0);
  EXPECT_EQ(virial_Q(z, m), 0.0);
  EXPECT_EQ(pohozaev_P(z, m), 0.0);
  EXPECT_EQ(nehari_I(z, m), 0.0);
  EXPECT_EQ(variance(z), 0.0);
  EXPECT_EQ(variance_prime(z), 0.0);
}

TEST(Energy, GaussianAgainstQuadrature) {
  const GaussOracle o;
  const double expected = 0.5 * o.A + o.B - o.C(3.0) / 4.0;
  const Field f = gaussian(1e-3, 8.0);
  EXPECT_NEAR(energy(f, ModelParams::with_omega(1, 3.0, 1.0)), expected, 1e-6);
}

TEST(Energy, PhaseInvariance) {
  std::mt19937_64 rng(5);
  const auto g = Grid::line(0.05, 8.0);
  const auto m = ModelParams::with_omega(1, 4.0, 1.5);
  for (int t = 0; t < 10; ++t) {
    const Field f = random_bump(g, rng);
    const double theta = 0.7 * t;
    const Field r = std::polar(1.0, theta) * f;
    EXPECT_NEAR(energy(r, m), energy(f, m), 1e-12 * (1.0 + std::abs(energy(f, m))));
    EXPECT_NEAR(virial_Q(r, m), virial_Q(f, m), 1e-12 * (1.0 + std::abs(virial_Q(f, m))));
  }
}

TEST(Energy, NonFiniteIsRejected) {
  Field f = gaussian(0.1, 4.0);
  f[10] = complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
  EXPECT_THROW(energy(f, ModelParams::with_omega(1, 3.0, 1.0)), NumericalError);
}

TEST(Action, DiffersFromEnergyByMass) {
  std::mt19937_64 rng(9);
  const auto g = Grid::line(0.05, 8.0);
  const auto m = ModelParams::with_omega(1, 3.0, 2.5);
  for (int t = 0; t < 5; ++t) {
    const Field f = random_bump(g, rng);
    EXPECT_NEAR(action_omega(f, m) - energy(f, m), 1.25 * mass(f), 1e-12 * (1.0 + mass(f)));
  }
  EXPECT_THROW(action_omega(gaussian(0.1, 4.0), ModelParams{1, 3.0, std::nullopt, std::nullopt}), PreconditionError);
}

TEST(VirialQ, GaussianP5AgainstQuadrature) {
  const GaussOracle o;
  const double expected = o.A + 3.0 * o.B - (4.0 / 12.0) * o.C(5.0);
  EXPECT_NEAR(virial_Q(gaussian(1e-3, 8.0), ModelParams::with_omega(1, 5.0, 1.0)), expected, 1e-6);
}

TEST(Pohozaev, TwoDimensionalStructure) {
  const auto g = Grid::radial(2, 0.05, 8.0);
  const Field f = sample(g, [](double r) { return complex(std::exp(-r * r)); });
  const auto m = ModelParams::with_omega(2, 3.0, 1.3);
  const Integrals I = integrals(f, 3.0);
  EXPECT_NEAR(pohozaev_P(f, m), 0.65 * I.mass - I.power / 4.0, 1e-13);
}

TEST(Nehari, IdentityOnNehariSet) {
  std::mt19937_64 rng(21);
  const auto g = Grid::line(0.05, 10.0);
  for (double p : {4.5, 5.0, 9.0}) {
    const auto m = ModelParams::with_omega(1, p, 0.8);
    const Field f = random_bump(g, rng);
    // Project onto I = 0 along the ray t f.
    auto I_of = [&](double t) { return nehari_I(complex(t) * f, m); };
    boost::uintmax_t it = 200;
    const auto [lo, hi] = boost::math::tools::bisect(I_of, 1e-3, 50.0, boost::math::tools::eps_tolerance<double>(50), it);
    const Field u = complex(0.5 * (lo + hi)) * f;
    const Integrals I = integrals(u, p);
    ASSERT_NEAR(nehari_I(u, m), 0.0, 1e-9 * (I.grad_sq + I.power));
    EXPECT_NEAR(action_omega(u, m), formulas::nehari_action(I, p, 0.8), 1e-9 * (1.0 + std::abs(action_omega(u, m))));
  }
}

TEST(Variance, GaussianMoments) {
  const Field f = gaussian(1e-3, 8.0);
  EXPECT_NEAR(variance(f), std::sqrt(pi / 2.0) / 4.0, 1e-6);
  EXPECT_EQ(variance_prime(f), 0.0);
}

TEST(Variance, ChirpedGaussianHasPositiveDerivative) {
  // Im (x phi' conj phi) = 2 x^2 |phi|^2 for phi = e^{-x^2 + i x^2}.
  const Field f = gaussian(1e-3, 8.0, 1.0);
  const double vp = variance_prime(f);
  EXPECT_GT(vp, 0.0);
  EXPECT_NEAR(vp, 2.0 * std::sqrt(pi / 2.0), 1e-5);
}

TEST(Variance, RadialUsesRadius) {
  const auto g = Grid::radial(3, 0.01, 8.0);
  const Field f = sample(g, [](double r) { return complex(std::exp(-r * r / 2.0)); });
  // int r^2 e^{-r^2} d^3x = 4 pi * 3 sqrt(pi) / 8.
  EXPECT_NEAR(variance(f), 1.5 * std::pow(pi, 1.5), 1e-3);
}

TEST(Quasilinear, TwoFormsAgree) {
  std::mt19937_64 rng(2);
  for (double h : {0.05, 0.02}) {
    const auto g = Grid::line(h, 10.0);
    for (int t = 0; t < 10; ++t) {
      const Integrals I = integrals(random_bump(g, rng), 3.0);
      EXPECT_NEAR(I.quasilinear_alt, I.quasilinear, 10.0 * h * h * I.quasilinear);
    }
  }
}

TEST(Quasilinear, ModulusGradientBound) {
  std::mt19937_64 rng(4);
  const auto g = Grid::line(0.05, 10.0);
  const auto m = ModelParams::with_omega(1, 3.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const Field f = random_bump(g, rng);
    const Integrals I = integrals(f, 3.0);
    EXPECT_LE(I.grad_modulus_sq, I.grad_sq * (1.0 + 1e-14));
    EXPECT_LE(energy(to_complex(modulus(f)), m), energy(f, m) + 1e-12);
  }
}

TEST(Scaling, LawsHoldForSampledRescaling) {
  const double p = 5.0;
  for (int N : {1, 3}) {
    const auto g = N == 1 ? Grid::line(0.005, 20.0) : Grid::radial(N, 0.005, 20.0);
    auto profile = [](double x) { return complex(std::exp(-x * x) * (1.0 + 0.3 * x * x)); };
    const Field base = sample(g, profile);
    const ScalingLaw law{N, p, integrals(base, p)};
    for (double s : {0.5, 1.7}) {
      const Field scaled = sample(g, [&](double x) { return std::pow(s, 0.5 * N) * profile(s * x); });
      const Integrals I = integrals(scaled, p);
      EXPECT_NEAR(I.mass, law.base.mass, 1e-4 * I.mass);
      EXPECT_NEAR(I.grad_sq, law.grad_sq(s), 1e-4 * I.grad_sq);
      EXPECT_NEAR(I.quasilinear, law.quasilinear(s), 1e-4 * I.quasilinear);
      EXPECT_NEAR(I.power, law.power(s), 1e-4 * I.power);
    }
  }
}

TEST(Scaling, EnergyDerivativeIsVirialOverSigma) {
  const auto g = Grid::line(0.05, 10.0);
  const Field f = gaussian(0.05, 10.0);
  const ScalingLaw law{1, 9.0, integrals(f, 9.0)};
  for (double s : {0.5, 1.3, 2.0}) {
    const double d = 1e-5;
    const double fd = (law.energy(s + d) - law.energy(s - d)) / (2 * d);
    EXPECT_NEAR(fd, law.virial(s) / s, 1e-7 * (1.0 + std::abs(fd)));
  }
  (void)g;
}

TEST(Gradient, MatchesDirectionalDerivatives) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  for (auto g : {Grid::line(0.05, 8.0), Grid::radial(3, 0.05, 8.0)}) {
    for (double p : {2.0, 5.0}) {
      const auto m = ModelParams::with_omega(g->dim(), p, 1.0);
      const Field f = random_bump(g, rng);
      const Field G = energy_gradient(f, p);
      for (int t = 0; t < 5; ++t) {
        Field d(g);
        for (std::size_t i = 0; i < d.size(); ++i)
          if (!g->is_pinned(i)) d[i] = complex(n01(rng), n01(rng)) * std::exp(-0.1 * g->coords()[i] * g->coords()[i]);
        const double eps = 1e-3;
        auto e_at = [&](double t) { return energy(f + complex(t) * d, m); };
        const double fd = (-e_at(2 * eps) + 8 * e_at(eps) - 8 * e_at(-eps) + e_at(-2 * eps)) / (12 * eps);
        EXPECT_NEAR(inner(G, d), fd, 1e-6 * std::abs(fd)) << g->describe() << " p=" << p;
      }
    }
  }
}

TEST(Gradient, NehariPairingIsExact) {
  std::mt19937_64 rng(8);
  const auto g = Grid::radial(2, 0.05, 8.0);
  const Field f = random_bump(g, rng);
  const Integrals I = integrals(f, 3.0);
  const double pairing = inner(energy_gradient(f, 3.0), f);
  EXPECT_NEAR(pairing, I.grad_sq + 4.0 * I.quasilinear - I.power, 1e-10 * (I.grad_sq + I.power));
}

TEST(GagliardoNirenberg, Exponents) {
  const auto g = Grid::radial(4, 0.1, 4.0);
  const Field f = sample(g, [](double r) { return complex(std::exp(-r * r)); });
  const GNTerms t = gn_functional(f, ModelParams::with_omega(4, 4.0, 1.0));
  EXPECT_NEAR(t.theta, 0.5, 1e-15);
  EXPECT_NEAR(t.exponent, 1.0, 1e-15);
  EXPECT_NEAR(gn_theta(3, 3.0), 0.2, 1e-15);
  EXPECT_THROW(gn_functional(gaussian(0.1, 4.0), ModelParams::with_omega(1, 3.0, 1.0)), PreconditionError);
}

TEST(GagliardoNirenberg, EmpiricalConstantIsStable) {
  auto max_ratio = [](double h) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.3, 3.0);
    const auto g = Grid::radial(3, h, 16.0);
    const auto m = ModelParams::with_omega(3, 4.0, 1.0);
    double best = 0.0;
    for (int t = 0; t < 50; ++t) {
      const double a = u(rng), s = u(rng), c = u(rng);
      const Field f = sample(g, [=](double r) { return complex(a * std::exp(-s * (r - c) * (r - c)) + a * std::exp(-s * r * r)); });
      best = std::max(best, gn_functional(f, m).ratio());
    }
    return best;
  };
  const double r1 = max_ratio(0.04), r2 = max_ratio(0.02);
  EXPECT_TRUE(std::isfinite(r1));
  EXPECT_NEAR(r1, r2, 0.02 * r2);
}

TEST(Report, JsonHasAllScalars) {
  const auto m = ModelParams::with_omega(1, 3.0, 1.0);
  const FunctionalReport r = report(gaussian(0.05, 8.0), m);
  EXPECT_NEAR(r.E, r.kinetic + r.quasilinear - r.potential, 1e-14);
  EXPECT_NEAR(r.E_omega, r.E + 0.5 * r.mass, 1e-14);
  const nlohmann::json j = r;
  for (const char* key : {"mass", "kinetic", "quasilinear", "potential", "E", "E_omega", "Q", "P", "I_omega", "V", "Vprime"})
    EXPECT_TRUE(j.contains(key)) << key;
}
