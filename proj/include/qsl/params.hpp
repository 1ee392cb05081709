#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "qsl/error.hpp"

namespace qsl {

/// Model parameters (dimension, exponent, and either a frequency or a mass).
struct ModelParams {
  int dim = 1;
  double p = 3.0;
  std::optional<double> omega;
  std::optional<double> mass;

  /// Energy-subcritical upper bound on p; +inf for N <= 2.
  [[nodiscard]] double p_upper() const {
    if (dim <= 2) return std::numeric_limits<double>::infinity();
    return (3.0 * dim + 2.0) / (dim - 2.0);
  }
  /// Classical mass-critical exponent 1 + 4/N.
  [[nodiscard]] double p_classical_critical() const { return 1.0 + 4.0 / dim; }
  /// Quasilinear mass-critical exponent 3 + 4/N.
  [[nodiscard]] double p_quasilinear_critical() const { return 3.0 + 4.0 / dim; }

  [[nodiscard]] double frequency() const {
    require(omega.has_value() && *omega > 0.0, "omega > 0 is required");
    return *omega;
  }

  void validate() const {
    require(dim >= 1, "N must be >= 1");
    require(std::isfinite(p) && p > 1.0, "p must be > 1");
    if (dim >= 3) {
      std::ostringstream msg;
      msg << "p must be < (3N+2)/(N-2) = " << p_upper() << " for N = " << dim;
      require(p < p_upper(), msg.str());
    }
    if (omega) require(std::isfinite(*omega) && *omega > 0.0, "omega must be > 0");
    if (mass) require(std::isfinite(*mass) && *mass > 0.0, "c must be > 0");
  }

  static ModelParams with_omega(int dim, double p, double omega) {
    ModelParams m{dim, p, omega, std::nullopt};
    m.validate();
    return m;
  }
  static ModelParams with_mass(int dim, double p, double c) {
    ModelParams m{dim, p, std::nullopt, c};
    m.validate();
    return m;
  }
};

}  // namespace qsl
