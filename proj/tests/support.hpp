#pragma once

// Shared oracles for the unit tests: central differences and tolerance checks.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"

namespace testsupport {

using mixnoise::Engine;

/// |a - b| <= tol * max(|b|, floor).
inline bool rel_close(double a, double b, double tol, double floor = 1e-8) {
  return std::abs(a - b) <= tol * std::max(std::abs(b), floor);
}

/// Central-difference gradient of a scalar function with step h_i = step * (1 + |x_i|).
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step = 1e-6) {
  std::vector<double> xs(x.begin(), x.end()), g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * (1.0 + std::abs(x[i]));
    xs[i] = x[i] + h;
    const double fp = f(xs);
    xs[i] = x[i] - h;
    const double fm = f(xs);
    xs[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central differences of component i of a vector-valued function along x_i.
inline std::vector<double> fd_diagonal(const std::function<std::vector<double>(std::span<const double>)>& grad,
                                       std::span<const double> x, double step = 1e-5) {
  std::vector<double> xs(x.begin(), x.end()), h(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = step * (1.0 + std::abs(x[i]));
    xs[i] = x[i] + e;
    const double gp = grad(xs)[i];
    xs[i] = x[i] - e;
    const double gm = grad(xs)[i];
    xs[i] = x[i];
    h[i] = (gp - gm) / (2.0 * e);
  }
  return h;
}

/// Random surrogate with a controlled spread of log f over [-1, 1]^D.
inline mixnoise::PolynomialSurrogate random_surrogate(std::size_t dim, std::size_t channels, Engine& rng,
                                                      double offset, double scale, int degree = 6) {
  mixnoise::PolynomialSurrogate p(dim, channels, degree);
  for (std::size_t l = 0; l < channels; ++l) {
    p.coefficient(l, 0) = offset + 0.5 * scale * mixnoise::std_normal(rng);
    for (std::size_t k = 1; k < p.terms(); ++k) {
      int total = 0;
      for (int e : p.exponents(k)) total += e;
      p.coefficient(l, k) = scale * mixnoise::std_normal(rng) * std::pow(0.3, total - 1);
    }
  }
  return p;
}

/// Sample mean and variance with their standard errors.
struct MomentEstimate {
  double mean, var, se_mean, se_var;
};

inline MomentEstimate moments(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double r = (x - m) * (x - m);
    m2 += r;
    m4 += r * r;
  }
  m2 /= n;
  m4 /= n;
  return {m, m2 * n / (n - 1.0), std::sqrt(m2 / n), std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)};
}

}  // namespace testsupport
