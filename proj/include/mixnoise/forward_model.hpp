#pragma once

#include <array>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "mixnoise/core.hpp"

namespace mixnoise {

/// Axis-aligned validity box [l_1,u_1] x ... x [l_D,u_D].
struct ValidityBox {
  std::vector<double> lower;
  std::vector<double> upper;

  ValidityBox() = default;
  ValidityBox(std::vector<double> l, std::vector<double> u) : lower(std::move(l)), upper(std::move(u)) {
    validate();
  }
  static ValidityBox cube(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }

  std::size_t dim() const { return lower.size(); }
  double width(std::size_t d) const { return upper[d] - lower[d]; }
  bool contains(std::span<const double> x) const {
    for (std::size_t d = 0; d < dim(); ++d)
      if (x[d] < lower[d] || x[d] > upper[d]) return false;
    return true;
  }
  void validate() const {
    if (lower.size() != upper.size()) throw ConfigError("validity box: bound size mismatch");
    for (std::size_t d = 0; d < lower.size(); ++d)
      if (!(lower[d] < upper[d])) throw ConfigError("validity box: lower bound must be below upper bound");
  }
  friend bool operator==(const ValidityBox&, const ValidityBox&) = default;
};

/// Log forward model values and their derivatives at one parameter vector.
/// grad and hess_diag are L x D row-major.
struct ForwardEval {
  std::vector<double> log_f;
  std::vector<double> grad;
  std::vector<double> hess_diag;

  void resize(std::size_t channels, std::size_t dim) {
    log_f.resize(channels);
    grad.resize(channels * dim);
    hess_diag.resize(channels * dim);
  }
};

/// A forward model given through per-channel logarithms z_l = log f_l(theta).
template <class M>
concept ForwardModel = requires(const M& m, std::span<const double> theta, ForwardEval& out,
                                std::span<double> values) {
  { m.channels() } -> std::convertible_to<std::size_t>;
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.evaluate(theta, out) };
  { m.evaluate_values(theta, values) };
};

/// Dense multivariate polynomial surrogates of log f_l, one per channel,
/// sharing a monomial basis of total degree <= degree.
class PolynomialSurrogate {
 public:
  static constexpr int kMaxDegree = 6;

  PolynomialSurrogate() = default;
  PolynomialSurrogate(std::size_t dim, std::size_t channels, int degree = kMaxDegree)
      : dim_(dim), channels_(channels), degree_(degree) {
    if (degree < 0 || degree > kMaxDegree) throw ConfigError("polynomial degree must be in [0, 6]");
    if (dim == 0 || dim > 10) throw ConfigError("polynomial dimension must be in [1, 10]");
    build_basis();
    coef_.assign(channels_ * exponents_.size(), 0.0);
  }

  std::size_t dim() const { return dim_; }
  std::size_t channels() const { return channels_; }
  int degree() const { return degree_; }
  std::size_t terms() const { return exponents_.size(); }

  /// Exponents of monomial k, graded lexicographic order (constant first).
  std::span<const int> exponents(std::size_t k) const { return {exponents_[k].data(), dim_}; }
  std::size_t index_of(std::span<const int> e) const {
    for (std::size_t k = 0; k < exponents_.size(); ++k)
      if (std::equal(e.begin(), e.end(), exponents_[k].begin())) return k;
    throw ConfigError("monomial not in basis");
  }

  double& coefficient(std::size_t channel, std::size_t k) { return coef_[channel * terms() + k]; }
  double coefficient(std::size_t channel, std::size_t k) const { return coef_[channel * terms() + k]; }

  void evaluate_values(std::span<const double> theta, std::span<double> out) const {
    thread_local std::vector<double> mono;
    monomials(theta, mono, nullptr, nullptr);
    const std::size_t t = terms();
    for (std::size_t l = 0; l < channels_; ++l) {
      const double* c = coef_.data() + l * t;
      double s = 0.0;
      for (std::size_t k = 0; k < t; ++k) s += c[k] * mono[k];
      out[l] = s;
    }
  }

  void evaluate(std::span<const double> theta, ForwardEval& out) const {
    thread_local std::vector<double> mono, dmono, d2mono;
    monomials(theta, mono, &dmono, &d2mono);
    out.resize(channels_, dim_);
    const std::size_t t = terms();
    for (std::size_t l = 0; l < channels_; ++l) {
      const double* c = coef_.data() + l * t;
      double s = 0.0;
      for (std::size_t k = 0; k < t; ++k) s += c[k] * mono[k];
      out.log_f[l] = s;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double* dm = dmono.data() + d * t;
        const double* d2m = d2mono.data() + d * t;
        double g = 0.0, h = 0.0;
        for (std::size_t k = 0; k < t; ++k) {
          g += c[k] * dm[k];
          h += c[k] * d2m[k];
        }
        out.grad[l * dim_ + d] = g;
        out.hess_diag[l * dim_ + d] = h;
      }
    }
  }

  friend bool operator==(const PolynomialSurrogate& a, const PolynomialSurrogate& b) {
    return a.dim_ == b.dim_ && a.channels_ == b.channels_ && a.degree_ == b.degree_ && a.coef_ == b.coef_;
  }

 private:
  void build_basis() {
    exponents_.clear();
    std::array<int, 10> e{};
    for (int total = 0; total <= degree_; ++total) {
      // Compositions of `total` into dim_ parts, first coordinate descending.
      auto rec = [&](auto&& self, std::size_t pos, int remaining) -> void {
        if (pos + 1 == dim_) {
          e[pos] = remaining;
          exponents_.push_back(e);
          return;
        }
        for (int k = remaining; k >= 0; --k) {
          e[pos] = k;
          self(self, pos + 1, remaining - k);
        }
      };
      rec(rec, 0, total);
    }
  }

  // Monomial values, and per-dimension first and second partials (D x terms).
  void monomials(std::span<const double> x, std::vector<double>& mono, std::vector<double>* dmono,
                 std::vector<double>* d2mono) const {
    std::array<std::array<double, kMaxDegree + 1>, 10> pw{};
    for (std::size_t d = 0; d < dim_; ++d) {
      pw[d][0] = 1.0;
      for (int k = 1; k <= degree_; ++k) pw[d][k] = pw[d][k - 1] * x[d];
    }
    const std::size_t t = terms();
    mono.resize(t);
    if (dmono) {
      dmono->assign(dim_ * t, 0.0);
      d2mono->assign(dim_ * t, 0.0);
    }
    for (std::size_t k = 0; k < t; ++k) {
      const auto& e = exponents_[k];
      double v = 1.0;
      for (std::size_t d = 0; d < dim_; ++d) v *= pw[d][e[d]];
      mono[k] = v;
      if (!dmono) continue;
      for (std::size_t d = 0; d < dim_; ++d) {
        if (e[d] == 0) continue;
        double rest = 1.0;
        for (std::size_t o = 0; o < dim_; ++o)
          if (o != d) rest *= pw[o][e[o]];
        (*dmono)[d * t + k] = e[d] * pw[d][e[d] - 1] * rest;
        if (e[d] >= 2) (*d2mono)[d * t + k] = e[d] * (e[d] - 1) * pw[d][e[d] - 2] * rest;
      }
    }
  }

  std::size_t dim_ = 0;
  std::size_t channels_ = 0;
  int degree_ = kMaxDegree;
  std::vector<std::array<int, 10>> exponents_;
  std::vector<double> coef_;
};

static_assert(ForwardModel<PolynomialSurrogate>);

}  // namespace mixnoise
