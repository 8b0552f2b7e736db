#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixnoise {

// Error categories. The CLI maps them onto exit codes 1, 2 and 3.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

/// N x D row-major array of per-pixel parameter vectors, with a flat view.
class Field {
 public:
  Field() = default;
  Field(std::size_t pixels, std::size_t dim, double fill = 0.0)
      : pixels_(pixels), dim_(dim), data_(pixels * dim, fill) {}

  std::size_t pixels() const { return pixels_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t n, std::size_t d) { return data_[n * dim_ + d]; }
  double operator()(std::size_t n, std::size_t d) const { return data_[n * dim_ + d]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t n) { return {data_.data() + n * dim_, dim_}; }
  std::span<const double> row(std::size_t n) const { return {data_.data() + n * dim_, dim_}; }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double x) { std::fill(data_.begin(), data_.end(), x); }
  bool same_shape(const Field& o) const { return pixels_ == o.pixels_ && dim_ == o.dim_; }
  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t pixels_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Random streams

using Engine = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stream identifiers that are not pixel indices.
enum class Stream : std::uint64_t {
  kSelect = 0xffff'ffff'ffff'ff00ULL,
  kPmala,
  kData,
  kLayout,
  kCalibration,
  kKde,
  kInit,
};

/// Engine keyed by (seed, counter, id). Identical keys give identical streams,
/// independent of the order in which streams are created.
inline Engine keyed_engine(std::uint64_t seed, std::uint64_t counter, std::uint64_t id) {
  return Engine(splitmix64(seed ^ splitmix64(counter ^ splitmix64(id))));
}
inline Engine keyed_engine(std::uint64_t seed, std::uint64_t counter, Stream id) {
  return keyed_engine(seed, counter, static_cast<std::uint64_t>(id));
}

inline double uniform01(Engine& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}
inline double std_normal(Engine& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// ---------------------------------------------------------------------------
// Scalar helpers

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = -kInf;
  for (double x : xs) m = std::max(m, x);
  if (m == -kInf || m == kInf) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {
// 1 - 1/x^2 + 3/x^4 - 15/x^6 + ... minus one, for x << 0.
inline double mills_series_minus_one(double x) {
  const double u = 1.0 / (x * x);
  double term = 1.0, sum = 0.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) * u;
    sum += term;
  }
  return sum;
}
inline constexpr double kAsymptoticCut = -30.0;
}  // namespace detail

/// log Phi(x), finite down to x ~ -1e150.
inline double log_ndtr(double x) {
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  if (x > detail::kAsymptoticCut) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  return -0.5 * x * x - std::log(-x) - kLogSqrt2Pi + std::log1p(detail::mills_series_minus_one(x));
}

/// phi(x) / Phi(x) and x + phi(x)/Phi(x), the latter without cancellation.
inline std::pair<double, double> inverse_mills(double x) {
  if (x > detail::kAsymptoticCut) {
    const double r = std::exp(-0.5 * x * x - kLogSqrt2Pi - log_ndtr(x));
    return {r, x + r};
  }
  const double sm1 = detail::mills_series_minus_one(x);
  const double r = -x / (1.0 + sm1);
  return {r, x * sm1 / (1.0 + sm1)};
}

// ---------------------------------------------------------------------------
// Second-order forward-mode scalar: value, first and second derivative with
// respect to a single underlying variable.

struct Jet {
  double v = 0.0, d = 0.0, dd = 0.0;

  static constexpr Jet variable(double x) { return {x, 1.0, 0.0}; }
  static constexpr Jet constant(double x) { return {x, 0.0, 0.0}; }
};

inline Jet operator+(Jet a, Jet b) { return {a.v + b.v, a.d + b.d, a.dd + b.dd}; }
inline Jet operator-(Jet a, Jet b) { return {a.v - b.v, a.d - b.d, a.dd - b.dd}; }
inline Jet operator-(Jet a) { return {-a.v, -a.d, -a.dd}; }
inline Jet operator*(Jet a, Jet b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d, a.dd * b.v + 2.0 * a.d * b.d + a.v * b.dd};
}
inline Jet operator+(Jet a, double c) { return {a.v + c, a.d, a.dd}; }
inline Jet operator+(double c, Jet a) { return a + c; }
inline Jet operator-(Jet a, double c) { return {a.v - c, a.d, a.dd}; }
inline Jet operator-(double c, Jet a) { return {c - a.v, -a.d, -a.dd}; }
inline Jet operator*(Jet a, double c) { return {a.v * c, a.d * c, a.dd * c}; }
inline Jet operator*(double c, Jet a) { return a * c; }

// Applies a scalar function with known f, f', f'' at a.v.
inline Jet chain(Jet a, double f, double f1, double f2) {
  return {f, f1 * a.d, f2 * a.d * a.d + f1 * a.dd};
}

inline Jet recip(Jet a) {
  const double r = 1.0 / a.v;
  return chain(a, r, -r * r, 2.0 * r * r * r);
}
inline Jet operator/(Jet a, Jet b) { return a * recip(b); }
inline Jet operator/(Jet a, double c) { return a * (1.0 / c); }
inline Jet exp(Jet a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}
inline Jet log(Jet a) { return chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v)); }
inline Jet log1p(Jet a) {
  const double r = 1.0 / (1.0 + a.v);
  return chain(a, std::log1p(a.v), r, -r * r);
}
inline Jet sqrt(Jet a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet square(Jet a) { return a * a; }
inline Jet log_ndtr(Jet a) {
  const auto [r, xr] = inverse_mills(a.v);
  return chain(a, log_ndtr(a.v), r, -r * xr);
}

}  // namespace mixnoise
