#include "adcloud/trainer/exact_sum.hpp"

#include <cmath>

#include "adcloud/error.hpp"

namespace adcloud::trainer {

void ExactSum::add(double x) {
  if (!std::isfinite(x)) throw Error(Errc::NonFiniteGradient, "non-finite term");
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
  if (!std::isfinite(x)) throw Error(Errc::NonFiniteGradient, "sum overflowed");
}

void ExactSum::merge(const ExactSum& other) {
  for (double p : other.partials_) add(p);
}

// Partials are taken as-is: they come from another ExactSum and are already
// non-overlapping in increasing magnitude.
ExactSum ExactSum::from_partials(std::vector<double> p) {
  for (double x : p) {
    if (!std::isfinite(x)) throw Error(Errc::NonFiniteGradient, "non-finite partial");
  }
  ExactSum s;
  s.partials_ = std::move(p);
  return s;
}

// Round-half-even correction as in CPython's math.fsum.
double ExactSum::value() const {
  if (partials_.empty()) return 0.0;
  std::size_t n = partials_.size();
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

}  // namespace adcloud::trainer
