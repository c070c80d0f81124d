#pragma once

#include <vector>

namespace adcloud::trainer {

/// Error-free floating-point accumulator (Shewchuk partials). The rounded
/// value depends only on the multiset of inputs, never on their order or on
/// how partial sums were merged.
class ExactSum {
 public:
  void add(double x);
  void merge(const ExactSum& other);
  /// Correctly rounded sum.
  double value() const;
  const std::vector<double>& partials() const noexcept { return partials_; }
  static ExactSum from_partials(std::vector<double> p);

 private:
  std::vector<double> partials_;
};

}  // namespace adcloud::trainer
