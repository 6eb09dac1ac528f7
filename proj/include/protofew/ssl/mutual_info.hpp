#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace protofew::ssl {

/// Joint distribution over (x, y), row-major [m, n], entries >= 0 summing
/// to 1 within 1e-12.
class DiscreteJoint {
 public:
  DiscreteJoint(std::size_t rows, std::size_t cols, std::vector<double> p);

  static DiscreteJoint independent(std::span<const double> px, std::span<const double> py);
  static DiscreteJoint identity(std::size_t k);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t x, std::size_t y) const { return p_[x * cols_ + y]; }
  std::span<const double> values() const { return p_; }
  std::vector<double> marginal_x() const;
  std::vector<double> marginal_y() const;

 private:
  std::size_t rows_, cols_;
  std::vector<double> p_;
};

/// Sum of p log(p / (px py)) in nats, with 0 log 0 = 0.
double mi_discrete(const DiscreteJoint& joint);

/// nce_loss on a plain row-major [B,B] table. Entries may be -inf (masked
/// pairs); a row whose positive is -inf is an error.
double nce_loss_value(std::span<const double> table, std::size_t batch);

struct InfoNceBoundReport {
  double mi = 0;
  double mean_bound = 0;  // mean over batches of ln B - nce_loss
  double standard_error = 0;
  std::size_t batch_size = 0;
  std::size_t num_batches = 0;

  /// mean_bound <= mi + 3 standard errors
  bool holds() const { return mean_bound <= mi + 3 * standard_error; }
};

/// Draws `num_batches` batches of `batch_size` iid pairs from the joint and
/// scores them with the exact critic log p(x,y) / (p(x) p(y)); pairs of zero
/// joint mass are masked out of the negatives.
InfoNceBoundReport verify_infonce_bound(const DiscreteJoint& joint, std::size_t batch_size,
                                        std::size_t num_batches, std::uint64_t seed);

}  // namespace protofew::ssl
