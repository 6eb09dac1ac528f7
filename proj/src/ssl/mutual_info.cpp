#include "protofew/ssl/mutual_info.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "protofew/errors.hpp"

namespace protofew::ssl {

DiscreteJoint::DiscreteJoint(std::size_t rows, std::size_t cols, std::vector<double> p)
    : rows_(rows), cols_(cols), p_(std::move(p)) {
  if (rows_ == 0 || cols_ == 0 || p_.size() != rows_ * cols_) {
    throw ContractViolation("DiscreteJoint: shape/size mismatch");
  }
  double total = 0;
  for (double v : p_) {
    if (!(v >= 0) || !std::isfinite(v)) {
      throw ContractViolation("DiscreteJoint: entries must be finite and nonnegative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ContractViolation("DiscreteJoint: total mass " + std::to_string(total) + " != 1");
  }
}

DiscreteJoint DiscreteJoint::independent(std::span<const double> px, std::span<const double> py) {
  std::vector<double> p;
  p.reserve(px.size() * py.size());
  for (double a : px) {
    for (double b : py) p.push_back(a * b);
  }
  return {px.size(), py.size(), std::move(p)};
}

DiscreteJoint DiscreteJoint::identity(std::size_t k) {
  std::vector<double> p(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) p[i * k + i] = 1.0 / static_cast<double>(k);
  return {k, k, std::move(p)};
}

std::vector<double> DiscreteJoint::marginal_x() const {
  std::vector<double> m(rows_, 0.0);
  for (std::size_t x = 0; x < rows_; ++x) {
    for (std::size_t y = 0; y < cols_; ++y) m[x] += (*this)(x, y);
  }
  return m;
}

std::vector<double> DiscreteJoint::marginal_y() const {
  std::vector<double> m(cols_, 0.0);
  for (std::size_t x = 0; x < rows_; ++x) {
    for (std::size_t y = 0; y < cols_; ++y) m[y] += (*this)(x, y);
  }
  return m;
}

double mi_discrete(const DiscreteJoint& joint) {
  const auto px = joint.marginal_x(), py = joint.marginal_y();
  double mi = 0;
  for (std::size_t x = 0; x < joint.rows(); ++x) {
    for (std::size_t y = 0; y < joint.cols(); ++y) {
      const double p = joint(x, y);
      if (p > 0) mi += p * std::log(p / (px[x] * py[y]));
    }
  }
  // Rounding can leave a tiny negative for independent joints.
  return std::max(mi, 0.0);
}

double nce_loss_value(std::span<const double> table, std::size_t batch) {
  if (batch < 2) throw ContractViolation("nce_loss: batch size must be at least 2 (no negatives)");
  if (table.size() != batch * batch) throw ContractViolation("nce_loss: table is not [B,B]");
  double loss = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto row = table.subspan(i * batch, batch);
    if (!std::isfinite(row[i])) {
      throw NumericDomainError("nce_loss: positive score of row " + std::to_string(i) +
                               " is not finite");
    }
    const double hi = *std::max_element(row.begin(), row.end());
    double s = 0;
    for (double v : row) s += std::exp(v - hi);
    loss += hi + std::log(s) - row[i];
  }
  return loss / static_cast<double>(batch);
}

InfoNceBoundReport verify_infonce_bound(const DiscreteJoint& joint, std::size_t batch_size,
                                        std::size_t num_batches, std::uint64_t seed) {
  if (batch_size < 2) throw ContractViolation("verify_infonce_bound: batch_size must be >= 2");
  if (num_batches < 2) throw ContractViolation("verify_infonce_bound: need at least 2 batches");
  const auto px = joint.marginal_x(), py = joint.marginal_y();
  const std::size_t m = joint.rows(), n = joint.cols();
  std::vector<double> critic(m * n, -std::numeric_limits<double>::infinity());
  for (std::size_t x = 0; x < m; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      if (joint(x, y) > 0) critic[x * n + y] = std::log(joint(x, y) / (px[x] * py[y]));
    }
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> draw(joint.values().begin(), joint.values().end());
  std::vector<std::size_t> xs(batch_size), ys(batch_size);
  std::vector<double> table(batch_size * batch_size);
  const double log_b = std::log(static_cast<double>(batch_size));
  double sum = 0, sum_sq = 0;
  for (std::size_t b = 0; b < num_batches; ++b) {
    for (std::size_t i = 0; i < batch_size; ++i) {
      const std::size_t cell = draw(rng);
      xs[i] = cell / n;
      ys[i] = cell % n;
    }
    for (std::size_t i = 0; i < batch_size; ++i) {
      for (std::size_t j = 0; j < batch_size; ++j) table[i * batch_size + j] = critic[xs[i] * n + ys[j]];
    }
    const double bound = log_b - nce_loss_value(table, batch_size);
    sum += bound;
    sum_sq += bound * bound;
  }
  const double nb = static_cast<double>(num_batches);
  const double mean = sum / nb;
  const double var = std::max(0.0, (sum_sq - nb * mean * mean) / (nb - 1));
  return {mi_discrete(joint), mean, std::sqrt(var / nb), batch_size, num_batches};
}

}  // namespace protofew::ssl
