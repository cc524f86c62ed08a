#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lstmens {

using RealVector = std::vector<double>;

/// Thrown for shape disagreements between tensors.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// out[j] += sum_r x[r] * w(r, j), i.e. out += w^T x.
void accumulate_transposed_product(const Matrix& w, std::span<const double> x, std::span<double> out);

/// out[r] += sum_j w(r, j) * y[j], i.e. out += w y.
void accumulate_product(const Matrix& w, std::span<const double> y, std::span<double> out);

/// w(r, j) += x[r] * y[j].
void accumulate_outer(Matrix& w, std::span<const double> x, std::span<const double> y);

double sigmoid(double x);
RealVector sigmoid(std::span<const double> v);
RealVector tanh_vec(std::span<const double> v);

/// Max-subtracted softmax; entries are positive and sum to one.
RealVector softmax(std::span<const double> logits);

/// log(softmax(logits)) computed through log-sum-exp.
RealVector log_softmax(std::span<const double> logits);

bool all_finite(std::span<const double> v);

/// xoshiro256** seeded through splitmix64. Every stochastic decision in the
/// library draws from this generator, so sequences are identical on every
/// platform for a given seed and call order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Inclusive uniform integer in [low, high]; rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t low, std::int64_t high);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double low, double high);

  /// Standard normal via the Box-Muller transform (cached second variate).
  double normal();

  std::uint64_t seed() const { return seed_; }

  /// Independent generator derived from this generator's seed and a stream id.
  /// Does not advance this generator.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace lstmens
