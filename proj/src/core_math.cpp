#include "lstmens/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lstmens {

namespace {

// Saturated outputs are kept inside the open range of the nonlinearity.
constexpr double kTiny = std::numeric_limits<double>::denorm_min();
const double kBelowOne = std::nextafter(1.0, 0.0);

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("matrix " + shape_string() + " given " + std::to_string(values_.size()) +
                         " values");
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw DimensionError("ragged row in Matrix::from_rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape_string() + " times " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

void accumulate_transposed_product(const Matrix& w, std::span<const double> x,
                                   std::span<double> out) {
  if (x.size() != w.rows() || out.size() != w.cols()) {
    throw DimensionError("w^T x shape mismatch: w " + w.shape_string() + ", x " +
                         std::to_string(x.size()) + ", out " + std::to_string(out.size()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto wr = w.row(r);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += xr * wr[j];
  }
}

void accumulate_product(const Matrix& w, std::span<const double> y, std::span<double> out) {
  if (y.size() != w.cols() || out.size() != w.rows()) {
    throw DimensionError("w y shape mismatch: w " + w.shape_string() + ", y " +
                         std::to_string(y.size()) + ", out " + std::to_string(out.size()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto wr = w.row(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) acc += wr[j] * y[j];
    out[r] += acc;
  }
}

void accumulate_outer(Matrix& w, std::span<const double> x, std::span<const double> y) {
  if (x.size() != w.rows() || y.size() != w.cols()) {
    throw DimensionError("outer product shape mismatch: w " + w.shape_string());
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto wr = w.row(r);
    for (std::size_t j = 0; j < y.size(); ++j) wr[j] += xr * y[j];
  }
}

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kTiny, kBelowOne);
}

RealVector sigmoid(std::span<const double> v) {
  RealVector out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return sigmoid(x); });
  return out;
}

RealVector tanh_vec(std::span<const double> v) {
  RealVector out(v.size());
  std::transform(v.begin(), v.end(), out.begin(),
                 [](double x) { return std::clamp(std::tanh(x), -kBelowOne, kBelowOne); });
  return out;
}

RealVector softmax(std::span<const double> logits) {
  RealVector out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (double& p : out) p = std::max(p / sum, kTiny);
  return out;
}

RealVector log_softmax(std::span<const double> logits) {
  RealVector out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::int64_t Rng::uniform_int(std::int64_t low, std::int64_t high) {
  if (low > high) {
    throw std::invalid_argument("uniform_int: low " + std::to_string(low) + " > high " +
                                std::to_string(high));
  }
  const std::uint64_t span = static_cast<std::uint64_t>(high) - static_cast<std::uint64_t>(low);
  if (span == std::numeric_limits<std::uint64_t>::max()) {
    return static_cast<std::int64_t>(next_u64());
  }
  const std::uint64_t range = span + 1;
  // Values below `threshold` would over-represent the low residues.
  const std::uint64_t threshold = (0 - range) % range;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x < threshold);
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(low) + x % range);
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double low, double high) { return low + (high - low) * uniform01(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Rng Rng::derive(std::uint64_t stream) const {
  std::uint64_t sm = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return Rng(splitmix64(sm));
}

}  // namespace lstmens
