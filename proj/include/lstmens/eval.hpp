#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lstmens/core_math.hpp"

namespace lstmens {

/// K x K counts, rows are true classes and columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  std::size_t num_classes() const { return k_; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_.at(truth * k_ + pred); }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }
  std::size_t total() const;

  std::size_t true_positives(std::size_t k) const { return at(k, k); }
  std::size_t false_positives(std::size_t k) const;
  std::size_t false_negatives(std::size_t k) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                          std::size_t num_classes);

/// 2TP / (2TP + FP + FN) per class; a class with no true, predicted or
/// missed samples scores 0.
RealVector per_class_f1(const ConfusionMatrix& cm);

/// Unweighted mean of per_class_f1 over all K classes.
double mean_f1(const ConfusionMatrix& cm);

/// Per-trial scores of one experiment configuration.
struct TrialSet {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<double> scores;
};

struct TrialSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, n - 1 denominator
  bool degenerate = false;  // n == 1, stddev reported as 0
};

TrialSummary summarize(const TrialSet& trials);

/// "0.726 ± 0.008"
std::string format_mean_std(const TrialSummary& summary, int decimals = 3);

struct ExperimentDescriptor {
  std::string name;
  /// Runs one trial with the given seed and returns its mean F1.
  std::function<double(std::uint64_t seed)> run;
};

/// Trial i runs with seed base_seed + i.
TrialSet run_trials(const ExperimentDescriptor& experiment, std::size_t n_trials,
                    std::uint64_t base_seed);

enum class TTestKind { kWelch, kPooled };

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  std::string stars;
};

/// Two-tailed independent two-sample t-test.
TTestResult t_test(const TrialSet& a, const TrialSet& b, TTestKind kind = TTestKind::kWelch);

/// "***" for p <= 0.001, "**" for p <= 0.01, "*" for p <= 0.05, "" otherwise.
std::string significance_stars(double p);

/// I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_tailed_p(double t, double df);

void write_per_class_f1(std::ostream& out, std::span<const double> f1);
void write_confusion_long(std::ostream& out, const ConfusionMatrix& cm);
void write_trials(std::ostream& out, const TrialSet& trials);
TrialSet read_trials(std::istream& in, std::string name = {});
void write_significance(std::ostream& out,
                        const std::vector<std::pair<std::string, TTestResult>>& rows);

}  // namespace lstmens
