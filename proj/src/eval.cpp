#include "lstmens/eval.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lstmens/lstm_net.hpp"

namespace lstmens {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // n - 1 denominator
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.var = ss / (n - 1.0);
  }
  return m;
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::false_positives(std::size_t k) const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < k_; ++t) {
    if (t != k) n += at(t, k);
  }
  return n;
}

std::size_t ConfusionMatrix::false_negatives(std::size_t k) const {
  std::size_t n = 0;
  for (std::size_t p = 0; p < k_; ++p) {
    if (p != k) n += at(k, p);
  }
  return n;
}

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                          std::size_t num_classes) {
  if (preds.size() != labels.size()) {
    throw DimensionError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= num_classes || labels[i] >= num_classes) {
      throw std::out_of_range("confusion: class index outside [0," + std::to_string(num_classes) +
                              ")");
    }
    ++cm.at(labels[i], preds[i]);
  }
  return cm;
}

RealVector per_class_f1(const ConfusionMatrix& cm) {
  RealVector f1(cm.num_classes(), 0.0);
  for (std::size_t k = 0; k < cm.num_classes(); ++k) {
    const double tp2 = 2.0 * static_cast<double>(cm.true_positives(k));
    const double denom = tp2 + static_cast<double>(cm.false_positives(k) + cm.false_negatives(k));
    f1[k] = denom == 0.0 ? 0.0 : tp2 / denom;
  }
  return f1;
}

double mean_f1(const ConfusionMatrix& cm) {
  if (cm.num_classes() == 0) throw std::invalid_argument("mean_f1: no classes");
  const RealVector f1 = per_class_f1(cm);
  double sum = 0.0;
  for (double v : f1) sum += v;
  return sum / static_cast<double>(f1.size());
}

TrialSummary summarize(const TrialSet& trials) {
  if (trials.scores.empty()) throw std::invalid_argument("summarize: no trials");
  const Moments m = moments(trials.scores);
  return {trials.scores.size(), m.mean, std::sqrt(m.var), trials.scores.size() == 1};
}

std::string format_mean_std(const TrialSummary& summary, int decimals) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << summary.mean << " ± " << summary.stddev;
  return out.str();
}

TrialSet run_trials(const ExperimentDescriptor& experiment, std::size_t n_trials,
                    std::uint64_t base_seed) {
  if (n_trials == 0) throw std::invalid_argument("run_trials: need at least one trial");
  TrialSet out;
  out.name = experiment.name;
  for (std::size_t i = 0; i < n_trials; ++i) {
    const std::uint64_t seed = base_seed + i;
    const double score = experiment.run(seed);
    if (!(score >= 0.0 && score <= 1.0)) {
      throw std::runtime_error("trial " + std::to_string(i) + " returned score outside [0,1]");
    }
    out.seeds.push_back(seed);
    out.scores.push_back(score);
  }
  return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

std::string significance_stars(double p) {
  if (p <= 0.001) return "***";
  if (p <= 0.01) return "**";
  if (p <= 0.05) return "*";
  return "";
}

TTestResult t_test(const TrialSet& a, const TrialSet& b, TTestKind kind) {
  const std::size_t na = a.scores.size();
  const std::size_t nb = b.scores.size();
  if (na < 2 || nb < 2) throw std::invalid_argument("t_test needs at least two trials per set");
  const Moments ma = moments(a.scores);
  const Moments mb = moments(b.scores);
  const double fa = static_cast<double>(na);
  const double fb = static_cast<double>(nb);
  const double diff = ma.mean - mb.mean;

  TTestResult r;
  double se2;
  if (kind == TTestKind::kWelch) {
    const double va = ma.var / fa;
    const double vb = mb.var / fb;
    se2 = va + vb;
    r.df = se2 > 0.0 ? se2 * se2 / (va * va / (fa - 1.0) + vb * vb / (fb - 1.0)) : fa + fb - 2.0;
  } else {
    r.df = fa + fb - 2.0;
    const double pooled = ((fa - 1.0) * ma.var + (fb - 1.0) * mb.var) / r.df;
    se2 = pooled * (1.0 / fa + 1.0 / fb);
  }

  if (se2 == 0.0) {
    if (diff == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
      r.p = 0.0;
    }
  } else {
    r.t = diff / std::sqrt(se2);
    r.p = std::min(1.0, student_t_two_tailed_p(r.t, r.df));
  }
  r.stars = significance_stars(r.p);
  return r;
}

void write_per_class_f1(std::ostream& out, std::span<const double> f1) {
  out << "class,f1\n";
  for (std::size_t k = 0; k < f1.size(); ++k) out << k << ',' << format_double(f1[k]) << '\n';
}

void write_confusion_long(std::ostream& out, const ConfusionMatrix& cm) {
  out << "true,pred,count\n";
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    for (std::size_t p = 0; p < cm.num_classes(); ++p) {
      out << t << ',' << p << ',' << cm.at(t, p) << '\n';
    }
  }
}

void write_trials(std::ostream& out, const TrialSet& trials) {
  out << "trial,seed,mean_f1\n";
  for (std::size_t i = 0; i < trials.scores.size(); ++i) {
    out << i << ',' << trials.seeds[i] << ',' << format_double(trials.scores[i]) << '\n';
  }
}

TrialSet read_trials(std::istream& in, std::string name) {
  TrialSet out;
  out.name = std::move(name);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 || line.empty() || line.front() == '#') continue;
    std::istringstream ss(line);
    std::string trial, seed, score;
    if (!std::getline(ss, trial, ',') || !std::getline(ss, seed, ',') || !std::getline(ss, score)) {
      throw std::runtime_error("trials row " + std::to_string(row) + ": expected trial,seed,mean_f1");
    }
    out.seeds.push_back(std::stoull(seed));
    out.scores.push_back(parse_double(score));
  }
  return out;
}

void write_significance(std::ostream& out,
                        const std::vector<std::pair<std::string, TTestResult>>& rows) {
  out << "pair,t,p,stars\n";
  for (const auto& [pair, r] : rows) {
    out << pair << ',' << format_double(r.t) << ',' << format_double(r.p) << ',' << r.stars << '\n';
  }
}

}  // namespace lstmens
