#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lstmens/core_math.hpp"

namespace lstmens {

/// A multichannel sensor stream with one class label per sample. Samples are
/// stored one row per timestep (T x D).
struct LabeledSequence {
  Matrix samples;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::vector<std::string> channel_names;

  std::size_t length() const { return labels.size(); }
  std::size_t dims() const { return samples.cols(); }

  /// Throws when shapes disagree, a label is out of range or a value is NaN.
  void validate() const;

  /// Rows [begin, end).
  LabeledSequence slice(std::size_t begin, std::size_t end) const;
};

struct CsvSchema {
  std::size_t label_column = 0;
  /// When unset, K is one more than the largest label seen.
  std::optional<std::size_t> num_classes;
  /// When unset, a first row with any non-numeric cell is taken as a header.
  std::optional<bool> has_header;
};

struct CsvLoadReport {
  std::size_t rows = 0;
  std::vector<std::size_t> interpolated;  // per channel
  std::size_t total_interpolated() const;
};

struct LoadedCsv {
  LabeledSequence sequence;
  CsvLoadReport report;
};

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t row, const std::string& what);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Comma-separated, optional header, label column per `schema`, remaining
/// columns are channels. `NaN` cells are linearly interpolated per channel;
/// leading/trailing gaps copy the nearest valid value.
LoadedCsv read_csv(std::istream& in, const CsvSchema& schema = {});
LoadedCsv load_csv(const std::string& path, const CsvSchema& schema = {});

/// Writes `label,<channels...>` with a header row.
void write_csv(std::ostream& out, const LabeledSequence& seq);
void save_csv(const std::string& path, const LabeledSequence& seq);

inline constexpr double kStdFloor = 1e-8;

struct NormStats {
  RealVector mean;
  RealVector stddev;
  /// Channels whose standard deviation was raised to kStdFloor.
  std::vector<std::size_t> floored;
};

/// Per-channel mean and population standard deviation.
NormStats fit_normalizer(const LabeledSequence& train);
LabeledSequence apply_normalizer(const NormStats& stats, const LabeledSequence& seq);
LabeledSequence invert_normalizer(const NormStats& stats, const LabeledSequence& seq);

/// CSV `channel,mean,std`.
void save_norm_stats(const std::string& path, const NormStats& stats);
NormStats load_norm_stats(const std::string& path);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct Split {
  LabeledSequence train;
  LabeledSequence val;
  LabeledSequence test;
};

/// Contiguous slicing by explicit, pairwise disjoint ranges.
Split holdout_split(const LabeledSequence& seq, IndexRange train, IndexRange val, IndexRange test);

/// First `train_fraction` of the stream for training, the next `val_fraction`
/// for validation, the rest for testing.
Split fractional_split(const LabeledSequence& seq, double train_fraction, double val_fraction);

/// Per class, the first `train_fraction` of its samples go to training, the
/// next `val_fraction` to validation, the rest to testing. Temporal order is
/// kept inside each part.
Split classwise_split(const LabeledSequence& seq, double train_fraction, double val_fraction);

struct ClassDistribution {
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
};
ClassDistribution class_distribution(const LabeledSequence& seq);
/// CSV `class,count,fraction`.
void write_class_distribution(std::ostream& out, const ClassDistribution& dist);

enum class Regime { kBalanced, kImbalanced };
std::string to_string(Regime regime);
Regime parse_regime(const std::string& text);

struct SynthConfig {
  std::size_t dims = 6;
  std::size_t num_classes = 4;
  std::size_t length = 20000;
  Regime regime = Regime::kImbalanced;
  /// Signal-to-noise power ratio; infinity gives noiseless data.
  double snr = 4.0;
  /// Per-run perturbation of each class signature (execution variability);
  /// 0 makes every run of a class identical up to noise.
  double variability = 0.3;
  std::uint64_t seed = 0;
};

/// Synthetic wearable-style stream. Each class owns a per-channel sinusoid
/// (amplitude, frequency, offset); activities come in runs with lognormal
/// durations per class. The imbalanced regime interleaves NULL (class 0)
/// runs at least as long as the following activity run, so class 0 covers
/// at least half of the samples.
LabeledSequence synth_har(const SynthConfig& cfg);

}  // namespace lstmens
