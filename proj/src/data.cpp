#include "lstmens/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "lstmens/lstm_net.hpp"

namespace lstmens {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    auto first = field.find_first_not_of(" \t");
    auto last = field.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? "" : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_number(const std::string& s) {
  try {
    parse_double(s);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

void interpolate_channel(Matrix& m, std::size_t col, std::size_t& count) {
  const std::size_t n = m.rows();
  std::size_t prev_valid = n;  // n == none yet
  for (std::size_t t = 0; t < n; ++t) {
    if (std::isnan(m(t, col))) continue;
    if (prev_valid == n) {
      for (std::size_t u = 0; u < t; ++u) m(u, col) = m(t, col);
      count += t;
    } else if (t > prev_valid + 1) {
      const double a = m(prev_valid, col);
      const double b = m(t, col);
      const double gap = static_cast<double>(t - prev_valid);
      for (std::size_t u = prev_valid + 1; u < t; ++u) {
        m(u, col) = a + (b - a) * static_cast<double>(u - prev_valid) / gap;
      }
      count += t - prev_valid - 1;
    }
    prev_valid = t;
  }
  if (prev_valid == n) throw CsvError(0, "channel " + std::to_string(col) + " is entirely NaN");
  for (std::size_t u = prev_valid + 1; u < n; ++u) m(u, col) = m(prev_valid, col);
  count += n - prev_valid - 1;
}

void check_fractions(double train, double val) {
  if (!(train > 0.0 && val >= 0.0 && train + val <= 1.0)) {
    throw std::invalid_argument("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1");
  }
}

}  // namespace

void LabeledSequence::validate() const {
  if (samples.rows() != labels.size()) {
    throw DimensionError("sequence has " + std::to_string(samples.rows()) + " samples but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= num_classes) {
      throw std::out_of_range("label " + std::to_string(labels[t]) + " at t=" + std::to_string(t) +
                              " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  for (double v : samples.values()) {
    if (std::isnan(v)) throw std::invalid_argument("sequence contains NaN");
  }
}

LabeledSequence LabeledSequence::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length()) {
    throw std::out_of_range("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") outside sequence of length " + std::to_string(length()));
  }
  LabeledSequence out;
  out.num_classes = num_classes;
  out.channel_names = channel_names;
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  const auto vals = samples.values();
  out.samples = Matrix(end - begin, dims(),
                       std::vector<double>(vals.begin() + static_cast<std::ptrdiff_t>(begin * dims()),
                                           vals.begin() + static_cast<std::ptrdiff_t>(end * dims())));
  return out;
}

CsvError::CsvError(std::size_t row, const std::string& what)
    : std::runtime_error(row == 0 ? what : "csv row " + std::to_string(row) + ": " + what),
      row_(row) {}

std::size_t CsvLoadReport::total_interpolated() const {
  std::size_t n = 0;
  for (std::size_t c : interpolated) n += c;
  return n;
}

LoadedCsv read_csv(std::istream& in, const CsvSchema& schema) {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  std::vector<std::string> header;
  std::string line;
  std::size_t row_no = 0;
  std::size_t width = 0;
  std::size_t max_label = 0;

  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = split_fields(line);
    if (width == 0) {
      width = fields.size();
      if (schema.label_column >= width) {
        throw CsvError(row_no, "label column " + std::to_string(schema.label_column) +
                                   " outside a row of " + std::to_string(width) + " fields");
      }
      if (width < 2) throw CsvError(row_no, "need a label column and at least one channel");
      const bool header_row = schema.has_header.value_or(
          !std::all_of(fields.begin(), fields.end(), [](const auto& f) { return is_number(f); }));
      if (header_row) {
        header = fields;
        continue;
      }
    }
    if (fields.size() != width) {
      throw CsvError(row_no, "expected " + std::to_string(width) + " fields, found " +
                                 std::to_string(fields.size()));
    }
    std::vector<double> values;
    values.reserve(width - 1);
    for (std::size_t c = 0; c < width; ++c) {
      double v;
      try {
        v = parse_double(fields[c]);
      } catch (const std::invalid_argument&) {
        throw CsvError(row_no, "cannot parse field " + std::to_string(c) + " '" + fields[c] + "'");
      }
      if (c == schema.label_column) {
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) {
          throw CsvError(row_no, "label '" + fields[c] + "' is not a non-negative integer");
        }
        const auto label = static_cast<std::size_t>(v);
        if (schema.num_classes && label >= *schema.num_classes) {
          throw CsvError(row_no, "label " + std::to_string(label) + " outside [0," +
                                     std::to_string(*schema.num_classes) + ")");
        }
        labels.push_back(label);
        max_label = std::max(max_label, label);
      } else {
        if (std::isinf(v)) throw CsvError(row_no, "infinite value in field " + std::to_string(c));
        values.push_back(v);
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw CsvError(0, "csv contains no data rows");

  LoadedCsv out;
  auto& seq = out.sequence;
  seq.samples = Matrix::from_rows(rows);
  seq.labels = std::move(labels);
  seq.num_classes = schema.num_classes.value_or(max_label + 1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != schema.label_column) seq.channel_names.push_back(header[c]);
  }
  out.report.rows = rows.size();
  out.report.interpolated.assign(seq.dims(), 0);
  for (std::size_t c = 0; c < seq.dims(); ++c) {
    interpolate_channel(seq.samples, c, out.report.interpolated[c]);
  }
  seq.validate();
  return out;
}

LoadedCsv load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open csv '" + path + "'");
  return read_csv(in, schema);
}

void write_csv(std::ostream& out, const LabeledSequence& seq) {
  out << "label";
  for (std::size_t c = 0; c < seq.dims(); ++c) {
    out << ',' << (c < seq.channel_names.size() ? seq.channel_names[c] : "ch" + std::to_string(c));
  }
  out << '\n';
  for (std::size_t t = 0; t < seq.length(); ++t) {
    out << seq.labels[t];
    for (double v : seq.samples.row(t)) out << ',' << format_double(v);
    out << '\n';
  }
}

void save_csv(const std::string& path, const LabeledSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(out, seq);
}

NormStats fit_normalizer(const LabeledSequence& train) {
  const std::size_t n = train.length();
  if (n == 0) throw std::invalid_argument("cannot fit normalizer on an empty sequence");
  NormStats stats;
  stats.mean.assign(train.dims(), 0.0);
  stats.stddev.assign(train.dims(), 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = train.samples.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) stats.mean[c] += row[c];
  }
  for (double& m : stats.mean) m /= static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = train.samples.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double d = row[c] - stats.mean[c];
      stats.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < stats.stddev.size(); ++c) {
    stats.stddev[c] = std::sqrt(stats.stddev[c] / static_cast<double>(n));
    if (stats.stddev[c] < kStdFloor) {
      stats.stddev[c] = kStdFloor;
      stats.floored.push_back(c);
    }
  }
  return stats;
}

LabeledSequence apply_normalizer(const NormStats& stats, const LabeledSequence& seq) {
  if (stats.mean.size() != seq.dims()) throw DimensionError("normalizer channel count mismatch");
  LabeledSequence out = seq;
  for (std::size_t t = 0; t < out.length(); ++t) {
    auto row = out.samples.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

LabeledSequence invert_normalizer(const NormStats& stats, const LabeledSequence& seq) {
  if (stats.mean.size() != seq.dims()) throw DimensionError("normalizer channel count mismatch");
  LabeledSequence out = seq;
  for (std::size_t t = 0; t < out.length(); ++t) {
    auto row = out.samples.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] * stats.stddev[c] + stats.mean[c];
  }
  return out;
}

void save_norm_stats(const std::string& path, const NormStats& stats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "channel,mean,std\n";
  for (std::size_t c = 0; c < stats.mean.size(); ++c) {
    out << c << ',' << format_double(stats.mean[c]) << ',' << format_double(stats.stddev[c]) << '\n';
  }
}

NormStats load_norm_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open normalizer stats '" + path + "'");
  NormStats stats;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (row == 1 || line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 3) throw CsvError(row, "expected channel,mean,std");
    try {
      if (std::stoul(f[0]) != stats.mean.size()) throw CsvError(row, "channels out of order");
      stats.mean.push_back(parse_double(f[1]));
      stats.stddev.push_back(parse_double(f[2]));
    } catch (const std::invalid_argument& e) {
      throw CsvError(row, e.what());
    }
  }
  return stats;
}

Split holdout_split(const LabeledSequence& seq, IndexRange train, IndexRange val,
                   IndexRange test) {
  const IndexRange ranges[] = {train, val, test};
  for (const auto& r : ranges) {
    if (r.begin > r.end || r.end > seq.length()) {
      throw std::out_of_range("split range [" + std::to_string(r.begin) + "," +
                              std::to_string(r.end) + ") invalid for length " +
                              std::to_string(seq.length()));
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const auto& x = ranges[a];
      const auto& y = ranges[b];
      if (x.size() > 0 && y.size() > 0 && x.begin < y.end && y.begin < x.end) {
        throw std::invalid_argument("split ranges overlap");
      }
    }
  }
  return {seq.slice(train.begin, train.end), seq.slice(val.begin, val.end),
          seq.slice(test.begin, test.end)};
}

Split fractional_split(const LabeledSequence& seq, double train_fraction, double val_fraction) {
  check_fractions(train_fraction, val_fraction);
  const std::size_t n = seq.length();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  return holdout_split(seq, {0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, n});
}

Split classwise_split(const LabeledSequence& seq, double train_fraction, double val_fraction) {
  check_fractions(train_fraction, val_fraction);
  const auto dist = class_distribution(seq);
  std::vector<std::size_t> seen(seq.num_classes, 0);
  std::vector<int> part(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const std::size_t k = seq.labels[t];
    const double n_k = static_cast<double>(dist.counts[k]);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * n_k));
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * n_k));
    const std::size_t idx = seen[k]++;
    part[t] = idx < n_train ? 0 : (idx < n_train + n_val ? 1 : 2);
  }
  Split out;
  LabeledSequence* parts[] = {&out.train, &out.val, &out.test};
  for (int p = 0; p < 3; ++p) {
    std::vector<double> values;
    auto& dst = *parts[p];
    dst.num_classes = seq.num_classes;
    dst.channel_names = seq.channel_names;
    for (std::size_t t = 0; t < seq.length(); ++t) {
      if (part[t] != p) continue;
      auto row = seq.samples.row(t);
      values.insert(values.end(), row.begin(), row.end());
      dst.labels.push_back(seq.labels[t]);
    }
    dst.samples = Matrix(dst.labels.size(), seq.dims(), std::move(values));
  }
  return out;
}

ClassDistribution class_distribution(const LabeledSequence& seq) {
  ClassDistribution d;
  d.counts.assign(seq.num_classes, 0);
  for (std::size_t k : seq.labels) ++d.counts.at(k);
  d.fractions.reserve(d.counts.size());
  for (std::size_t c : d.counts) {
    d.fractions.push_back(seq.length() == 0 ? 0.0
                                            : static_cast<double>(c) / static_cast<double>(seq.length()));
  }
  return d;
}

void write_class_distribution(std::ostream& out, const ClassDistribution& dist) {
  out << "class,count,fraction\n";
  for (std::size_t k = 0; k < dist.counts.size(); ++k) {
    out << k << ',' << dist.counts[k] << ',' << format_double(dist.fractions[k]) << '\n';
  }
}

std::string to_string(Regime regime) {
  return regime == Regime::kBalanced ? "balanced" : "imbalanced";
}

Regime parse_regime(const std::string& text) {
  if (text == "balanced") return Regime::kBalanced;
  if (text == "imbalanced") return Regime::kImbalanced;
  throw std::invalid_argument("unknown regime '" + text + "'");
}

LabeledSequence synth_har(const SynthConfig& cfg) {
  if (cfg.dims < 2 || cfg.num_classes < 2) {
    throw std::invalid_argument("synth_har needs at least 2 channels and 2 classes");
  }
  if (cfg.length == 0) throw std::invalid_argument("synth_har needs a positive length");
  if (!(cfg.snr > 0.0)) throw std::invalid_argument("snr must be positive");
  Rng rng(cfg.seed);
  const std::size_t d = cfg.dims;
  const std::size_t k = cfg.num_classes;

  struct Signature {
    RealVector amplitude, frequency, phase, offset;
    double log_median_duration;
  };
  std::vector<Signature> sig(k);
  double power = 0.0;
  for (auto& s : sig) {
    for (std::size_t c = 0; c < d; ++c) {
      s.amplitude.push_back(rng.uniform(0.5, 1.5));
      s.frequency.push_back(rng.uniform(0.01, 0.1));
      s.phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      s.offset.push_back(rng.uniform(-1.5, 1.5));
      power += 0.5 * s.amplitude.back() * s.amplitude.back() + s.offset.back() * s.offset.back();
    }
    s.log_median_duration = std::log(rng.uniform(100.0, 300.0));
  }
  power /= static_cast<double>(k * d);
  const double noise_std = std::isinf(cfg.snr) ? 0.0 : std::sqrt(power / cfg.snr);

  auto duration = [&](std::size_t cls) {
    const double x = std::exp(sig[cls].log_median_duration + 0.5 * rng.normal());
    return std::max<std::size_t>(4, static_cast<std::size_t>(std::lround(x)));
  };

  // Each run is one execution of an activity with its own amplitude,
  // frequency and offset perturbation.
  struct Run {
    std::size_t cls, len;
    RealVector amp_scale, freq_scale, offset_shift;
  };
  std::vector<Run> runs;
  std::size_t total = 0;
  auto add_run = [&](std::size_t cls, std::size_t len) {
    Run r{cls, std::min(len, cfg.length - total), {}, {}, {}};
    for (std::size_t c = 0; c < d; ++c) {
      r.amp_scale.push_back(1.0 + cfg.variability * rng.uniform(-1.0, 1.0));
      r.freq_scale.push_back(1.0 + 0.5 * cfg.variability * rng.uniform(-1.0, 1.0));
      r.offset_shift.push_back(cfg.variability * rng.normal());
    }
    total += r.len;
    runs.push_back(std::move(r));
  };
  std::size_t current = k;  // none
  while (total < cfg.length) {
    if (cfg.regime == Regime::kImbalanced) {
      const auto activity = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(k) - 1));
      const std::size_t activity_len = duration(activity);
      const std::size_t null_len = std::max(duration(0), activity_len);
      add_run(0, null_len);
      if (total < cfg.length) add_run(activity, activity_len);
    } else {
      std::size_t next;
      do {
        next = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
      } while (next == current);
      current = next;
      add_run(next, duration(next));
    }
  }

  LabeledSequence seq;
  seq.num_classes = k;
  seq.labels.reserve(cfg.length);
  seq.samples = Matrix(cfg.length, d);
  for (std::size_t c = 0; c < d; ++c) seq.channel_names.push_back("ch" + std::to_string(c));
  std::size_t t = 0;
  for (const Run& r : runs) {
    const Signature& s = sig[r.cls];
    for (std::size_t u = 0; u < r.len; ++u, ++t) {
      seq.labels.push_back(r.cls);
      auto row = seq.samples.row(t);
      for (std::size_t c = 0; c < d; ++c) {
        const double phase = 2.0 * std::numbers::pi * s.frequency[c] * r.freq_scale[c] *
                                 static_cast<double>(t) + s.phase[c];
        const double clean = s.offset[c] + r.offset_shift[c] +
                             s.amplitude[c] * r.amp_scale[c] * std::sin(phase);
        row[c] = clean + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0);
      }
    }
  }
  return seq;
}

}  // namespace lstmens
