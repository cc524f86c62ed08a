#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "lstmens/data.hpp"

using namespace lstmens;

namespace {

LabeledSequence make_seq(std::vector<std::vector<double>> rows, std::vector<std::size_t> labels,
                         std::size_t k) {
  LabeledSequence s;
  s.samples = Matrix::from_rows(rows);
  s.labels = std::move(labels);
  s.num_classes = k;
  return s;
}

}  // namespace

TEST(Csv, ReadsHeaderAndLabels) {
  std::istringstream in("label,ax,ay\n0,1.5,2\n2,-1,3.25\n1,0,0\n");
  const LoadedCsv got = read_csv(in);
  const auto& s = got.sequence;
  EXPECT_EQ(s.length(), 3u);
  EXPECT_EQ(s.dims(), 2u);
  EXPECT_EQ(s.num_classes, 3u);
  EXPECT_EQ(s.labels, (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(s.channel_names, (std::vector<std::string>{"ax", "ay"}));
  EXPECT_EQ(s.samples(1, 1), 3.25);
  EXPECT_EQ(got.report.total_interpolated(), 0u);
}

TEST(Csv, HeaderlessAndLabelColumnChoice) {
  std::istringstream in("0.5,1\n0.25,0\n");
  CsvSchema schema;
  schema.label_column = 1;
  schema.num_classes = 4;
  const auto s = read_csv(in, schema).sequence;
  EXPECT_EQ(s.length(), 2u);
  EXPECT_EQ(s.num_classes, 4u);
  EXPECT_EQ(s.labels, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(s.samples(0, 0), 0.5);
}

TEST(Csv, InterpolatesMissingValues) {
  std::istringstream in("label,a,b\n0,NaN,1\n0,2,NaN\n1,NaN,NaN\n1,6,7\n0,NaN,8\n");
  const LoadedCsv got = read_csv(in);
  const Matrix& x = got.sequence.samples;
  EXPECT_EQ(x(0, 0), 2.0);  // leading gap copies the first valid value
  EXPECT_EQ(x(2, 0), 4.0);
  EXPECT_EQ(x(4, 0), 6.0);  // trailing gap copies the last valid value
  EXPECT_EQ(x(1, 1), 3.0);
  EXPECT_EQ(x(2, 1), 5.0);
  EXPECT_EQ(got.report.interpolated, (std::vector<std::size_t>{3, 2}));
}

TEST(Csv, ErrorsCarryRowNumbers) {
  {
    std::istringstream in("label,a\n0,1\n1,abc\n");
    try {
      read_csv(in);
      FAIL();
    } catch (const CsvError& e) {
      EXPECT_EQ(e.row(), 3u);
    }
  }
  {
    std::istringstream in("label,a\n0,1\n1,2,3\n");
    try {
      read_csv(in);
      FAIL();
    } catch (const CsvError& e) {
      EXPECT_EQ(e.row(), 3u);
    }
  }
  std::istringstream negative("label,a\n-1,1\n");
  EXPECT_THROW(read_csv(negative), CsvError);
  std::istringstream all_nan("label,a\n0,nan\n1,nan\n");
  EXPECT_THROW(read_csv(all_nan), CsvError);
  std::istringstream out_of_range("label,a\n3,1\n");
  CsvSchema schema;
  schema.num_classes = 3;
  EXPECT_THROW(read_csv(out_of_range, schema), CsvError);
  std::istringstream empty("label,a\n");
  EXPECT_THROW(read_csv(empty), CsvError);
}

TEST(Csv, WriteReadRoundTrip) {
  SynthConfig sc;
  sc.length = 500;
  sc.seed = 3;
  const LabeledSequence seq = synth_har(sc);
  std::stringstream ss;
  write_csv(ss, seq);
  CsvSchema schema;
  schema.num_classes = seq.num_classes;
  const LabeledSequence back = read_csv(ss, schema).sequence;
  EXPECT_EQ(back.samples, seq.samples);
  EXPECT_EQ(back.labels, seq.labels);
}

TEST(Normalizer, MeanAndPopulationStd) {
  const LabeledSequence s = make_seq({{1, 5}, {2, 5}, {3, 5}, {6, 5}}, {0, 0, 1, 1}, 2);
  const NormStats st = fit_normalizer(s);
  EXPECT_DOUBLE_EQ(st.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(st.stddev[0], std::sqrt((4.0 + 1.0 + 0.0 + 9.0) / 4.0));
  EXPECT_EQ(st.stddev[1], kStdFloor);
  EXPECT_EQ(st.floored, (std::vector<std::size_t>{1}));
  const LabeledSequence z = apply_normalizer(st, s);
  EXPECT_DOUBLE_EQ(z.samples(3, 0), 3.0 / st.stddev[0]);
  EXPECT_EQ(z.samples(0, 1), 0.0);
}

TEST(Normalizer, ZeroMeanUnitVarianceAndInverse) {
  SynthConfig sc;
  sc.length = 3000;
  sc.seed = 9;
  const LabeledSequence seq = synth_har(sc);
  const NormStats st = fit_normalizer(seq);
  const LabeledSequence z = apply_normalizer(st, seq);
  for (std::size_t c = 0; c < z.dims(); ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t t = 0; t < z.length(); ++t) m += z.samples(t, c);
    m /= static_cast<double>(z.length());
    for (std::size_t t = 0; t < z.length(); ++t) v += (z.samples(t, c) - m) * (z.samples(t, c) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / static_cast<double>(z.length()), 1.0, 1e-12);
  }
  const LabeledSequence back = invert_normalizer(st, z);
  for (std::size_t i = 0; i < seq.samples.size(); ++i) {
    EXPECT_NEAR(back.samples.values()[i], seq.samples.values()[i], 1e-12);
  }
}

TEST(Normalizer, SaveLoadIsExact) {
  const auto path = (std::filesystem::temp_directory_path() / "lstmens_norm.csv").string();
  NormStats st{{0.1, -3.7e5}, {2.0 / 3.0, 1e-8}, {}};
  save_norm_stats(path, st);
  const NormStats back = load_norm_stats(path);
  EXPECT_EQ(back.mean, st.mean);
  EXPECT_EQ(back.stddev, st.stddev);
  std::filesystem::remove(path);
}

TEST(Splits, HoldoutAndFractional) {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  for (int t = 0; t < 10; ++t) {
    rows.push_back({static_cast<double>(t)});
    labels.push_back(static_cast<std::size_t>(t % 2));
  }
  const LabeledSequence s = make_seq(rows, labels, 2);
  const Split h = holdout_split(s, {0, 5}, {5, 7}, {7, 10});
  EXPECT_EQ(h.train.length(), 5u);
  EXPECT_EQ(h.val.samples(0, 0), 5.0);
  EXPECT_EQ(h.test.samples(2, 0), 9.0);
  EXPECT_THROW(holdout_split(s, {0, 5}, {4, 7}, {7, 10}), std::invalid_argument);
  EXPECT_THROW(holdout_split(s, {0, 5}, {5, 7}, {7, 11}), std::out_of_range);

  const Split f = fractional_split(s, 0.6, 0.2);
  EXPECT_EQ(f.train.length(), 6u);
  EXPECT_EQ(f.val.length(), 2u);
  EXPECT_EQ(f.test.length(), 2u);
  EXPECT_EQ(f.test.samples(0, 0), 8.0);
  EXPECT_THROW(fractional_split(s, 0.9, 0.2), std::invalid_argument);
}

TEST(Splits, ClasswiseKeepsEveryClassInEveryPart) {
  SynthConfig sc;
  sc.length = 4000;
  sc.seed = 12;
  const LabeledSequence seq = synth_har(sc);
  const Split sp = classwise_split(seq, 0.7, 0.15);
  const auto all = class_distribution(seq);
  const auto tr = class_distribution(sp.train), va = class_distribution(sp.val),
             te = class_distribution(sp.test);
  for (std::size_t k = 0; k < seq.num_classes; ++k) {
    const auto n = static_cast<double>(all.counts[k]);
    EXPECT_EQ(tr.counts[k], static_cast<std::size_t>(std::floor(0.7 * n)));
    EXPECT_EQ(va.counts[k], static_cast<std::size_t>(std::floor(0.15 * n)));
    EXPECT_EQ(tr.counts[k] + va.counts[k] + te.counts[k], all.counts[k]);
    EXPECT_GT(te.counts[k], 0u);
  }
  EXPECT_EQ(sp.train.length() + sp.val.length() + sp.test.length(), seq.length());
}

TEST(ClassDistribution, CountsAndCsv) {
  const LabeledSequence s = make_seq({{0}, {0}, {0}, {0}}, {0, 2, 2, 2}, 3);
  const auto d = class_distribution(s);
  EXPECT_EQ(d.counts, (std::vector<std::size_t>{1, 0, 3}));
  EXPECT_EQ(d.fractions[2], 0.75);
  std::ostringstream out;
  write_class_distribution(out, d);
  EXPECT_EQ(out.str(), "class,count,fraction\n0,1,0.25\n1,0,0\n2,3,0.75\n");
}

TEST(Synth, DeterministicShapesAndLabels) {
  SynthConfig sc;
  sc.length = 5000;
  sc.seed = 1;
  const LabeledSequence a = synth_har(sc), b = synth_har(sc);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.length(), 5000u);
  EXPECT_EQ(a.dims(), 6u);
  a.validate();
  sc.seed = 2;
  EXPECT_NE(synth_har(sc).labels, a.labels);
}

TEST(Synth, ImbalancedRegimeIsNullDominated) {
  SynthConfig sc;
  sc.length = 20000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    sc.seed = seed;
    const auto d = class_distribution(synth_har(sc));
    EXPECT_GE(d.fractions[0], 0.45);
    for (std::size_t k = 1; k < d.counts.size(); ++k) EXPECT_GT(d.counts[k], 0u);
  }
  sc.regime = Regime::kBalanced;
  sc.seed = 0;
  const auto bal = class_distribution(synth_har(sc));
  // Classes take turns; per-class durations still differ.
  for (double f : bal.fractions) {
    EXPECT_GT(f, 0.08);
    EXPECT_LT(f, 0.45);
  }
}

TEST(Synth, NoiselessAndValidation) {
  SynthConfig sc;
  sc.length = 200;
  sc.snr = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(synth_har(sc).validate());
  sc.snr = 0.0;
  EXPECT_THROW(synth_har(sc), std::invalid_argument);
  sc.snr = 1.0;
  sc.num_classes = 1;
  EXPECT_THROW(synth_har(sc), std::invalid_argument);
  EXPECT_EQ(parse_regime("balanced"), Regime::kBalanced);
  EXPECT_THROW(parse_regime("other"), std::invalid_argument);
}
