#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lstmens/ensemble.hpp"
#include "lstmens/eval.hpp"

namespace lstmens::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Raised for invalid flag combinations found after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return json::parse(in);
}

LossKind loss_from_flag(const std::string& s) { return parse_loss_kind(s); }

// ---------------------------------------------------------------- data prep

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  bool classwise = false;
};

struct DataSpec {
  std::string path;
  std::size_t label_column = 0;
  std::optional<std::size_t> num_classes;
};

LabeledSequence load_data(const DataSpec& spec, std::ostream& err) {
  CsvSchema schema;
  schema.label_column = spec.label_column;
  schema.num_classes = spec.num_classes;
  LoadedCsv loaded = load_csv(spec.path, schema);
  for (std::size_t c = 0; c < loaded.report.interpolated.size(); ++c) {
    if (loaded.report.interpolated[c] > 0) {
      err << "warning: channel " << c << ": interpolated " << loaded.report.interpolated[c]
          << " missing values\n";
    }
  }
  return std::move(loaded.sequence);
}

Split split_data(const LabeledSequence& seq, const SplitSpec& spec) {
  return spec.classwise ? classwise_split(seq, spec.train_fraction, spec.val_fraction)
                        : fractional_split(seq, spec.train_fraction, spec.val_fraction);
}

LabeledSequence pick_part(const Split& split, const std::string& part) {
  if (part == "train") return split.train;
  if (part == "val") return split.val;
  if (part == "test") return split.test;
  throw UsageError("unknown part '" + part + "'");
}

void add_split_flags(CLI::App* app, SplitSpec& spec) {
  app->add_option("--train-frac", spec.train_fraction, "Training fraction")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--val-frac", spec.val_fraction, "Validation fraction")
      ->check(CLI::Range(0.0, 1.0));
  app->add_flag("--classwise", spec.classwise,
                "Split each class separately instead of cutting the stream");
}

void add_data_flags(CLI::App* app, DataSpec& spec) {
  app->add_option("--data", spec.path, "Labelled CSV")->required()->check(CLI::ExistingFile);
  app->add_option("--label-column", spec.label_column, "Index of the label column");
  app->add_option("--classes", spec.num_classes, "Number of classes (default: max label + 1)");
}

// ------------------------------------------------------------------ synth

struct SynthFlags {
  SynthConfig cfg;
  std::string regime = "imbalanced";
  std::string out;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SynthConfig cfg = f.cfg;
  cfg.regime = parse_regime(f.regime);
  const LabeledSequence seq = synth_har(cfg);
  save_csv(f.out, seq);
  const ClassDistribution dist = class_distribution(seq);
  json side;
  side["generator"] = "synth_har";
  side["seed"] = cfg.seed;
  side["regime"] = to_string(cfg.regime);
  side["dims"] = cfg.dims;
  side["classes"] = cfg.num_classes;
  side["length"] = cfg.length;
  side["snr"] = cfg.snr;
  side["variability"] = cfg.variability;
  side["class_counts"] = dist.counts;
  open_out(f.out + ".json") << side.dump(2) << '\n';
  write_class_distribution(out, dist);
  return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainFlags {
  DataSpec data;
  SplitSpec split;
  BaggingConfig cfg;
  std::string loss = "ce";
  std::string out;
};

int cmd_train(TrainFlags f, std::ostream& out, std::ostream& err) {
  f.cfg.loss = loss_from_flag(f.loss);
  try {
    f.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const LabeledSequence seq = load_data(f.data, err);
  const Split split = split_data(seq, f.split);
  const NormStats stats = fit_normalizer(split.train);
  for (std::size_t c : stats.floored) {
    err << "warning: channel " << c << " is constant in training data; std floored to "
        << kStdFloor << '\n';
  }
  const LabeledSequence train = apply_normalizer(stats, split.train);
  const LabeledSequence val = apply_normalizer(stats, split.val);

  const fs::path dir(f.out);
  fs::create_directories(dir);
  save_norm_stats((dir / "norm.csv").string(), stats);

  const std::string desc = describe_config(f.cfg);
  json run;
  run["data"] = f.data.path;
  run["label_column"] = f.data.label_column;
  run["classes"] = seq.num_classes;
  run["train_fraction"] = f.split.train_fraction;
  run["val_fraction"] = f.split.val_fraction;
  run["classwise"] = f.split.classwise;
  run["config"] = desc;
  run["cfg_hash"] = hex64(fnv1a(desc));
  open_out(dir / "run.json") << run.dump(2) << '\n';

  out << "# seed=" << f.cfg.seed << " cfg-hash=" << hex64(fnv1a(desc)) << '\n';
  out << "# " << desc << '\n';
  out << "epoch,loss,train_loss,val_f1\n";
  std::vector<ManifestEntry> entries;
  stream_bagging(train, val, f.cfg, [&](const BaseLearner& l) {
    const std::string name = learner_filename(l.epoch, l.loss);
    save_model((dir / name).string(), l.net, {l.loss, l.epoch, l.val_f1});
    entries.push_back({l.epoch, l.loss, l.val_f1, name});
    out << l.epoch << ',' << to_string(l.loss) << ',' << format_double(l.train_loss) << ','
        << format_double(l.val_f1) << std::endl;
  });
  write_manifest((dir / "manifest.csv").string(), entries);
  return kExitOk;
}

// ------------------------------------------------------------------- fuse

struct FuseFlags {
  std::string manifest;
  std::size_t m = 10;
  bool mixed = false;
  std::size_t m_each = 10;
  std::string ce_manifest;
  std::string f1_manifest;
  std::string out;
};

int cmd_fuse(const FuseFlags& f, std::ostream& out) {
  Ensemble e;
  if (f.mixed) {
    if (f.ce_manifest.empty() || f.f1_manifest.empty()) {
      throw UsageError("--mixed needs --ce and --f1");
    }
    e = mixed_ensemble(load_learners(f.ce_manifest), load_learners(f.f1_manifest), f.m_each);
  } else {
    if (f.manifest.empty()) throw UsageError("--manifest is required without --mixed");
    e = select_top_m(load_learners(f.manifest), f.m);
  }
  save_ensemble_manifest(f.out, e);
  out << "member,epoch,loss,val_f1\n";
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto& m = e.members[i];
    out << i << ',' << m.epoch << ',' << to_string(m.loss) << ',' << format_double(m.val_f1) << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ infer

struct InferFlags {
  std::string ensemble;
  std::string model;
  DataSpec data;
  std::string run_dir;
  std::string norm;
  std::string part = "test";
  std::string out;
};

int cmd_infer(InferFlags f, std::ostream& out, std::ostream& err) {
  if (f.ensemble.empty() == f.model.empty()) throw UsageError("give exactly one of --ensemble, --model");
  Ensemble e;
  if (!f.ensemble.empty()) {
    e = load_ensemble(f.ensemble);
  } else {
    LoadedModel m = load_model(f.model);
    e.members.push_back({std::move(m.net), m.meta.epoch, m.meta.loss, m.meta.val_f1, 0.0, f.model});
    e.provenance = "single model";
  }
  const std::size_t k = e.members.front().net.num_classes();
  if (!f.data.num_classes) f.data.num_classes = k;

  LabeledSequence seq;
  std::optional<NormStats> stats;
  if (!f.run_dir.empty()) {
    const json run = read_json(fs::path(f.run_dir) / "run.json");
    f.data.label_column = run.at("label_column").get<std::size_t>();
    const LabeledSequence all = load_data(f.data, err);
    SplitSpec spec{run.at("train_fraction").get<double>(), run.at("val_fraction").get<double>(),
                   run.at("classwise").get<bool>()};
    seq = f.part == "all" ? all : pick_part(split_data(all, spec), f.part);
    stats = load_norm_stats((fs::path(f.run_dir) / "norm.csv").string());
  } else {
    if (f.part != "test" && f.part != "all") throw UsageError("--part needs --run");
    seq = load_data(f.data, err);
    if (!f.norm.empty()) stats = load_norm_stats(f.norm);
  }
  if (stats) seq = apply_normalizer(*stats, seq);

  const EnsemblePrediction pred = ensemble_infer(e, seq.samples);
  auto file = open_out(f.out);
  file << "t,pred,label";
  for (std::size_t j = 0; j < k; ++j) file << ",p_" << j;
  file << '\n';
  for (std::size_t t = 0; t < seq.length(); ++t) {
    file << t << ',' << pred.labels[t] << ',' << seq.labels[t];
    for (double p : pred.probs[t]) file << ',' << format_double(p);
    file << '\n';
  }
  out << "samples,members,mean_f1\n"
      << seq.length() << ',' << e.size() << ','
      << format_double(mean_f1(confusion(pred.labels, seq.labels, k))) << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- eval

struct EvalFlags {
  std::string pred;
  std::optional<std::size_t> k;
  std::string out_dir;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  std::ifstream in(f.pred);
  if (!in) throw std::runtime_error("cannot open '" + f.pred + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(f.pred + ": empty file");
  std::size_t k = f.k.value_or(0);
  if (!f.k) {
    for (std::size_t pos = line.find(",p_"); pos != std::string::npos; pos = line.find(",p_", pos + 1)) ++k;
  }
  std::vector<std::size_t> preds, labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string t, p, y;
    if (!std::getline(ss, t, ',') || !std::getline(ss, p, ',') || !std::getline(ss, y, ',')) {
      throw std::runtime_error(f.pred + " row " + std::to_string(row) + ": expected t,pred,label");
    }
    preds.push_back(std::stoul(p));
    labels.push_back(std::stoul(y));
  }
  if (k == 0) {
    for (std::size_t i = 0; i < preds.size(); ++i) k = std::max({k, preds[i] + 1, labels[i] + 1});
  }
  const ConfusionMatrix cm = confusion(preds, labels, k);
  const RealVector f1 = per_class_f1(cm);
  if (!f.out_dir.empty()) {
    const fs::path dir(f.out_dir);
    auto pc = open_out(dir / "per_class_f1.csv");
    write_per_class_f1(pc, f1);
    auto cf = open_out(dir / "confusion.csv");
    write_confusion_long(cf, cm);
  }
  out << "mean_f1," << format_double(mean_f1(cm)) << '\n';
  write_per_class_f1(out, f1);
  return kExitOk;
}

// ------------------------------------------------------------------ ttest

struct TTestFlags {
  std::string a;
  std::string b;
  bool pooled = false;
};

int cmd_ttest(const TTestFlags& f, std::ostream& out) {
  auto load = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return read_trials(in, fs::path(path).stem().string());
  };
  const TrialSet a = load(f.a), b = load(f.b);
  const TTestResult r = t_test(a, b, f.pooled ? TTestKind::kPooled : TTestKind::kWelch);
  const TrialSummary sa = summarize(a), sb = summarize(b);
  out << "# " << a.name << ' ' << format_mean_std(sa) << " vs " << b.name << ' '
      << format_mean_std(sb) << " df=" << format_double(r.df) << '\n';
  write_significance(out, {{a.name + "-" + b.name, r}});
  return kExitOk;
}

// -------------------------------------------------------------- gradcheck

struct GradFlags {
  std::size_t d = 3, h = 4, k = 3, layers = 2, frame = 5, streams = 2;
  std::uint64_t seeds = 20, base_seed = 0;
  double tol = 1e-4;
  std::string loss = "both";
};

int cmd_gradcheck(const GradFlags& f, std::ostream& out) {
  std::vector<LossKind> kinds;
  if (f.loss == "both") {
    kinds = {LossKind::kCE, LossKind::kF1};
  } else {
    kinds = {loss_from_flag(f.loss)};
  }
  bool ok = true;
  double worst = 0.0;
  out << "seed,loss,tensor,max_rel_error,passed\n";
  for (std::uint64_t s = f.base_seed; s < f.base_seed + f.seeds; ++s) {
    const CheckCase c = make_check_case(s, f.d, f.h, f.k, f.layers, f.streams, f.frame);
    for (LossKind kind : kinds) {
      const GradCheckReport rep = grad_check(c.net, c.frame, kind, f.tol);
      for (const auto& t : rep.tensors) {
        out << s << ',' << to_string(kind) << ',' << t.name << ',' << format_double(t.max_rel_error)
            << ',' << (t.passed ? 1 : 0) << '\n';
      }
      ok = ok && rep.passed();
      worst = std::max(worst, rep.max_rel_error());
    }
  }
  out << "# max_rel_error=" << format_double(worst) << " tolerance=" << format_double(f.tol)
      << (ok ? " PASS" : " FAIL") << '\n';
  return ok ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------- coverage

struct CoverageFlags {
  std::size_t t = 100000;
  std::size_t epochs = 200;
  BaggingConfig cfg;
  bool per_epoch = false;
};

int cmd_coverage(const CoverageFlags& f, std::ostream& out) {
  try {
    f.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Rng rng(f.cfg.seed);
  double sum = 0.0, lo = 1.0, hi = 0.0;
  if (f.per_epoch) out << "epoch,batch_size,frames,unused_fraction\n";
  for (std::size_t e = 1; e <= f.epochs; ++e) {
    const FrameSchedule s = make_schedule(f.t, f.cfg, rng, static_cast<int>(e));
    const double u = epoch_coverage(s, f.t);
    if (f.per_epoch) {
      out << e << ',' << s.batch_size << ',' << s.frame_count() << ',' << format_double(u) << '\n';
    }
    sum += u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  out << "t,epochs,mean_unused,min_unused,max_unused\n"
      << f.t << ',' << f.epochs << ',' << format_double(sum / static_cast<double>(f.epochs)) << ','
      << format_double(lo) << ',' << format_double(hi) << '\n';
  return kExitOk;
}

// -------------------------------------------------------------------- toy

struct ToyFlags {
  ToyConfig cfg;
  std::size_t trials = 10;
  std::uint64_t base_seed = 0;
  std::string out_dir;
};

int cmd_toy(const ToyFlags& f, std::ostream& out) {
  TrialSet single{"single", {}, {}}, ens{"ensemble", {}, {}};
  out << "trial,seed,single_f1,ensemble_f1\n";
  for (std::size_t i = 0; i < f.trials; ++i) {
    const ToyTrial r = run_toy_trial(f.cfg, f.base_seed + i);
    out << i << ',' << r.seed << ',' << format_double(r.single_f1) << ','
        << format_double(r.ensemble_f1) << std::endl;
    single.seeds.push_back(r.seed);
    single.scores.push_back(r.single_f1);
    ens.seeds.push_back(r.seed);
    ens.scores.push_back(r.ensemble_f1);
  }
  out << "# single " << format_mean_std(summarize(single)) << ", ensemble "
      << format_mean_std(summarize(ens)) << '\n';
  if (!f.out_dir.empty()) {
    const fs::path dir(f.out_dir);
    auto a = open_out(dir / "trials_single.csv");
    write_trials(a, single);
    auto b = open_out(dir / "trials_ensemble.csv");
    write_trials(b, ens);
  }
  return kExitOk;
}

void add_bagging_flags(CLI::App* app, BaggingConfig& cfg) {
  app->add_option("--b-low", cfg.b_low, "Smallest mini-batch size")->check(CLI::PositiveNumber);
  app->add_option("--b-high", cfg.b_high, "Largest mini-batch size")->check(CLI::PositiveNumber);
  app->add_option("--l-low", cfg.l_low, "Shortest frame")->check(CLI::PositiveNumber);
  app->add_option("--l-high", cfg.l_high, "Longest frame")->check(CLI::PositiveNumber);
  app->add_option("--seed", cfg.seed, "Random seed");
}

void add_network_flags(CLI::App* app, BaggingConfig& cfg) {
  app->add_option("--hidden", cfg.hidden_dim, "LSTM units per layer")->check(CLI::PositiveNumber);
  app->add_option("--layers", cfg.num_layers, "LSTM layers")->check(CLI::PositiveNumber);
  app->add_option("--dropout", cfg.dropout, "Dropout probability")->check(CLI::Range(0.0, 0.999999));
  app->add_option("--lr", cfg.adam.learning_rate, "ADAM learning rate")->check(CLI::PositiveNumber);
  app->add_option("--max-epoch", cfg.max_epoch, "Epochs, one snapshot each")->check(CLI::PositiveNumber);
}

const auto kLossNames = CLI::IsMember({"ce", "f1", "CE", "F1"});

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string describe_config(const BaggingConfig& cfg) {
  std::ostringstream ss;
  ss << "b_low=" << cfg.b_low << ";b_high=" << cfg.b_high << ";l_low=" << cfg.l_low
     << ";l_high=" << cfg.l_high << ";max_epoch=" << cfg.max_epoch << ";loss=" << to_string(cfg.loss)
     << ";dropout=" << format_double(cfg.dropout) << ";seed=" << cfg.seed
     << ";hidden=" << cfg.hidden_dim << ";layers=" << cfg.num_layers
     << ";lr=" << format_double(cfg.adam.learning_rate) << ";beta1=" << format_double(cfg.adam.beta1)
     << ";beta2=" << format_double(cfg.adam.beta2) << ";eps=" << format_double(cfg.adam.epsilon);
  return ss.str();
}

ToyConfig::ToyConfig() {
  data.dims = 6;
  data.num_classes = 4;
  data.length = 20000;
  data.regime = Regime::kImbalanced;
  data.snr = 1.0;
  data.variability = 0.45;
  data.seed = 1000;
  bagging.hidden_dim = 32;
  bagging.num_layers = 2;
  bagging.max_epoch = 20;
  bagging.b_low = 8;
  bagging.b_high = 16;
  bagging.l_low = 16;
  bagging.l_high = 32;
  bagging.dropout = 0.5;
}

ToyTrial run_toy_trial(const ToyConfig& cfg, std::uint64_t seed) {
  SynthConfig sc = cfg.data;
  sc.seed = cfg.data.seed + seed;
  const LabeledSequence seq = synth_har(sc);
  const Split split = classwise_split(seq, cfg.train_fraction, cfg.val_fraction);
  const NormStats stats = fit_normalizer(split.train);
  const LabeledSequence train = apply_normalizer(stats, split.train);
  const LabeledSequence val = apply_normalizer(stats, split.val);
  const LabeledSequence test = apply_normalizer(stats, split.test);
  BaggingConfig bc = cfg.bagging;
  bc.seed = seed;
  const std::vector<BaseLearner> learners = run_bagging(train, val, bc);
  auto score = [&](const Ensemble& e) {
    return mean_f1(confusion(ensemble_infer(e, test.samples).labels, test.labels, seq.num_classes));
  };
  return {seed, score(select_top_m(learners, 1)), score(select_top_m(learners, cfg.ensemble_size))};
}

CheckCase make_check_case(std::uint64_t seed, std::size_t input_dim, std::size_t hidden_dim,
                          std::size_t num_classes, std::size_t num_layers, std::size_t streams,
                          std::size_t frame_length) {
  Rng rng(seed);
  CheckCase c{init_network(input_dim, hidden_dim, num_classes, num_layers, rng), {}};
  // Nonzero biases so every tensor carries a gradient signal.
  for (auto& p : parameters(c.net)) {
    if (p.dims.size() == 1) {
      for (double& v : p.values) v += rng.uniform(-0.5, 0.5);
    }
  }
  for (std::size_t b = 0; b < streams; ++b) {
    Matrix x(frame_length, input_dim);
    for (double& v : x.values()) v = rng.normal();
    c.frame.inputs.push_back(std::move(x));
    std::vector<std::size_t> y(frame_length);
    for (auto& v : y) {
      v = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(num_classes) - 1));
    }
    c.frame.targets.push_back(std::move(y));
    LstmState s = LstmState::zeros(c.net);
    for (auto& layer : s.layers) {
      for (double& v : layer.h) v = rng.uniform(-0.5, 0.5);
      for (double& v : layer.c) v = rng.uniform(-1.0, 1.0);
    }
    c.frame.states.push_back(std::move(s));
  }
  return c;
}

namespace {

int run_unguarded(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Epoch-wise bagged LSTM ensembles for activity recognition", "lstmens"};
  app.require_subcommand(1);
  std::function<int()> action;

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic labelled sensor stream");
  s->add_option("--d", synth.cfg.dims, "Channels")->check(CLI::Range(2, 1000));
  s->add_option("--k", synth.cfg.num_classes, "Classes, class 0 is NULL")->check(CLI::Range(2, 1000));
  s->add_option("--t", synth.cfg.length, "Samples")->required()->check(CLI::PositiveNumber);
  s->add_option("--regime", synth.regime, "balanced or imbalanced")
      ->check(CLI::IsMember({"balanced", "imbalanced"}));
  s->add_option("--snr", synth.cfg.snr, "Signal-to-noise power ratio")->check(CLI::PositiveNumber);
  s->add_option("--variability", synth.cfg.variability, "Per-run signature perturbation")
      ->check(CLI::Range(0.0, 0.99));
  s->add_option("--seed", synth.cfg.seed, "Random seed");
  s->add_option("--out", synth.out, "Output CSV")->required();
  s->callback([&] { action = [&] { return cmd_synth(synth, out); }; });

  TrainFlags train;
  auto* t = app.add_subcommand("train", "Train one network and snapshot it after every epoch");
  add_data_flags(t, train.data);
  add_split_flags(t, train.split);
  add_network_flags(t, train.cfg);
  add_bagging_flags(t, train.cfg);
  t->add_option("--loss", train.loss, "ce or f1")->check(kLossNames);
  t->add_option("--out", train.out, "Output directory")->required();
  t->callback([&] { action = [&] { return cmd_train(train, out, err); }; });

  FuseFlags fuse;
  auto* fu = app.add_subcommand("fuse", "Select ensemble members from learner manifests");
  fu->add_option("--manifest", fuse.manifest, "Learner manifest")->check(CLI::ExistingFile);
  fu->add_option("--m", fuse.m, "Ensemble size")->check(CLI::PositiveNumber);
  fu->add_flag("--mixed", fuse.mixed, "Combine a CE and an F1 run");
  fu->add_option("--m-each", fuse.m_each, "Members taken from each run")->check(CLI::PositiveNumber);
  fu->add_option("--ce", fuse.ce_manifest, "CE learner manifest")->check(CLI::ExistingFile);
  fu->add_option("--f1", fuse.f1_manifest, "F1 learner manifest")->check(CLI::ExistingFile);
  fu->add_option("--out", fuse.out, "Ensemble manifest to write")->required();
  fu->callback([&] { action = [&] { return cmd_fuse(fuse, out); }; });

  InferFlags infer;
  auto* in = app.add_subcommand("infer", "Sample-wise inference with an ensemble or model");
  in->add_option("--ensemble", infer.ensemble, "Ensemble manifest")->check(CLI::ExistingFile);
  in->add_option("--model", infer.model, "Single model file")->check(CLI::ExistingFile);
  add_data_flags(in, infer.data);
  in->add_option("--run", infer.run_dir, "Training directory; reuses its split and normalizer")
      ->check(CLI::ExistingDirectory);
  in->add_option("--norm", infer.norm, "Normalizer statistics")->check(CLI::ExistingFile);
  in->add_option("--part", infer.part, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  in->add_option("--out", infer.out, "Prediction CSV")->required();
  in->callback([&] { action = [&] { return cmd_infer(infer, out, err); }; });

  EvalFlags eval;
  auto* ev = app.add_subcommand("eval", "Mean F1, per-class F1 and confusion of predictions");
  ev->add_option("--pred", eval.pred, "Prediction CSV from infer")->required()->check(CLI::ExistingFile);
  ev->add_option("--k", eval.k, "Number of classes")->check(CLI::PositiveNumber);
  ev->add_option("--out-dir", eval.out_dir, "Directory for per_class_f1.csv and confusion.csv");
  ev->callback([&] { action = [&] { return cmd_eval(eval, out); }; });

  TTestFlags tt;
  auto* ts = app.add_subcommand("ttest", "Two-tailed t-test between two trial CSVs");
  ts->add_option("--a", tt.a, "Trials CSV")->required()->check(CLI::ExistingFile);
  ts->add_option("--b", tt.b, "Trials CSV")->required()->check(CLI::ExistingFile);
  ts->add_flag("--pooled", tt.pooled, "Pooled-variance test instead of Welch");
  ts->callback([&] { action = [&] { return cmd_ttest(tt, out); }; });

  GradFlags grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the BPTT gradients");
  g->add_option("--d", grad.d)->check(CLI::PositiveNumber);
  g->add_option("--hidden", grad.h)->check(CLI::PositiveNumber);
  g->add_option("--k", grad.k)->check(CLI::Range(2, 1000));
  g->add_option("--layers", grad.layers)->check(CLI::PositiveNumber);
  g->add_option("--frame", grad.frame, "Frame length")->check(CLI::PositiveNumber);
  g->add_option("--streams", grad.streams, "Mini-batch size")->check(CLI::PositiveNumber);
  g->add_option("--seeds", grad.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  g->add_option("--base-seed", grad.base_seed);
  g->add_option("--tol", grad.tol, "Relative error tolerance")->check(CLI::PositiveNumber);
  g->add_option("--loss", grad.loss, "ce, f1 or both")->check(CLI::IsMember({"ce", "f1", "both"}));
  g->callback([&] { action = [&] { return cmd_gradcheck(grad, out); }; });

  CoverageFlags cov;
  auto* c = app.add_subcommand("coverage", "Monte-Carlo estimate of unused training data per epoch");
  c->add_option("--t", cov.t, "Sequence length")->check(CLI::PositiveNumber);
  c->add_option("--epochs", cov.epochs, "Simulated epochs")->check(CLI::PositiveNumber);
  add_bagging_flags(c, cov.cfg);
  c->add_flag("--per-epoch", cov.per_epoch, "Also print one row per epoch");
  c->callback([&] { action = [&] { return cmd_coverage(cov, out); }; });

  ToyFlags toy;
  auto* ty = app.add_subcommand("toy", "Single learner vs ensemble on synthetic data");
  ty->add_option("--trials", toy.trials, "Number of trials")->check(CLI::PositiveNumber);
  ty->add_option("--base-seed", toy.base_seed, "Seed of the first trial");
  ty->add_option("--snr", toy.cfg.data.snr, "Signal-to-noise power ratio")->check(CLI::PositiveNumber);
  ty->add_option("--variability", toy.cfg.data.variability, "Per-run signature perturbation")->check(CLI::Range(0.0, 0.99));
  ty->add_option("--m", toy.cfg.ensemble_size, "Ensemble size")->check(CLI::PositiveNumber);
  add_network_flags(ty, toy.cfg.bagging);
  ty->add_option("--out-dir", toy.out_dir, "Directory for the trial CSVs");
  ty->callback([&] { action = [&] { return cmd_toy(toy, out); }; });

  std::vector<const char*> argv{"lstmens"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0; every other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_unguarded(args, out, err);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace lstmens::cli
