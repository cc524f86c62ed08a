#include "lstmens/bagging.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lstmens/eval.hpp"

namespace lstmens {

namespace fs = std::filesystem;

void BaggingConfig::validate() const {
  if (b_low < 1 || b_low > b_high) throw std::invalid_argument("need 1 <= b_low <= b_high");
  if (l_low < 1 || l_low > l_high) throw std::invalid_argument("need 1 <= l_low <= l_high");
  if (max_epoch < 1) throw std::invalid_argument("max_epoch must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (hidden_dim < 1 || num_layers < 1) throw std::invalid_argument("network size must be positive");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

std::size_t FrameSchedule::stream_length() const {
  std::size_t n = 0;
  for (std::size_t l : frame_lengths) n += l;
  return n;
}

FrameSchedule make_schedule(std::size_t length, const BaggingConfig& cfg, Rng& rng, int epoch) {
  cfg.validate();
  if (length <= cfg.b_high) {
    throw std::invalid_argument("sequence of length " + std::to_string(length) +
                                " too short for b_high = " + std::to_string(cfg.b_high));
  }
  FrameSchedule s;
  s.epoch = epoch;
  s.batch_size = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(cfg.b_low), static_cast<std::int64_t>(cfg.b_high)));
  // floor(T (1 - 1/B)); a single stream (B = 1) may only start at position 1.
  const std::size_t max_start =
      std::max<std::size_t>(1, length * (s.batch_size - 1) / s.batch_size);
  s.starts.reserve(s.batch_size);
  for (std::size_t b = 0; b < s.batch_size; ++b) {
    s.starts.push_back(static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_start))) - 1);
  }
  s.budget = length / s.batch_size;
  std::size_t consumed = 0;
  while (consumed <= s.budget) {
    const auto l = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.l_low), static_cast<std::int64_t>(cfg.l_high)));
    s.frame_lengths.push_back(l);
    consumed += l;
  }
  return s;
}

std::size_t schedule_position(const FrameSchedule& schedule, std::size_t b, std::size_t offset,
                              std::size_t length) {
  return (schedule.starts[b] + offset) % length;
}

double epoch_coverage(const FrameSchedule& schedule, std::size_t length) {
  if (length == 0) throw std::invalid_argument("epoch_coverage: empty sequence");
  std::vector<char> touched(length, 0);
  const std::size_t span = schedule.stream_length();
  for (std::size_t b = 0; b < schedule.batch_size; ++b) {
    if (span >= length) {
      std::fill(touched.begin(), touched.end(), 1);
      break;
    }
    for (std::size_t off = 0; off < span; ++off) {
      touched[schedule_position(schedule, b, off, length)] = 1;
    }
  }
  std::size_t unused = 0;
  for (char t : touched) unused += t == 0 ? 1 : 0;
  return static_cast<double>(unused) / static_cast<double>(length);
}

EpochResult train_epoch(LstmNetwork& net, const LabeledSequence& data,
                        const FrameSchedule& schedule, const BaggingConfig& cfg, AdamState& opt,
                        Rng& dropout_rng) {
  if (data.dims() != net.input_dim()) {
    throw DimensionError("training data has " + std::to_string(data.dims()) +
                         " channels, network expects " + std::to_string(net.input_dim()));
  }
  if (data.num_classes != net.num_classes()) {
    throw DimensionError("training data has " + std::to_string(data.num_classes) +
                         " classes, network has " + std::to_string(net.num_classes()));
  }
  const std::size_t t_len = data.length();
  const std::size_t n_streams = schedule.batch_size;
  FrameBatch frame;
  frame.states.assign(n_streams, LstmState::zeros(net));
  frame.inputs.resize(n_streams);
  frame.targets.resize(n_streams);

  EpochResult result;
  double loss_sum = 0.0;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < schedule.frame_count(); ++i) {
    const std::size_t len = schedule.frame_lengths[i];
    for (std::size_t b = 0; b < n_streams; ++b) {
      Matrix& in = frame.inputs[b];
      in = Matrix(len, data.dims());
      auto& tg = frame.targets[b];
      tg.resize(len);
      for (std::size_t u = 0; u < len; ++u) {
        const std::size_t pos = schedule_position(schedule, b, offset + u, t_len);
        auto src = data.samples.row(pos);
        std::copy(src.begin(), src.end(), in.row(u).begin());
        tg[u] = data.labels[pos];
      }
    }
    FrameGradient fg;
    try {
      fg = bptt_frame(net, frame, cfg.loss, cfg.dropout, dropout_rng);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("epoch " + std::to_string(schedule.epoch) + ", frame " +
                               std::to_string(i) + ": " + e.what());
    }
    adam_update(net, fg.grads, opt);
    frame.states = std::move(fg.states);
    loss_sum += fg.loss;
    ++result.updates;
    offset += len;
  }
  result.mean_loss = result.updates ? loss_sum / static_cast<double>(result.updates) : 0.0;
  return result;
}

double score_network(const LstmNetwork& net, const LabeledSequence& seq) {
  const auto probs = infer_stream(net, seq.samples);
  std::vector<std::size_t> preds;
  preds.reserve(probs.size());
  for (const auto& p : probs) preds.push_back(predict_label(p));
  return mean_f1(confusion(preds, seq.labels, net.num_classes()));
}

void stream_bagging(const LabeledSequence& train, const LabeledSequence& val,
                    const BaggingConfig& cfg, const EpochCallback& on_epoch) {
  if (!on_epoch) throw std::invalid_argument("stream_bagging needs an epoch callback");
  cfg.validate();
  if (val.length() == 0) throw std::invalid_argument("validation split is empty");
  if (train.num_classes != val.num_classes || train.dims() != val.dims()) {
    throw DimensionError("training and validation splits disagree on channels or classes");
  }
  const Rng master(cfg.seed);
  Rng init_rng = master.derive(1);
  Rng schedule_rng = master.derive(2);
  Rng dropout_rng = master.derive(3);

  LstmNetwork net =
      init_network(train.dims(), cfg.hidden_dim, train.num_classes, cfg.num_layers, init_rng);
  AdamState opt = AdamState::for_network(net, cfg.adam);

  for (int epoch = 1; epoch <= cfg.max_epoch; ++epoch) {
    const FrameSchedule schedule = make_schedule(train.length(), cfg, schedule_rng, epoch);
    const EpochResult er = train_epoch(net, train, schedule, cfg, opt, dropout_rng);
    on_epoch(BaseLearner{net, epoch, cfg.loss, score_network(net, val), er.mean_loss, {}});
  }
}

std::vector<BaseLearner> run_bagging(const LabeledSequence& train, const LabeledSequence& val,
                                     const BaggingConfig& cfg, const EpochCallback& on_epoch) {
  std::vector<BaseLearner> learners;
  learners.reserve(static_cast<std::size_t>(std::max(cfg.max_epoch, 0)));
  stream_bagging(train, val, cfg, [&](const BaseLearner& learner) {
    if (on_epoch) on_epoch(learner);
    learners.push_back(learner);
  });
  return learners;
}

std::string learner_filename(int epoch, LossKind loss) {
  return "learner_e" + std::to_string(epoch) + "_" + (loss == LossKind::kCE ? "ce" : "f1") +
         ".lstm";
}

std::string save_learners(const std::string& dir, const std::vector<BaseLearner>& learners) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& l : learners) {
    const std::string name = learner_filename(l.epoch, l.loss);
    save_model((fs::path(dir) / name).string(), l.net, {l.loss, l.epoch, l.val_f1});
    entries.push_back({l.epoch, l.loss, l.val_f1, name});
  }
  const std::string manifest = (fs::path(dir) / "manifest.csv").string();
  write_manifest(manifest, entries);
  return manifest;
}

void write_manifest(const std::string& manifest_path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + manifest_path + "'");
  out << "epoch,loss,val_f1,path\n";
  for (const auto& e : entries) {
    out << e.epoch << ',' << to_string(e.loss) << ',' << format_double(e.val_f1) << ',' << e.path
        << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 || line.empty() || line.front() == '#') continue;
    std::istringstream ss(line);
    std::string epoch, loss, val_f1, path;
    if (!std::getline(ss, epoch, ',') || !std::getline(ss, loss, ',') ||
        !std::getline(ss, val_f1, ',') || !std::getline(ss, path)) {
      throw std::runtime_error(manifest_path + " row " + std::to_string(row) +
                               ": expected epoch,loss,val_f1,path");
    }
    try {
      out.push_back({std::stoi(epoch), parse_loss_kind(loss), parse_double(val_f1), path});
    } catch (const std::exception& e) {
      throw std::runtime_error(manifest_path + " row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

std::vector<BaseLearner> load_learners(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<BaseLearner> out;
  for (const auto& e : read_manifest(manifest_path)) {
    fs::path p(e.path);
    if (p.is_relative()) p = base / p;
    LoadedModel m = load_model(p.string());
    out.push_back({std::move(m.net), e.epoch, e.loss, e.val_f1, 0.0, p.string()});
  }
  return out;
}

}  // namespace lstmens
