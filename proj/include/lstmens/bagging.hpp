#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lstmens/core_math.hpp"
#include "lstmens/data.hpp"
#include "lstmens/lstm_net.hpp"
#include "lstmens/training.hpp"

namespace lstmens {

/// Epoch-wise bagging configuration. Defaults are the full-scale setup:
/// B ~ U(128, 256), L ~ U(16, 32), 100 epochs, 2 x 256 LSTM, dropout 0.5.
struct BaggingConfig {
  std::size_t b_low = 128;
  std::size_t b_high = 256;
  std::size_t l_low = 16;
  std::size_t l_high = 32;
  int max_epoch = 100;
  LossKind loss = LossKind::kCE;
  double dropout = 0.5;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 256;
  std::size_t num_layers = 2;
  AdamConfig adam;

  void validate() const;
};

/// The randomized plan for one epoch: B streams starting at `starts`, all
/// advanced together by each entry of `frame_lengths`.
struct FrameSchedule {
  int epoch = 0;
  std::size_t batch_size = 0;
  std::vector<std::size_t> starts;  // 0-based; the 1-based start is starts[b] + 1
  std::vector<std::size_t> frame_lengths;
  std::size_t budget = 0;  // floor(T / B)

  std::size_t frame_count() const { return frame_lengths.size(); }
  std::size_t stream_length() const;
};

/// Draws, in order: B ~ U(b_low, b_high); B starts q ~ U(1, floor(T (1 - 1/B)));
/// then frame lengths L ~ U(l_low, l_high) while the consumed length is still
/// <= floor(T / B). Positions past T wrap to the beginning of the sequence.
FrameSchedule make_schedule(std::size_t length, const BaggingConfig& cfg, Rng& rng, int epoch = 1);

/// Fraction of the T positions that no stream of the schedule touches.
double epoch_coverage(const FrameSchedule& schedule, std::size_t length);

/// Sequence position (0-based) of step `offset` of stream `b`.
std::size_t schedule_position(const FrameSchedule& schedule, std::size_t b, std::size_t offset,
                              std::size_t length);

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t updates = 0;
};

/// One pass over the schedule: states start at zero and carry across the
/// frames of each stream; one ADAM update per frame.
EpochResult train_epoch(LstmNetwork& net, const LabeledSequence& data,
                        const FrameSchedule& schedule, const BaggingConfig& cfg, AdamState& opt,
                        Rng& dropout_rng);

struct BaseLearner {
  LstmNetwork net;
  int epoch = 0;
  LossKind loss = LossKind::kCE;
  double val_f1 = 0.0;
  double train_loss = 0.0;
  std::string path;  // model file the learner was loaded from, if any
};

/// Mean F1 of sample-wise predictions over `seq`, starting from a zero state.
double score_network(const LstmNetwork& net, const LabeledSequence& seq);

using EpochCallback = std::function<void(const BaseLearner&)>;

/// One continuous training run, snapshotting the network after every epoch.
/// All randomness derives from cfg.seed.
std::vector<BaseLearner> run_bagging(const LabeledSequence& train, const LabeledSequence& val,
                                     const BaggingConfig& cfg, const EpochCallback& on_epoch = {});

/// Same run without keeping the snapshots; each one is only handed to `on_epoch`.
void stream_bagging(const LabeledSequence& train, const LabeledSequence& val,
                    const BaggingConfig& cfg, const EpochCallback& on_epoch);

struct ManifestEntry {
  int epoch = 0;
  LossKind loss = LossKind::kCE;
  double val_f1 = 0.0;
  std::string path;  // as written in the manifest
};

std::string learner_filename(int epoch, LossKind loss);

/// Writes one model file per learner plus `manifest.csv`
/// (`epoch,loss,val_f1,path`, paths relative to `dir`). Returns the manifest path.
std::string save_learners(const std::string& dir, const std::vector<BaseLearner>& learners);

/// Writes `epoch,loss,val_f1,path` rows.
void write_manifest(const std::string& manifest_path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);

/// Loads every learner of a manifest; relative paths resolve against the
/// manifest's directory.
std::vector<BaseLearner> load_learners(const std::string& manifest_path);

}  // namespace lstmens
