#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lstmens/core_math.hpp"
#include "lstmens/lstm_net.hpp"

namespace lstmens {

/// Mean cross entropy of `targets` under softmax(logits), evaluated through
/// log-softmax so saturated logits never produce log(0).
double ce_loss(const std::vector<RealVector>& logits, std::span<const std::size_t> targets);

/// Batch F1 loss over probability vectors: the mean, over classes that occur
/// in `targets`, of 1 - 2 sum_t p_tk z_tk / (sum_t p_tk + sum_t z_tk).
/// Classes with no target in the batch are left out of the mean.
double f1_loss(const std::vector<RealVector>& probs, std::span<const std::size_t> targets);

/// Loss value and its gradient with respect to each sample's logits.
struct LossGradient {
  double value = 0.0;
  std::vector<RealVector> dlogits;
};
LossGradient loss_gradient(LossKind kind, const std::vector<RealVector>& logits,
                           std::span<const std::size_t> targets);

/// B streams advanced in lockstep over one frame of L timesteps.
struct FrameBatch {
  std::vector<Matrix> inputs;                     // per stream: L x D
  std::vector<std::vector<std::size_t>> targets;  // per stream: L labels
  std::vector<LstmState> states;                  // per stream: state entering the frame

  std::size_t num_streams() const { return inputs.size(); }
  std::size_t frame_length() const { return inputs.empty() ? 0 : inputs.front().rows(); }
  void validate(const LstmNetwork& net) const;
};

struct FrameGradient {
  LstmNetwork grads;  // same shapes as the network
  std::vector<LstmState> states;  // per stream: state after the frame
  double loss = 0.0;
};

/// Forward and backward over one frame. Inverted dropout with probability
/// `dropout_p` is sampled per timestep, layer and unit on each layer's output
/// (feed-forward path only). Gradients stop at the incoming carried state.
FrameGradient bptt_frame(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                         double dropout_p, Rng& rng);

/// Loss of a frame without dropout and without gradients.
double frame_loss(const LstmNetwork& net, const FrameBatch& frame, LossKind loss);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments per parameter tensor, in parameters() order.
struct AdamState {
  AdamConfig config;
  std::vector<RealVector> m;
  std::vector<RealVector> v;
  long step = 0;

  static AdamState for_network(const LstmNetwork& net, AdamConfig config = {});
};

/// One bias-corrected ADAM step: net -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_update(LstmNetwork& net, const LstmNetwork& grads, AdamState& opt);

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<TensorCheck> tensors;

  bool passed() const;
  double max_rel_error() const;
};

inline constexpr double kGradCheckStep = 1e-5;

/// Central-difference check of bptt_frame (dropout off). The difference
/// quotients come from an extended-precision forward pass, so forward-pass
/// rounding does not swamp small gradient entries. Relative error per entry
/// is |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                           double tolerance);

/// Same comparison against caller-supplied analytic gradients.
GradCheckReport compare_gradients(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                                  const LstmNetwork& analytic, double tolerance);

}  // namespace lstmens
