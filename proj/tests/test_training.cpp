#include <gtest/gtest.h>

#include <cmath>

#include "lstmens/training.hpp"

using namespace lstmens;

namespace {

LstmNetwork random_net(std::size_t d, std::size_t h, std::size_t k, std::size_t l, Rng& rng) {
  LstmNetwork net = LstmNetwork::zeros(d, h, k, l);
  for (auto& p : parameters(net)) {
    for (double& v : p.values) v = rng.uniform(-0.8, 0.8);
  }
  return net;
}

FrameBatch random_frame(const LstmNetwork& net, std::size_t streams, std::size_t len, Rng& rng) {
  FrameBatch f;
  for (std::size_t b = 0; b < streams; ++b) {
    Matrix x(len, net.input_dim());
    for (double& v : x.values()) v = rng.normal();
    f.inputs.push_back(std::move(x));
    std::vector<std::size_t> y(len);
    for (auto& v : y) v = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(net.num_classes()) - 1));
    f.targets.push_back(std::move(y));
    LstmState s = LstmState::zeros(net);
    for (auto& layer : s.layers) {
      for (double& v : layer.h) v = rng.uniform(-0.5, 0.5);
      for (double& v : layer.c) v = rng.uniform(-0.5, 0.5);
    }
    f.states.push_back(std::move(s));
  }
  return f;
}

// Independent F1 loss written from the definition.
double f1_oracle(const std::vector<RealVector>& p, const std::vector<std::size_t>& y) {
  const std::size_t k = p.front().size();
  double sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = 0.0, ps = 0.0, zs = 0.0;
    for (std::size_t t = 0; t < p.size(); ++t) {
      const double z = y[t] == c ? 1.0 : 0.0;
      tp += p[t][c] * z;
      ps += p[t][c];
      zs += z;
    }
    if (zs == 0.0) continue;
    ++present;
    sum += 1.0 - 2.0 * tp / (ps + zs);
  }
  return sum / present;
}

}  // namespace

TEST(CeLoss, HandValue) {
  const std::vector<RealVector> logits{{0.0, std::log(3.0)}, {2.0, 2.0}};
  const std::vector<std::size_t> y{1, 0};
  EXPECT_NEAR(ce_loss(logits, y), (-std::log(0.75) - std::log(0.5)) / 2.0, 1e-15);
}

TEST(CeLoss, SaturatedLogitsStayFinite) {
  const std::vector<RealVector> logits{{-1000.0, 1000.0}};
  const std::vector<std::size_t> y{0};
  EXPECT_NEAR(ce_loss(logits, y), 2000.0, 1e-9);
}

TEST(F1Loss, PerfectAndHandCase) {
  const std::vector<RealVector> perfect{{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<std::size_t> y{0, 1};
  EXPECT_NEAR(f1_loss(perfect, y), 0.0, 1e-15);

  // Class 2 never occurs and is left out of the mean.
  const std::vector<RealVector> p{{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}, {0.4, 0.4, 0.2}};
  const std::vector<std::size_t> yy{0, 1, 0};
  const double c0 = 1.0 - 2.0 * 0.9 / (1.0 + 2.0);
  const double c1 = 1.0 - 2.0 * 0.6 / (1.3 + 1.0);
  EXPECT_NEAR(f1_loss(p, yy), (c0 + c1) / 2.0, 1e-15);
}

TEST(F1Loss, MatchesOracleOnRandomBatches) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 6));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 30));
    std::vector<RealVector> p(n);
    std::vector<std::size_t> y(n);
    for (std::size_t t = 0; t < n; ++t) {
      RealVector z(k);
      for (double& v : z) v = rng.normal() * 2.0;
      p[t] = softmax(z);
      y[t] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1));
    }
    EXPECT_NEAR(f1_loss(p, y), f1_oracle(p, y), 1e-13);
  }
}

TEST(LossGradient, MatchesFiniteDifferencesOnLogits) {
  Rng rng(9);
  for (LossKind kind : {LossKind::kCE, LossKind::kF1}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t k = 4, n = 7;
      std::vector<RealVector> z(n, RealVector(k));
      std::vector<std::size_t> y(n);
      for (std::size_t t = 0; t < n; ++t) {
        for (double& v : z[t]) v = rng.normal();
        y[t] = static_cast<std::size_t>(rng.uniform_int(0, 3));
      }
      const LossGradient g = loss_gradient(kind, z, y);
      auto value = [&](const std::vector<RealVector>& zz) {
        if (kind == LossKind::kCE) return ce_loss(zz, y);
        std::vector<RealVector> p;
        for (const auto& r : zz) p.push_back(softmax(r));
        return f1_loss(p, y);
      };
      EXPECT_NEAR(g.value, value(z), 1e-14);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < k; ++c) {
          auto zp = z, zm = z;
          zp[t][c] += 1e-6;
          zm[t][c] -= 1e-6;
          const double num = (value(zp) - value(zm)) / 2e-6;
          EXPECT_NEAR(g.dlogits[t][c], num, 1e-8);
        }
      }
    }
  }
}

TEST(Bptt, GradientCheckBothLosses) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    const LstmNetwork net = random_net(3, 4, 3, 2, rng);
    const FrameBatch frame = random_frame(net, 2, 5, rng);
    for (LossKind kind : {LossKind::kCE, LossKind::kF1}) {
      const GradCheckReport rep = grad_check(net, frame, kind, 1e-4);
      EXPECT_TRUE(rep.passed()) << to_string(kind) << " seed " << seed << " max rel "
                                << rep.max_rel_error();
      EXPECT_EQ(rep.tensors.size(), parameters(net).size());
    }
  }
}

TEST(Bptt, GradientCheckDetectsCorruptedGradient) {
  Rng rng(3);
  const LstmNetwork net = random_net(2, 3, 3, 1, rng);
  const FrameBatch frame = random_frame(net, 1, 4, rng);
  Rng drop(0);
  FrameGradient fg = bptt_frame(net, frame, LossKind::kCE, 0.0, drop);
  fg.grads.layers[0].whc(1, 2) += 0.1;
  const GradCheckReport rep = compare_gradients(net, frame, LossKind::kCE, fg.grads, 1e-4);
  EXPECT_FALSE(rep.passed());
  for (const auto& t : rep.tensors) EXPECT_EQ(t.passed, t.name != "layer0.Whc") << t.name;
}

TEST(Bptt, NoDropoutLossAndStatesMatchForwardPass) {
  Rng rng(14);
  const LstmNetwork net = random_net(3, 5, 4, 2, rng);
  const FrameBatch frame = random_frame(net, 3, 6, rng);
  Rng drop(1);
  const FrameGradient fg = bptt_frame(net, frame, LossKind::kCE, 0.0, drop);
  EXPECT_DOUBLE_EQ(fg.loss, frame_loss(net, frame, LossKind::kCE));
  for (std::size_t b = 0; b < frame.num_streams(); ++b) {
    LstmState s = frame.states[b];
    infer_stream(net, frame.inputs[b], s);
    EXPECT_EQ(fg.states[b], s);
  }
}

TEST(Bptt, DropoutIsReproducibleAndChangesTheLoss) {
  Rng rng(15);
  const LstmNetwork net = random_net(3, 8, 4, 2, rng);
  const FrameBatch frame = random_frame(net, 2, 6, rng);
  Rng d1(5), d2(5);
  const FrameGradient a = bptt_frame(net, frame, LossKind::kCE, 0.5, d1);
  const FrameGradient b = bptt_frame(net, frame, LossKind::kCE, 0.5, d2);
  EXPECT_EQ(a.grads, b.grads);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_NE(a.loss, frame_loss(net, frame, LossKind::kCE));
  // The bottom layer's carried state never sees a mask.
  Rng d3(6);
  const FrameGradient c = bptt_frame(net, frame, LossKind::kCE, 0.0, d3);
  for (std::size_t s = 0; s < frame.num_streams(); ++s) {
    EXPECT_EQ(a.states[s].layers[0], c.states[s].layers[0]);
  }
}

TEST(Bptt, RejectsMismatchedFrame) {
  Rng rng(2);
  const LstmNetwork net = random_net(3, 2, 2, 1, rng);
  FrameBatch frame = random_frame(net, 2, 4, rng);
  frame.targets[1].pop_back();
  Rng drop(0);
  EXPECT_ANY_THROW(bptt_frame(net, frame, LossKind::kCE, 0.0, drop));
}

TEST(Adam, FirstStepsMatchScalarRecurrence) {
  Rng rng(8);
  LstmNetwork net = random_net(2, 2, 2, 1, rng);
  const LstmNetwork start = net;
  AdamState opt = AdamState::for_network(net);
  const AdamConfig cfg;
  std::vector<LstmNetwork> grads;
  for (int s = 0; s < 3; ++s) {
    LstmNetwork g = LstmNetwork::zeros(2, 2, 2, 1);
    for (auto& p : parameters(g)) {
      for (double& v : p.values) v = rng.normal();
    }
    grads.push_back(g);
    adam_update(net, g, opt);
  }
  EXPECT_EQ(opt.step, 3);
  const auto p0 = parameters(start);
  const auto p1 = parameters(net);
  std::vector<std::vector<ConstParamRef>> gp;
  for (const auto& g : grads) gp.push_back(parameters(g));
  for (std::size_t t = 0; t < p0.size(); ++t) {
    for (std::size_t i = 0; i < p0[t].values.size(); ++i) {
      double w = p0[t].values[i], m = 0.0, v = 0.0;
      for (int s = 0; s < 3; ++s) {
        const double g = gp[static_cast<std::size_t>(s)][t].values[i];
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        const double mh = m / (1 - std::pow(cfg.beta1, s + 1));
        const double vh = v / (1 - std::pow(cfg.beta2, s + 1));
        w -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
      }
      EXPECT_NEAR(p1[t].values[i], w, 1e-15);
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  LstmNetwork net = LstmNetwork::zeros(1, 1, 2, 1);
  LstmNetwork g = LstmNetwork::zeros(1, 1, 2, 1);
  g.output.b = {3.0, -0.02};
  AdamState opt = AdamState::for_network(net);
  adam_update(net, g, opt);
  EXPECT_NEAR(net.output.b[0], -0.001, 1e-11);
  EXPECT_NEAR(net.output.b[1], 0.001, 1e-9);
  EXPECT_EQ(net.layers[0].wxf(0, 0), 0.0);
}
