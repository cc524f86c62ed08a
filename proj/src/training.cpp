#include "lstmens/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lstmens {

namespace {

void check_targets(std::size_t n_samples, std::span<const std::size_t> targets,
                   std::size_t num_classes, const char* who) {
  if (n_samples == 0) throw std::invalid_argument(std::string(who) + ": empty batch");
  if (targets.size() != n_samples) {
    throw DimensionError(std::string(who) + ": " + std::to_string(n_samples) + " samples but " +
                         std::to_string(targets.size()) + " targets");
  }
  for (std::size_t k : targets) {
    if (k >= num_classes) {
      throw std::out_of_range(std::string(who) + ": target " + std::to_string(k) +
                              " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

struct F1Sums {
  RealVector tp, mass, count;  // sum p*z, sum p, sum z per class
  std::size_t present = 0;
};

F1Sums f1_sums(const std::vector<RealVector>& probs, std::span<const std::size_t> targets) {
  const std::size_t k = probs.front().size();
  F1Sums s{RealVector(k, 0.0), RealVector(k, 0.0), RealVector(k, 0.0), 0};
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (probs[t].size() != k) throw DimensionError("f1_loss: ragged probability vectors");
    for (std::size_t j = 0; j < k; ++j) s.mass[j] += probs[t][j];
    s.tp[targets[t]] += probs[t][targets[t]];
    s.count[targets[t]] += 1.0;
  }
  s.present = static_cast<std::size_t>(std::count_if(s.count.begin(), s.count.end(),
                                                     [](double c) { return c > 0.0; }));
  return s;
}

double f1_from_sums(const F1Sums& s) {
  double total = 0.0;
  for (std::size_t j = 0; j < s.count.size(); ++j) {
    if (s.count[j] == 0.0) continue;
    total += 1.0 - 2.0 * s.tp[j] / (s.mass[j] + s.count[j]);
  }
  return total / static_cast<double>(s.present);
}

struct StreamTrace {
  std::vector<ForwardCache> caches;
  std::vector<RealVector> logits;
  LstmState final_state;
};

StreamTrace forward_stream(const LstmNetwork& net, const Matrix& inputs, const LstmState& initial,
                           double dropout_p, Rng* rng) {
  StreamTrace trace;
  trace.caches.reserve(inputs.rows());
  trace.logits.reserve(inputs.rows());
  LstmState state = initial;
  DropoutMasks masks;
  const bool use_dropout = dropout_p > 0.0;
  if (use_dropout) masks.assign(net.num_layers(), RealVector(net.hidden_dim()));
  const double keep_scale = use_dropout ? 1.0 / (1.0 - dropout_p) : 1.0;
  for (std::size_t t = 0; t < inputs.rows(); ++t) {
    if (use_dropout) {
      for (auto& mask : masks) {
        for (double& m : mask) m = rng->uniform01() < dropout_p ? 0.0 : keep_scale;
      }
    }
    StepResult r = step(net, inputs.row(t), state, use_dropout ? &masks : nullptr);
    trace.logits.push_back(std::move(r.logits));
    trace.caches.push_back(std::move(r.cache));
    state = std::move(r.state);
  }
  trace.final_state = std::move(state);
  return trace;
}

void add_to(RealVector& dst, std::span<const double> src) {
  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
}

void backward_stream(const LstmNetwork& net, const StreamTrace& trace,
                     std::span<const RealVector> dlogits, LstmNetwork& grads) {
  const std::size_t n_layers = net.num_layers();
  const std::size_t h = net.hidden_dim();
  std::vector<RealVector> dh_next(n_layers, RealVector(h, 0.0));
  std::vector<RealVector> dc_next(n_layers, RealVector(h, 0.0));
  RealVector dzf(h), dzi(h), dzg(h), dzo(h);

  for (std::size_t t = trace.caches.size(); t-- > 0;) {
    const ForwardCache& fc = trace.caches[t];
    const RealVector& dlogit = dlogits[t];
    accumulate_outer(grads.output.w, fc.top, dlogit);
    add_to(grads.output.b, dlogit);
    RealVector d_above(h, 0.0);
    accumulate_product(net.output.w, dlogit, d_above);

    for (std::size_t l = n_layers; l-- > 0;) {
      const LayerCache& c = fc.layers[l];
      const LstmLayerParams& p = net.layers[l];
      LstmLayerParams& g = grads.layers[l];

      RealVector dh = dh_next[l];
      for (std::size_t j = 0; j < h; ++j) {
        dh[j] += c.mask.empty() ? d_above[j] : d_above[j] * c.mask[j];
      }
      for (std::size_t j = 0; j < h; ++j) {
        const double dc = dh[j] * c.o[j] * (1.0 - c.tanh_c[j] * c.tanh_c[j]) + dc_next[l][j];
        const double d_o = dh[j] * c.tanh_c[j];
        const double d_f = dc * c.c_prev[j];
        const double d_i = dc * c.g[j];
        const double d_g = dc * c.i[j];
        dc_next[l][j] = dc * c.f[j];
        dzf[j] = d_f * c.f[j] * (1.0 - c.f[j]);
        dzi[j] = d_i * c.i[j] * (1.0 - c.i[j]);
        dzg[j] = d_g * (1.0 - c.g[j] * c.g[j]);
        dzo[j] = d_o * c.o[j] * (1.0 - c.o[j]);
      }

      accumulate_outer(g.wxf, c.input, dzf);
      accumulate_outer(g.wxi, c.input, dzi);
      accumulate_outer(g.wxc, c.input, dzg);
      accumulate_outer(g.wxo, c.input, dzo);
      accumulate_outer(g.whf, c.h_prev, dzf);
      accumulate_outer(g.whi, c.h_prev, dzi);
      accumulate_outer(g.whc, c.h_prev, dzg);
      accumulate_outer(g.who, c.h_prev, dzo);
      add_to(g.bf, dzf);
      add_to(g.bi, dzi);
      add_to(g.bc, dzg);
      add_to(g.bo, dzo);

      std::fill(dh_next[l].begin(), dh_next[l].end(), 0.0);
      accumulate_product(p.whf, dzf, dh_next[l]);
      accumulate_product(p.whi, dzi, dh_next[l]);
      accumulate_product(p.whc, dzg, dh_next[l]);
      accumulate_product(p.who, dzo, dh_next[l]);

      if (l > 0) {
        std::fill(d_above.begin(), d_above.end(), 0.0);
        accumulate_product(p.wxf, dzf, d_above);
        accumulate_product(p.wxi, dzi, d_above);
        accumulate_product(p.wxc, dzg, d_above);
        accumulate_product(p.wxo, dzo, d_above);
      }
    }
  }
}

std::vector<std::size_t> flatten_targets(const FrameBatch& frame) {
  std::vector<std::size_t> out;
  for (const auto& t : frame.targets) out.insert(out.end(), t.begin(), t.end());
  return out;
}

}  // namespace

double ce_loss(const std::vector<RealVector>& logits, std::span<const std::size_t> targets) {
  check_targets(logits.size(), targets, logits.empty() ? 0 : logits.front().size(), "ce_loss");
  double total = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    total -= log_softmax(logits[t])[targets[t]];
  }
  return total / static_cast<double>(logits.size());
}

double f1_loss(const std::vector<RealVector>& probs, std::span<const std::size_t> targets) {
  check_targets(probs.size(), targets, probs.empty() ? 0 : probs.front().size(), "f1_loss");
  return f1_from_sums(f1_sums(probs, targets));
}

LossGradient loss_gradient(LossKind kind, const std::vector<RealVector>& logits,
                           std::span<const std::size_t> targets) {
  const std::size_t k = logits.empty() ? 0 : logits.front().size();
  check_targets(logits.size(), targets, k, "loss_gradient");
  const double n = static_cast<double>(logits.size());
  LossGradient out;
  out.dlogits.reserve(logits.size());

  if (kind == LossKind::kCE) {
    out.value = ce_loss(logits, targets);
    for (std::size_t t = 0; t < logits.size(); ++t) {
      RealVector d = softmax(logits[t]);
      d[targets[t]] -= 1.0;
      for (double& x : d) x /= n;
      out.dlogits.push_back(std::move(d));
    }
    return out;
  }

  std::vector<RealVector> probs;
  probs.reserve(logits.size());
  for (const auto& z : logits) probs.push_back(softmax(z));
  const F1Sums s = f1_sums(probs, targets);
  out.value = f1_from_sums(s);

  // d term_k / d p_tk = -2 z_tk / (P_k + Z_k) + 2 S_k / (P_k + Z_k)^2
  const double scale = 1.0 / static_cast<double>(s.present);
  RealVector common(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (s.count[j] == 0.0) continue;
    const double denom = s.mass[j] + s.count[j];
    common[j] = scale * 2.0 * s.tp[j] / (denom * denom);
  }
  for (std::size_t t = 0; t < logits.size(); ++t) {
    RealVector dp = common;
    const std::size_t y = targets[t];
    dp[y] -= scale * 2.0 / (s.mass[y] + s.count[y]);
    const RealVector& p = probs[t];
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += dp[j] * p[j];
    RealVector d(k);
    for (std::size_t j = 0; j < k; ++j) d[j] = p[j] * (dp[j] - dot);
    out.dlogits.push_back(std::move(d));
  }
  return out;
}

void FrameBatch::validate(const LstmNetwork& net) const {
  if (inputs.empty()) throw std::invalid_argument("frame has no streams");
  if (targets.size() != inputs.size() || states.size() != inputs.size()) {
    throw DimensionError("frame: inputs, targets and states must have one entry per stream");
  }
  const std::size_t len = frame_length();
  if (len == 0) throw std::invalid_argument("frame has zero length");
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    if (inputs[b].rows() != len || targets[b].size() != len) {
      throw DimensionError("frame: stream " + std::to_string(b) + " has a different length");
    }
    if (inputs[b].cols() != net.input_dim()) {
      throw DimensionError("frame: stream " + std::to_string(b) + " has input width " +
                           std::to_string(inputs[b].cols()));
    }
  }
}

FrameGradient bptt_frame(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                         double dropout_p, Rng& rng) {
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw std::invalid_argument("dropout probability must lie in [0, 1)");
  }
  frame.validate(net);
  const std::size_t n_streams = frame.num_streams();
  const std::size_t len = frame.frame_length();

  std::vector<StreamTrace> traces;
  traces.reserve(n_streams);
  std::vector<RealVector> all_logits;
  all_logits.reserve(n_streams * len);
  for (std::size_t b = 0; b < n_streams; ++b) {
    traces.push_back(forward_stream(net, frame.inputs[b], frame.states[b], dropout_p, &rng));
    for (const auto& z : traces.back().logits) {
      if (!all_finite(z)) {
        throw std::runtime_error("non-finite logits in stream " + std::to_string(b));
      }
      all_logits.push_back(z);
    }
  }

  const auto targets = flatten_targets(frame);
  LossGradient lg = loss_gradient(loss, all_logits, targets);
  if (!std::isfinite(lg.value)) throw std::runtime_error("non-finite frame loss");

  FrameGradient out;
  out.loss = lg.value;
  out.grads = LstmNetwork::zeros(net.input_dim(), net.hidden_dim(), net.num_classes(),
                                 net.num_layers());
  // Fixed stream order keeps the accumulation bitwise reproducible.
  for (std::size_t b = 0; b < n_streams; ++b) {
    std::span<const RealVector> dl(lg.dlogits.data() + b * len, len);
    backward_stream(net, traces[b], dl, out.grads);
    out.states.push_back(std::move(traces[b].final_state));
  }
  return out;
}

double frame_loss(const LstmNetwork& net, const FrameBatch& frame, LossKind loss) {
  frame.validate(net);
  std::vector<RealVector> all_logits;
  for (std::size_t b = 0; b < frame.num_streams(); ++b) {
    auto trace = forward_stream(net, frame.inputs[b], frame.states[b], 0.0, nullptr);
    for (auto& z : trace.logits) all_logits.push_back(std::move(z));
  }
  const auto targets = flatten_targets(frame);
  if (loss == LossKind::kCE) return ce_loss(all_logits, targets);
  std::vector<RealVector> probs;
  probs.reserve(all_logits.size());
  for (const auto& z : all_logits) probs.push_back(softmax(z));
  return f1_loss(probs, targets);
}

AdamState AdamState::for_network(const LstmNetwork& net, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : parameters(net)) {
    s.m.emplace_back(p.values.size(), 0.0);
    s.v.emplace_back(p.values.size(), 0.0);
  }
  return s;
}

void adam_update(LstmNetwork& net, const LstmNetwork& grads, AdamState& opt) {
  auto params = parameters(net);
  const auto gparams = parameters(grads);
  if (params.size() != gparams.size() || params.size() != opt.m.size()) {
    throw DimensionError("adam_update: parameter, gradient and moment lists differ");
  }
  ++opt.step;
  const auto& cfg = opt.config;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto theta = params[p].values;
    auto g = gparams[p].values;
    auto& m = opt.m[p];
    auto& v = opt.v[p];
    if (g.size() != theta.size() || m.size() != theta.size()) {
      throw DimensionError("adam_update: shape mismatch in '" + params[p].name + "'");
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

bool GradCheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const TensorCheck& t) { return t.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& t : tensors) worst = std::max(worst, t.max_rel_error);
  return worst;
}

namespace {

using Wide = long double;

// Frame loss in extended precision with entry `entry` of parameter tensor
// `tensor` shifted by `shift`. Serves as the finite-difference probe so that
// rounding in the forward pass stays far below the step size.
Wide wide_frame_loss(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                     std::size_t tensor, std::size_t entry, Wide shift) {
  std::vector<std::vector<Wide>> w;
  for (const auto& p : parameters(net)) w.emplace_back(p.values.begin(), p.values.end());
  w[tensor][entry] += shift;

  const std::size_t n_layers = net.num_layers();
  const std::size_t k = net.num_classes();
  std::vector<std::vector<Wide>> logits;
  std::vector<std::size_t> targets;
  for (std::size_t b = 0; b < frame.num_streams(); ++b) {
    std::vector<std::vector<Wide>> h(n_layers), c(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
      h[l].assign(frame.states[b].layers[l].h.begin(), frame.states[b].layers[l].h.end());
      c[l].assign(frame.states[b].layers[l].c.begin(), frame.states[b].layers[l].c.end());
    }
    const Matrix& xs = frame.inputs[b];
    for (std::size_t t = 0; t < xs.rows(); ++t) {
      std::vector<Wide> in(xs.row(t).begin(), xs.row(t).end());
      for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& wl = std::span(w).subspan(12 * l, 12);
        const std::size_t hd = net.layers[l].hidden_dim;
        std::vector<Wide> a[4];
        for (int g = 0; g < 4; ++g) {
          a[g] = wl[8 + static_cast<std::size_t>(g)];
          for (std::size_t q = 0; q < in.size(); ++q) {
            for (std::size_t j = 0; j < hd; ++j) a[g][j] += wl[static_cast<std::size_t>(g)][q * hd + j] * in[q];
          }
          for (std::size_t q = 0; q < hd; ++q) {
            for (std::size_t j = 0; j < hd; ++j) a[g][j] += wl[4 + static_cast<std::size_t>(g)][q * hd + j] * h[l][q];
          }
        }
        for (std::size_t j = 0; j < hd; ++j) {
          const Wide f = 1 / (1 + std::exp(-a[0][j]));
          const Wide i = 1 / (1 + std::exp(-a[1][j]));
          const Wide o = 1 / (1 + std::exp(-a[3][j]));
          c[l][j] = f * c[l][j] + i * std::tanh(a[2][j]);
          h[l][j] = o * std::tanh(c[l][j]);
        }
        in = h[l];
      }
      std::vector<Wide> z = w[12 * n_layers + 1];
      for (std::size_t q = 0; q < in.size(); ++q) {
        for (std::size_t j = 0; j < k; ++j) z[j] += w[12 * n_layers][q * k + j] * in[q];
      }
      logits.push_back(std::move(z));
      targets.push_back(frame.targets[b][t]);
    }
  }

  std::vector<std::vector<Wide>> log_probs;
  for (const auto& z : logits) {
    const Wide m = *std::max_element(z.begin(), z.end());
    Wide sum = 0;
    for (Wide v : z) sum += std::exp(v - m);
    std::vector<Wide> lp;
    for (Wide v : z) lp.push_back(v - m - std::log(sum));
    log_probs.push_back(std::move(lp));
  }
  const Wide n = static_cast<Wide>(targets.size());
  if (loss == LossKind::kCE) {
    Wide total = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) total -= log_probs[t][targets[t]];
    return total / n;
  }
  std::vector<Wide> tp(k, 0), mass(k, 0), count(k, 0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (std::size_t j = 0; j < k; ++j) mass[j] += std::exp(log_probs[t][j]);
    tp[targets[t]] += std::exp(log_probs[t][targets[t]]);
    count[targets[t]] += 1;
  }
  Wide total = 0;
  int present = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (count[j] == 0) continue;
    ++present;
    total += 1 - 2 * tp[j] / (mass[j] + count[j]);
  }
  return total / present;
}

}  // namespace

GradCheckReport compare_gradients(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                                  const LstmNetwork& analytic, double tolerance) {
  frame.validate(net);
  const auto net_params = parameters(net);
  const auto analytic_params = parameters(analytic);
  if (analytic_params.size() != net_params.size()) {
    throw DimensionError("compare_gradients: gradient layout differs from network");
  }
  const Wide step = kGradCheckStep;
  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t p = 0; p < net_params.size(); ++p) {
    TensorCheck check;
    check.name = net_params[p].name;
    if (analytic_params[p].values.size() != net_params[p].values.size()) {
      throw DimensionError("compare_gradients: tensor " + check.name + " has the wrong size");
    }
    for (std::size_t j = 0; j < net_params[p].values.size(); ++j) {
      const Wide up = wide_frame_loss(net, frame, loss, p, j, step);
      const Wide down = wide_frame_loss(net, frame, loss, p, j, -step);
      const double numeric = static_cast<double>((up - down) / (2 * step));
      const double exact = analytic_params[p].values[j];
      const double rel = std::abs(exact - numeric) /
                         std::max({std::abs(exact), std::abs(numeric), 1e-8});
      if (rel > check.max_rel_error || std::isnan(rel)) {
        check.max_rel_error = rel;
        check.worst_index = j;
      }
    }
    check.passed = check.max_rel_error <= tolerance;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

GradCheckReport grad_check(const LstmNetwork& net, const FrameBatch& frame, LossKind loss,
                           double tolerance) {
  Rng unused(0);
  const FrameGradient fg = bptt_frame(net, frame, loss, 0.0, unused);
  return compare_gradients(net, frame, loss, fg.grads, tolerance);
}

}  // namespace lstmens
