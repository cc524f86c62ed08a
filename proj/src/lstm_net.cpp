#include "lstmens/lstm_net.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lstmens {

namespace {

void check_vector(const RealVector& v, std::size_t n, const std::string& what) {
  if (v.size() != n) {
    throw DimensionError(what + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
  }
}

void check_matrix(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + m.shape_string());
  }
}

template <typename Net, typename Ref>
std::vector<Ref> collect_parameters(Net& net) {
  std::vector<Ref> out;
  auto add_matrix = [&out](std::string name, auto& m) {
    out.push_back(Ref{std::move(name), {m.rows(), m.cols()}, m.values()});
  };
  auto add_vector = [&out](std::string name, auto& v) {
    out.push_back(Ref{std::move(name), {v.size()}, {v.data(), v.size()}});
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    add_matrix(p + "Wxf", layer.wxf);
    add_matrix(p + "Wxi", layer.wxi);
    add_matrix(p + "Wxc", layer.wxc);
    add_matrix(p + "Wxo", layer.wxo);
    add_matrix(p + "Whf", layer.whf);
    add_matrix(p + "Whi", layer.whi);
    add_matrix(p + "Whc", layer.whc);
    add_matrix(p + "Who", layer.who);
    add_vector(p + "bf", layer.bf);
    add_vector(p + "bi", layer.bi);
    add_vector(p + "bc", layer.bc);
    add_vector(p + "bo", layer.bo);
  }
  add_matrix("output.W_hK", net.output.w);
  add_vector("output.b_K", net.output.b);
  return out;
}

// Forward one layer into `cache`; `input`, `h_prev`, `c_prev` are copied in.
void forward_layer(const LstmLayerParams& p, std::span<const double> input,
                   const LayerState& prev, LayerCache& cache) {
  const std::size_t h = p.hidden_dim;
  cache.input.assign(input.begin(), input.end());
  cache.h_prev = prev.h;
  cache.c_prev = prev.c;

  RealVector zf = p.bf, zi = p.bi, zc = p.bc, zo = p.bo;
  accumulate_transposed_product(p.wxf, input, zf);
  accumulate_transposed_product(p.wxi, input, zi);
  accumulate_transposed_product(p.wxc, input, zc);
  accumulate_transposed_product(p.wxo, input, zo);
  accumulate_transposed_product(p.whf, prev.h, zf);
  accumulate_transposed_product(p.whi, prev.h, zi);
  accumulate_transposed_product(p.whc, prev.h, zc);
  accumulate_transposed_product(p.who, prev.h, zo);

  cache.f = sigmoid(zf);
  cache.i = sigmoid(zi);
  cache.g = tanh_vec(zc);
  cache.o = sigmoid(zo);
  cache.c.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    cache.c[j] = cache.f[j] * prev.c[j] + cache.i[j] * cache.g[j];
  }
  cache.tanh_c = tanh_vec(cache.c);
  cache.h.resize(h);
  for (std::size_t j = 0; j < h; ++j) cache.h[j] = cache.o[j] * cache.tanh_c[j];
}

}  // namespace

LstmLayerParams LstmLayerParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  LstmLayerParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (Matrix* m : {&p.wxf, &p.wxi, &p.wxc, &p.wxo}) *m = Matrix(input_dim, hidden_dim);
  for (Matrix* m : {&p.whf, &p.whi, &p.whc, &p.who}) *m = Matrix(hidden_dim, hidden_dim);
  for (RealVector* b : {&p.bf, &p.bi, &p.bc, &p.bo}) b->assign(hidden_dim, 0.0);
  return p;
}

LstmNetwork LstmNetwork::zeros(std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t num_classes, std::size_t num_layers) {
  if (input_dim == 0 || hidden_dim == 0 || num_classes == 0 || num_layers == 0) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  LstmNetwork net;
  for (std::size_t l = 0; l < num_layers; ++l) {
    net.layers.push_back(LstmLayerParams::zeros(l == 0 ? input_dim : hidden_dim, hidden_dim));
  }
  net.output.w = Matrix(hidden_dim, num_classes);
  net.output.b.assign(num_classes, 0.0);
  return net;
}

std::size_t LstmNetwork::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : parameters(*this)) n += p.values.size();
  return n;
}

void LstmNetwork::validate() const {
  if (layers.empty()) throw DimensionError("network has no layers");
  const std::size_t h = hidden_dim();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    const std::string tag = "layer " + std::to_string(l);
    if (p.hidden_dim != h) throw DimensionError(tag + ": hidden size differs from layer 0");
    if (l > 0 && p.input_dim != h) throw DimensionError(tag + ": input size must equal H");
    for (const Matrix* m : {&p.wxf, &p.wxi, &p.wxc, &p.wxo}) {
      check_matrix(*m, p.input_dim, h, tag + " input weights");
    }
    for (const Matrix* m : {&p.whf, &p.whi, &p.whc, &p.who}) {
      check_matrix(*m, h, h, tag + " recurrent weights");
    }
    for (const RealVector* b : {&p.bf, &p.bi, &p.bc, &p.bo}) check_vector(*b, h, tag + " bias");
  }
  check_matrix(output.w, h, output.b.size(), "output weights");
}

std::vector<ParamRef> parameters(LstmNetwork& net) {
  return collect_parameters<LstmNetwork, ParamRef>(net);
}

std::vector<ConstParamRef> parameters(const LstmNetwork& net) {
  return collect_parameters<const LstmNetwork, ConstParamRef>(net);
}

LstmState LstmState::zeros(const LstmNetwork& net) {
  LstmState s;
  s.layers.assign(net.num_layers(),
                  LayerState{RealVector(net.hidden_dim(), 0.0), RealVector(net.hidden_dim(), 0.0)});
  return s;
}

StepResult step(const LstmNetwork& net, std::span<const double> x, const LstmState& state,
                const DropoutMasks* masks) {
  if (x.size() != net.input_dim()) {
    throw DimensionError("step: input has length " + std::to_string(x.size()) +
                         ", network expects " + std::to_string(net.input_dim()));
  }
  if (!all_finite(x)) throw std::invalid_argument("step: non-finite input sample");
  if (state.layers.size() != net.num_layers()) {
    throw DimensionError("step: state has " + std::to_string(state.layers.size()) +
                         " layers, network has " + std::to_string(net.num_layers()));
  }
  if (masks && masks->size() != net.num_layers()) {
    throw DimensionError("step: one dropout mask per layer required");
  }

  StepResult result;
  result.cache.layers.resize(net.num_layers());
  result.state.layers.resize(net.num_layers());
  std::span<const double> input = x;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& prev = state.layers[l];
    check_vector(prev.h, net.hidden_dim(), "step: state h");
    check_vector(prev.c, net.hidden_dim(), "step: state c");
    LayerCache& cache = result.cache.layers[l];
    forward_layer(net.layers[l], input, prev, cache);
    result.state.layers[l] = LayerState{cache.h, cache.c};

    RealVector next = cache.h;
    if (masks) {
      cache.mask = (*masks)[l];
      check_vector(cache.mask, net.hidden_dim(), "step: dropout mask");
      for (std::size_t j = 0; j < next.size(); ++j) next[j] *= cache.mask[j];
    }
    // The next layer copies `input` into its own cache before `top` is replaced.
    result.cache.top = std::move(next);
    input = result.cache.top;
  }
  result.logits = net.output.b;
  accumulate_transposed_product(net.output.w, result.cache.top, result.logits);
  return result;
}

RealVector classify(std::span<const double> logits) { return softmax(logits); }

std::size_t predict_label(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("predict_label: empty probability vector");
  // max_element returns the first maximum.
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<RealVector> infer_stream(const LstmNetwork& net, const Matrix& samples,
                                     LstmState& state) {
  std::vector<RealVector> out;
  out.reserve(samples.rows());
  for (std::size_t t = 0; t < samples.rows(); ++t) {
    StepResult r = step(net, samples.row(t), state);
    out.push_back(classify(r.logits));
    state = std::move(r.state);
  }
  return out;
}

std::vector<RealVector> infer_stream(const LstmNetwork& net, const Matrix& samples) {
  LstmState state = LstmState::zeros(net);
  return infer_stream(net, samples, state);
}

LstmNetwork init_network(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                         std::size_t num_layers, Rng& rng) {
  LstmNetwork net = LstmNetwork::zeros(input_dim, hidden_dim, num_classes, num_layers);
  for (auto& p : parameters(net)) {
    if (p.dims.size() != 2) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.dims[0]));
    for (double& w : p.values) w = rng.uniform(-bound, bound);
  }
  for (auto& layer : net.layers) std::fill(layer.bf.begin(), layer.bf.end(), 1.0);
  return net;
}

std::string_view to_string(LossKind kind) { return kind == LossKind::kCE ? "CE" : "F1"; }

LossKind parse_loss_kind(std::string_view text) {
  if (text == "CE" || text == "ce") return LossKind::kCE;
  if (text == "F1" || text == "f1") return LossKind::kF1;
  throw std::invalid_argument("unknown loss kind '" + std::string(text) + "'");
}

ModelFormatError::ModelFormatError(std::size_t line, const std::string& what)
    : std::runtime_error("model file line " + std::to_string(line) + ": " + what), line_(line) {}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  // from_chars rejects a leading '+'.
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return value;
}

void write_model(std::ostream& out, const LstmNetwork& net, const ModelMeta& meta) {
  net.validate();
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << net.input_dim() << ' ' << net.hidden_dim() << ' ' << net.num_classes() << ' '
      << net.num_layers() << ' ' << to_string(meta.loss) << ' ' << meta.epoch << ' '
      << format_double(meta.val_f1) << '\n';
  for (const auto& p : parameters(net)) {
    out << p.name;
    for (std::size_t d : p.dims) out << ' ' << d;
    for (double v : p.values) out << ' ' << format_double(v);
    out << '\n';
  }
}

void save_model(const std::string& path, const LstmNetwork& net, const ModelMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_model(out, net, meta);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

LoadedModel read_model(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) {
      throw ModelFormatError(line_no + 1, std::string("unexpected end of file, expected ") + what);
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return std::istringstream(line);
  };

  {
    auto ss = next_line("header");
    std::string magic, version;
    ss >> magic >> version;
    if (magic != kModelMagic) throw ModelFormatError(line_no, "not an LSTMENS model file");
    if (version != kModelVersion) {
      throw ModelVersionError("incompatible model file version '" + version + "', expected '" +
                              std::string(kModelVersion) + "'");
    }
  }

  LoadedModel result;
  std::size_t d = 0, h = 0, k = 0, num_layers = 0;
  {
    auto ss = next_line("dimension line");
    std::string loss, epoch, val_f1;
    if (!(ss >> d >> h >> k >> num_layers >> loss >> epoch >> val_f1)) {
      throw ModelFormatError(line_no, "expected 'D H K LAYERS LOSSKIND EPOCH VALF1'");
    }
    try {
      result.meta.loss = parse_loss_kind(loss);
      result.meta.epoch = std::stoi(epoch);
      result.meta.val_f1 = parse_double(val_f1);
      result.net = LstmNetwork::zeros(d, h, k, num_layers);
    } catch (const std::exception& e) {
      throw ModelFormatError(line_no, e.what());
    }
  }

  for (auto& p : parameters(result.net)) {
    auto ss = next_line(p.name.c_str());
    std::string name;
    ss >> name;
    if (name != p.name) {
      throw ModelFormatError(line_no, "expected tensor '" + p.name + "', found '" + name + "'");
    }
    for (std::size_t expected : p.dims) {
      std::size_t dim = 0;
      if (!(ss >> dim) || dim != expected) {
        throw ModelFormatError(line_no, "tensor '" + p.name + "' has wrong dimensions");
      }
    }
    std::string token;
    for (std::size_t idx = 0; idx < p.values.size(); ++idx) {
      if (!(ss >> token)) {
        throw ModelFormatError(line_no, "tensor '" + p.name + "' truncated after " +
                                            std::to_string(idx) + " values");
      }
      try {
        p.values[idx] = parse_double(token);
      } catch (const std::invalid_argument& e) {
        throw ModelFormatError(line_no, e.what());
      }
      if (!std::isfinite(p.values[idx])) {
        throw ModelFormatError(line_no, "non-finite value in '" + p.name + "'");
      }
    }
    if (ss >> token) throw ModelFormatError(line_no, "trailing data after '" + p.name + "'");
  }
  return result;
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  return read_model(in);
}

}  // namespace lstmens
