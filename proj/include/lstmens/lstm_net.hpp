#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lstmens/core_math.hpp"

namespace lstmens {

/// Parameters of one LSTM layer. The stacked gate matrix [W_x*; W_h*] of
/// shape (D_in + H) x H is stored as two blocks: `wx*` (D_in x H) acting on
/// the layer input and `wh*` (H x H) acting on the previous hidden state.
/// Gates: f = forget, i = input, c = cell candidate, o = output.
struct LstmLayerParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Matrix wxf, wxi, wxc, wxo;
  Matrix whf, whi, whc, who;
  RealVector bf, bi, bc, bo;

  static LstmLayerParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

/// Softmax head: logits = w^T h + b, w is H x K.
struct OutputLayerParams {
  Matrix w;
  RealVector b;
  friend bool operator==(const OutputLayerParams&, const OutputLayerParams&) = default;
};

struct LstmNetwork {
  std::vector<LstmLayerParams> layers;
  OutputLayerParams output;

  std::size_t input_dim() const { return layers.front().input_dim; }
  std::size_t hidden_dim() const { return layers.front().hidden_dim; }
  std::size_t num_classes() const { return output.b.size(); }
  std::size_t num_layers() const { return layers.size(); }
  std::size_t num_parameters() const;

  /// All-zero network with chained shapes.
  static LstmNetwork zeros(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                           std::size_t num_layers);

  /// Throws DimensionError when shapes do not chain.
  void validate() const;

  friend bool operator==(const LstmNetwork&, const LstmNetwork&) = default;
};

/// Named view of one parameter tensor. `dims` has two entries for matrices and
/// one for bias vectors.
template <typename T>
struct BasicParamRef {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<T> values;
};
using ParamRef = BasicParamRef<double>;
using ConstParamRef = BasicParamRef<const double>;

/// Every tensor in a fixed order: per layer Wx{f,i,c,o}, Wh{f,i,c,o}, b{f,i,c,o};
/// then the output weights and bias. The order defines the model file layout.
std::vector<ParamRef> parameters(LstmNetwork& net);
std::vector<ConstParamRef> parameters(const LstmNetwork& net);

struct LayerState {
  RealVector h;
  RealVector c;
  friend bool operator==(const LayerState&, const LayerState&) = default;
};

struct LstmState {
  std::vector<LayerState> layers;
  static LstmState zeros(const LstmNetwork& net);
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

/// Intermediates of one layer at one timestep, kept for backpropagation.
struct LayerCache {
  RealVector input;
  RealVector h_prev, c_prev;
  RealVector f, i, g, o;  // g is the cell candidate c~
  RealVector c, tanh_c, h;
  RealVector mask;  // empty when no dropout was applied
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  RealVector top;  // last layer output after masking, fed to the softmax head
};

/// Per-layer multiplicative masks on each layer's output h.
using DropoutMasks = std::vector<RealVector>;

struct StepResult {
  RealVector logits;
  LstmState state;
  ForwardCache cache;
};

/// One timestep through every layer and the output head. Masks, when given,
/// scale each layer's h on the feed-forward path only; the recurrent state
/// keeps the unmasked h.
StepResult step(const LstmNetwork& net, std::span<const double> x, const LstmState& state,
                const DropoutMasks* masks = nullptr);

/// Softmax over logits.
RealVector classify(std::span<const double> logits);

/// Argmax; ties go to the lowest index.
std::size_t predict_label(std::span<const double> probs);

/// Sample-wise inference over the rows of `samples` (T x D). `state` is read as
/// the initial state and left holding the state after the last sample.
std::vector<RealVector> infer_stream(const LstmNetwork& net, const Matrix& samples,
                                     LstmState& state);
std::vector<RealVector> infer_stream(const LstmNetwork& net, const Matrix& samples);

/// Weights ~ U(-1/sqrt(rows), 1/sqrt(rows)) per block, biases zero except the
/// forget-gate bias which starts at 1.
LstmNetwork init_network(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                         std::size_t num_layers, Rng& rng);

enum class LossKind { kCE, kF1 };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

/// Training provenance carried in a model file header.
struct ModelMeta {
  LossKind loss = LossKind::kCE;
  int epoch = 0;
  double val_f1 = 0.0;
  friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

class ModelFormatError : public std::runtime_error {
 public:
  ModelFormatError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ModelVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kModelMagic = "LSTMENS";
inline constexpr std::string_view kModelVersion = "v1";

/// Text model format:
///   LSTMENS v1
///   D H K LAYERS LOSSKIND EPOCH VALF1
///   <name> <dims...> <values...>     one line per tensor, parameters() order
/// Doubles use the shortest decimal form that round-trips exactly.
void write_model(std::ostream& out, const LstmNetwork& net, const ModelMeta& meta = {});
void save_model(const std::string& path, const LstmNetwork& net, const ModelMeta& meta = {});

struct LoadedModel {
  LstmNetwork net;
  ModelMeta meta;
};
LoadedModel read_model(std::istream& in);
LoadedModel load_model(const std::string& path);

/// Shortest round-trip decimal rendering.
std::string format_double(double value);
/// Strict full-token parse; throws std::invalid_argument on failure.
double parse_double(std::string_view text);

}  // namespace lstmens
