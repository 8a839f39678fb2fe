#pragma once

// End-to-end phrase-pair classifiers over raw text: a shared bidirectional
// GRU encoder feeding either a time-mean/concat MLP head or a dot-product
// alignment matrix with convolution, adaptive max pooling and a dense head.
// Gradients come from a small reverse-mode tape over doubles.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tpc/corpus.hpp"
#include "tpc/ml.hpp"
#include "tpc/random.hpp"
#include "tpc/resources.hpp"

namespace tpc {

namespace nn {

struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using Var = std::size_t;

// Records a computation over flat double vectors and replays it backwards.
// Parameter gradients accumulate into Parameter::grad.
class Tape {
 public:
  Var constant(std::vector<double> v);
  // Row `row` of an embedding table.
  Var gather(Parameter& table, std::size_t row);
  // w (out x in) * x + b.
  Var linear(Parameter& w, Var x, Parameter& b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var one_minus(Var a);
  Var concat(std::span<const Var> parts);
  Var mean(std::span<const Var> parts);
  // M[i][j] = dot(a[i], b[j]); result is |a| x |b|, row-major.
  Var dot_matrix(std::span<const Var> a, std::span<const Var> b);
  // Single-channel h x w input, weight (filters x k*k), stride 1, zero
  // padding k/2; result is filters x h x w.
  Var conv2d(Var input, std::size_t h, std::size_t w, Parameter& weight, Parameter& bias,
             std::size_t kernel);
  // channels x h x w -> channels x gh x gw.
  Var adaptive_max_pool(Var input, std::size_t channels, std::size_t h, std::size_t w,
                        std::size_t gh, std::size_t gw);
  // Inverted dropout; identity when rng is null or rate is 0.
  Var dropout(Var x, double rate, Rng* rng);
  // Scalar cross-entropy of softmax(logits) against `label`.
  Var softmax_xent(Var logits, int label);

  const std::vector<double>& value(Var v) const { return nodes_[v].value; }
  std::size_t size() const { return nodes_.size(); }
  void backward(Var loss, double seed = 1.0);

  // Smallest gap between the winner and the runner-up over every pooling
  // cell seen so far; +inf when no cell had two entries.
  double min_pool_margin() const { return min_pool_margin_; }

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    std::function<void(Tape&, std::size_t)> back;
  };
  Var push(std::vector<double> value, std::vector<std::size_t> inputs,
           std::function<void(Tape&, std::size_t)> back);

  std::vector<Node> nodes_;
  double min_pool_margin_ = std::numeric_limits<double>::infinity();
};

// Pooling cell [start, end) for cell k of g over an extent n; neighbouring
// cells overlap when n is not a multiple of g, and repeat when n < g.
std::pair<std::size_t, std::size_t> pool_cell(std::size_t k, std::size_t n, std::size_t g);

}  // namespace nn

enum class NeuralHead : std::uint8_t { MeanConcat, Alignment };
enum class SymbolMode : std::uint8_t { Character, Word };

std::string head_name(NeuralHead h);
NeuralHead parse_head(const std::string& s);
std::string symbol_mode_name(SymbolMode m);
SymbolMode parse_symbol_mode(const std::string& s);

struct NeuralConfig {
  NeuralHead head = NeuralHead::MeanConcat;
  SymbolMode mode = SymbolMode::Word;
  int char_dim = 10;
  int gru_hidden = 10;
  int mlp_hidden = 10;     // mean-concat head
  int conv_filters = 16;   // alignment head
  int conv_kernel = 3;
  int pool_h = 4;
  int pool_w = 4;
  int fc_hidden = 20;
  double dropout = 0.2;
  int epochs = 200;
  double learning_rate = 1e-4;
  int batch = 20;
  bool tune_embeddings = false;  // word mode
  bool char_spaces = true;       // keep spaces as symbols in character mode
  std::uint64_t seed = 0;
  bool operator==(const NeuralConfig&) const = default;
};

// Symbol sequences of one phrase pair.
struct TextPair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  bool operator==(const TextPair&) const = default;
};

// Lowercased surface symbols of a token span: "<lang>/<word>" keys, or code
// points (with single spaces between words when `spaces`).
std::vector<std::string> symbolize(const SentenceSide& side, Span span, SymbolMode mode, bool spaces,
                                   const std::string& lang);
TextPair make_text_pair(const AnnotatedSentencePair& sent, const PhrasePair& pair, const NeuralConfig& cfg);

// Dense helpers on plain matrices, used by tests and the CLI.
Matrix alignment_matrix(const Matrix& src, const Matrix& tgt);
Matrix adaptive_max_pool(const Matrix& m, std::size_t gh, std::size_t gw);

class NeuralModel {
 public:
  // Character mode: vocabulary from `texts` plus the unknown symbol, random
  // embeddings. Word mode: vocabulary from `texts` words present in
  // `pretrained` (looked up as "<lang>/<word>" first, then bare word), unknown row
  // = mean of every pretrained vector.
  static NeuralModel create(const NeuralConfig& cfg, std::vector<std::string> classes,
                            const std::vector<TextPair>& texts, const EmbeddingTable* pretrained);

  const NeuralConfig& config() const { return config_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  std::vector<nn::Parameter>& parameters() { return params_; }
  const std::vector<nn::Parameter>& parameters() const { return params_; }

  std::size_t symbol_index(const std::string& s) const;

  // Encoder output (T x 2*gru_hidden) with dropout off. Throws on an empty
  // sequence.
  Matrix encode(const std::vector<std::string>& symbols) const;
  std::vector<double> probabilities(const TextPair& pair) const;
  // Batch inference; rows are independent of batch composition.
  std::vector<Prediction> predict(const std::vector<TextPair>& pairs) const;

  // Mean cross-entropy over the batch. With `accumulate`, gradients are added
  // to the parameters' grad buffers. A non-null rng enables dropout.
  double loss(const std::vector<TextPair>& pairs, const std::vector<int>& labels, bool accumulate,
              Rng* dropout_rng = nullptr, double* min_pool_margin = nullptr);

  // Trainable parameters, flattened in parameter order.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> p);

  bool operator==(const NeuralModel&) const;

 private:
  nn::Var forward(nn::Tape& tape, const TextPair& pair, Rng* dropout_rng);
  std::vector<nn::Var> encode_on(nn::Tape& tape, const std::vector<std::string>& symbols, Rng* dropout_rng);
  nn::Parameter& param(const std::string& name);

  NeuralConfig config_;
  std::vector<std::string> classes_;
  std::vector<std::string> vocabulary_;  // index 0 is the unknown symbol
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<nn::Parameter> params_;
  std::unordered_map<std::string, std::size_t> param_index_;

  friend NeuralModel deserialize_neural(const std::string& text);
};

struct NeuralTrainResult {
  NeuralModel model;
  std::vector<double> loss_curve;  // mean training loss per completed epoch
  bool aborted = false;
  int aborted_epoch = -1;
  std::string abort_reason;
};

// Mini-batch Adam on softmax cross-entropy. Each epoch reshuffles with a
// stream derived from (seed, epoch). A non-finite loss restores the
// parameters from the end of the last good epoch and stops.
NeuralTrainResult train_neural(const std::vector<TextPair>& texts, const std::vector<int>& labels,
                               std::vector<std::string> classes, const NeuralConfig& cfg,
                               const EmbeddingTable* pretrained,
                               const std::vector<TextPair>& vocabulary_texts = {});

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  double min_pool_margin = std::numeric_limits<double>::infinity();
};

// Central finite differences against the analytic gradient of loss() for
// every trainable parameter; dropout is off. Relative error is
// |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(NeuralModel& model, const std::vector<TextPair>& batch,
                                   const std::vector<int>& labels, double step = 1e-5);

inline constexpr int kNeuralFormatVersion = 1;

std::string serialize_neural(const NeuralModel& model);
NeuralModel deserialize_neural(const std::string& text);
void save_neural(const std::string& path, const NeuralModel& model);
NeuralModel load_neural(const std::string& path);

// "epoch<TAB>loss" rows.
void write_loss_curve(std::ostream& out, const std::vector<double>& curve);

}  // namespace tpc
