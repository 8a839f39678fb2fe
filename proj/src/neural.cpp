#include "tpc/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "tpc/error.hpp"
#include "tpc/features.hpp"
#include "tpc/parallel.hpp"
#include "tpc/text.hpp"

namespace tpc {

using nlohmann::json;

namespace nn {

Var Tape::push(std::vector<double> value, std::vector<std::size_t> inputs,
               std::function<void(Tape&, std::size_t)> back) {
  Node n;
  n.grad.assign(value.size(), 0.0);
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Var Tape::constant(std::vector<double> v) { return push(std::move(v), {}, nullptr); }

Var Tape::gather(Parameter& table, std::size_t row) {
  if (row >= table.rows) throw Error("gather: row out of range");
  std::vector<double> v(table.value.begin() + static_cast<std::ptrdiff_t>(row * table.cols),
                        table.value.begin() + static_cast<std::ptrdiff_t>((row + 1) * table.cols));
  Parameter* p = &table;
  return push(std::move(v), {}, [p, row](Tape& t, std::size_t self) {
    if (!p->trainable) return;
    const auto& g = t.nodes_[self].grad;
    for (std::size_t j = 0; j < p->cols; ++j) p->grad[row * p->cols + j] += g[j];
  });
}

Var Tape::linear(Parameter& w, Var x, Parameter& b) {
  const auto& xv = nodes_[x].value;
  if (xv.size() != w.cols || b.size() != w.rows)
    throw Error("linear: shape mismatch for " + w.name + " (" + std::to_string(w.rows) + "x" +
                std::to_string(w.cols) + " against input " + std::to_string(xv.size()) + ")");
  std::vector<double> y(w.rows);
  for (std::size_t o = 0; o < w.rows; ++o) {
    double s = b.value[o];
    const double* row = w.value.data() + o * w.cols;
    for (std::size_t i = 0; i < w.cols; ++i) s += row[i] * xv[i];
    y[o] = s;
  }
  Parameter* pw = &w;
  Parameter* pb = &b;
  return push(std::move(y), {x}, [pw, pb, x](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& xv = t.nodes_[x].value;
    auto& gx = t.nodes_[x].grad;
    for (std::size_t o = 0; o < pw->rows; ++o) {
      const double go = g[o];
      if (go == 0.0) continue;
      if (pb->trainable) pb->grad[o] += go;
      const double* row = pw->value.data() + o * pw->cols;
      double* grow = pw->grad.data() + o * pw->cols;
      for (std::size_t i = 0; i < pw->cols; ++i) {
        if (pw->trainable) grow[i] += go * xv[i];
        gx[i] += go * row[i];
      }
    }
  });
}

namespace {
void require_same(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
  if (a.size() != b.size()) throw Error(std::string(op) + ": size mismatch");
}
}  // namespace

Var Tape::add(Var a, Var b) {
  require_same(nodes_[a].value, nodes_[b].value, "add");
  std::vector<double> y(nodes_[a].value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = nodes_[a].value[i] + nodes_[b].value[i];
  return push(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      t.nodes_[a].grad[i] += g[i];
      t.nodes_[b].grad[i] += g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  require_same(nodes_[a].value, nodes_[b].value, "mul");
  std::vector<double> y(nodes_[a].value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = nodes_[a].value[i] * nodes_[b].value[i];
  return push(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      t.nodes_[a].grad[i] += g[i] * t.nodes_[b].value[i];
      t.nodes_[b].grad[i] += g[i] * t.nodes_[a].value[i];
    }
  });
}

Var Tape::sigmoid(Var a) {
  std::vector<double> y(nodes_[a].value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-nodes_[a].value[i]));
  return push(std::move(y), {a}, [a](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      t.nodes_[a].grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Var Tape::tanh(Var a) {
  std::vector<double> y(nodes_[a].value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(nodes_[a].value[i]);
  return push(std::move(y), {a}, [a](Tape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      t.nodes_[a].grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Var Tape::one_minus(Var a) {
  std::vector<double> y(nodes_[a].value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 - nodes_[a].value[i];
  return push(std::move(y), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] -= g[i];
  });
}

Var Tape::concat(std::span<const Var> parts) {
  std::vector<double> y;
  for (Var p : parts) y.insert(y.end(), nodes_[p].value.begin(), nodes_[p].value.end());
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(std::move(y), ins, [ins](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    std::size_t at = 0;
    for (Var p : ins) {
      auto& gp = t.nodes_[p].grad;
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[at + i];
      at += gp.size();
    }
  });
}

Var Tape::mean(std::span<const Var> parts) {
  if (parts.empty()) throw Error("mean: no inputs");
  std::vector<double> y(nodes_[parts[0]].value.size(), 0.0);
  for (Var p : parts) {
    require_same(y, nodes_[p].value, "mean");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += nodes_[p].value[i];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& v : y) v *= inv;
  std::vector<Var> ins(parts.begin(), parts.end());
  return push(std::move(y), ins, [ins, inv](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    for (Var p : ins)
      for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[p].grad[i] += g[i] * inv;
  });
}

Var Tape::dot_matrix(std::span<const Var> a, std::span<const Var> b) {
  if (a.empty() || b.empty()) throw Error("dot_matrix: empty sequence");
  const std::size_t d = nodes_[a[0]].value.size();
  for (Var v : a)
    if (nodes_[v].value.size() != d) throw Error("dot_matrix: width mismatch");
  for (Var v : b)
    if (nodes_[v].value.size() != d) throw Error("dot_matrix: width mismatch");
  std::vector<double> y(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const auto& x = nodes_[a[i]].value;
      const auto& z = nodes_[b[j]].value;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += x[k] * z[k];
      y[i * b.size() + j] = s;
    }
  std::vector<Var> as(a.begin(), a.end()), bs(b.begin(), b.end());
  return push(std::move(y), {}, [as, bs, d](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < as.size(); ++i)
      for (std::size_t j = 0; j < bs.size(); ++j) {
        const double gij = g[i * bs.size() + j];
        if (gij == 0.0) continue;
        auto& ga = t.nodes_[as[i]].grad;
        auto& gb = t.nodes_[bs[j]].grad;
        const auto& va = t.nodes_[as[i]].value;
        const auto& vb = t.nodes_[bs[j]].value;
        for (std::size_t k = 0; k < d; ++k) {
          ga[k] += gij * vb[k];
          gb[k] += gij * va[k];
        }
      }
  });
}

Var Tape::conv2d(Var input, std::size_t h, std::size_t w, Parameter& weight, Parameter& bias,
                 std::size_t kernel) {
  if (nodes_[input].value.size() != h * w) throw Error("conv2d: input size mismatch");
  if (weight.cols != kernel * kernel || bias.size() != weight.rows) throw Error("conv2d: weight shape mismatch");
  const std::size_t f = weight.rows;
  const long pad = static_cast<long>(kernel / 2);
  const auto& in = nodes_[input].value;
  std::vector<double> y(f * h * w);
  auto at = [&](long i, long j) -> double {
    if (i < 0 || j < 0 || i >= static_cast<long>(h) || j >= static_cast<long>(w)) return 0.0;
    return in[static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)];
  };
  for (std::size_t c = 0; c < f; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double s = bias.value[c];
        for (std::size_t a = 0; a < kernel; ++a)
          for (std::size_t b = 0; b < kernel; ++b)
            s += weight.value[c * kernel * kernel + a * kernel + b] *
                 at(static_cast<long>(i + a) - pad, static_cast<long>(j + b) - pad);
        y[(c * h + i) * w + j] = s;
      }
  Parameter* pw = &weight;
  Parameter* pb = &bias;
  return push(std::move(y), {input}, [=](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& iv = t.nodes_[input].value;
    auto& gi = t.nodes_[input].grad;
    for (std::size_t c = 0; c < f; ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double go = g[(c * h + i) * w + j];
          if (go == 0.0) continue;
          if (pb->trainable) pb->grad[c] += go;
          for (std::size_t a = 0; a < kernel; ++a)
            for (std::size_t b = 0; b < kernel; ++b) {
              const long ii = static_cast<long>(i + a) - pad;
              const long jj = static_cast<long>(j + b) - pad;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(w)) continue;
              const std::size_t idx = static_cast<std::size_t>(ii) * w + static_cast<std::size_t>(jj);
              const std::size_t widx = c * kernel * kernel + a * kernel + b;
              if (pw->trainable) pw->grad[widx] += go * iv[idx];
              gi[idx] += go * pw->value[widx];
            }
        }
  });
}

std::pair<std::size_t, std::size_t> pool_cell(std::size_t k, std::size_t n, std::size_t g) {
  return {(k * n) / g, ((k + 1) * n + g - 1) / g};
}

Var Tape::adaptive_max_pool(Var input, std::size_t channels, std::size_t h, std::size_t w,
                            std::size_t gh, std::size_t gw) {
  if (h == 0 || w == 0 || gh == 0 || gw == 0) throw Error("adaptive_max_pool: empty input or grid");
  const auto& in = nodes_[input].value;
  if (in.size() != channels * h * w) throw Error("adaptive_max_pool: input size mismatch");
  std::vector<double> y(channels * gh * gw);
  std::vector<std::size_t> arg(y.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ci = 0; ci < gh; ++ci)
      for (std::size_t cj = 0; cj < gw; ++cj) {
        const auto [r0, r1] = pool_cell(ci, h, gh);
        const auto [c0, c1] = pool_cell(cj, w, gw);
        double best = -std::numeric_limits<double>::infinity();
        double second = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = r0; i < r1; ++i)
          for (std::size_t j = c0; j < c1; ++j) {
            const std::size_t idx = (c * h + i) * w + j;
            if (in[idx] > best) {
              second = best;
              best = in[idx];
              best_idx = idx;
            } else if (in[idx] > second) {
              second = in[idx];
            }
          }
        if ((r1 - r0) * (c1 - c0) > 1) min_pool_margin_ = std::min(min_pool_margin_, best - second);
        const std::size_t o = (c * gh + ci) * gw + cj;
        y[o] = best;
        arg[o] = best_idx;
      }
  return push(std::move(y), {input}, [input, arg](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& gi = t.nodes_[input].grad;
    for (std::size_t o = 0; o < g.size(); ++o) gi[arg[o]] += g[o];
  });
}

Var Tape::dropout(Var x, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("dropout: rate must be below 1");
  const auto& xv = nodes_[x].value;
  std::vector<double> mask(xv.size());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = uniform01(*rng) < rate ? 0.0 : keep;
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  return push(std::move(y), {x}, [x, mask](Tape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < g.size(); ++i) t.nodes_[x].grad[i] += g[i] * mask[i];
  });
}

Var Tape::softmax_xent(Var logits, int label) {
  const auto& z = nodes_[logits].value;
  if (label < 0 || static_cast<std::size_t>(label) >= z.size()) throw Error("softmax_xent: label out of range");
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& v : p) v /= s;
  const double loss = -(z[static_cast<std::size_t>(label)] - m - std::log(s));
  return push({loss}, {logits}, [logits, label, p](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    auto& gl = t.nodes_[logits].grad;
    for (std::size_t i = 0; i < p.size(); ++i)
      gl[i] += g * (p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
  });
}

void Tape::backward(Var loss, double seed) {
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  nodes_[loss].grad.assign(nodes_[loss].value.size(), seed);
  for (std::size_t i = loss + 1; i-- > 0;)
    if (nodes_[i].back) nodes_[i].back(*this, i);
}

}  // namespace nn

std::string head_name(NeuralHead h) { return h == NeuralHead::MeanConcat ? "mean_concat" : "alignment"; }

NeuralHead parse_head(const std::string& s) {
  if (s == "mean_concat") return NeuralHead::MeanConcat;
  if (s == "alignment") return NeuralHead::Alignment;
  throw Error("unknown neural head '" + s + "' (expected mean_concat or alignment)");
}

std::string symbol_mode_name(SymbolMode m) { return m == SymbolMode::Character ? "char" : "word"; }

SymbolMode parse_symbol_mode(const std::string& s) {
  if (s == "char") return SymbolMode::Character;
  if (s == "word") return SymbolMode::Word;
  throw Error("unknown symbol mode '" + s + "' (expected char or word)");
}

std::vector<std::string> symbolize(const SentenceSide& side, Span span, SymbolMode mode, bool spaces,
                                   const std::string& lang) {
  std::vector<std::string> words;
  for (int i = span.start; i < span.end; ++i)
    words.push_back(text::to_lower(side.tokens.at(static_cast<std::size_t>(i)).surface));
  if (mode == SymbolMode::Word) {
    for (auto& w : words) w = lang + "/" + w;
    return words;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && spaces) out.emplace_back(" ");
    for (char32_t c : text::decode_utf8(words[i])) out.push_back(text::encode_utf8(std::u32string(1, c)));
  }
  return out;
}

TextPair make_text_pair(const AnnotatedSentencePair& sent, const PhrasePair& pair, const NeuralConfig& cfg) {
  return {symbolize(sent.src, pair.src, cfg.mode, cfg.char_spaces, "en"),
          symbolize(sent.tgt, pair.tgt, cfg.mode, cfg.char_spaces, "fr")};
}

Matrix alignment_matrix(const Matrix& src, const Matrix& tgt) {
  if (src.cols != tgt.cols)
    throw Error("alignment_matrix: width mismatch (" + std::to_string(src.cols) + " vs " +
                std::to_string(tgt.cols) + ")");
  Matrix m(src.rows, tgt.rows);
  for (std::size_t i = 0; i < src.rows; ++i)
    for (std::size_t j = 0; j < tgt.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < src.cols; ++k) s += src(i, k) * tgt(j, k);
      m(i, j) = s;
    }
  return m;
}

Matrix adaptive_max_pool(const Matrix& m, std::size_t gh, std::size_t gw) {
  nn::Tape t;
  const auto v = t.adaptive_max_pool(t.constant(m.data), 1, m.rows, m.cols, gh, gw);
  Matrix out(gh, gw);
  out.data = t.value(v);
  return out;
}

// --- model -------------------------------------------------------------------

namespace {

constexpr const char* kUnknown = "<unk>";

std::optional<std::span<const double>> pretrained_lookup(const EmbeddingTable& table, const std::string& sym) {
  if (auto v = table.lookup(sym)) return v;
  const auto slash = sym.find('/');
  if (slash != std::string::npos) return table.lookup(sym.substr(slash + 1));
  return std::nullopt;
}

void glorot(nn::Parameter& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.rows + p.cols));
  for (double& v : p.value) v = uniform(rng, -limit, limit);
}

void fill_uniform(nn::Parameter& p, Rng& rng, double limit) {
  for (double& v : p.value) v = uniform(rng, -limit, limit);
}

const char* kGates[] = {"r", "z", "n"};

}  // namespace

nn::Parameter& NeuralModel::param(const std::string& name) {
  const auto it = param_index_.find(name);
  if (it == param_index_.end()) throw Error("neural: missing parameter " + name);
  return params_[it->second];
}

std::size_t NeuralModel::symbol_index(const std::string& s) const {
  const auto it = index_.find(s);
  return it == index_.end() ? 0 : it->second;
}

NeuralModel NeuralModel::create(const NeuralConfig& cfg, std::vector<std::string> classes,
                                const std::vector<TextPair>& texts, const EmbeddingTable* pretrained) {
  if (classes.size() < 2) throw Error("neural: at least two classes required");
  if (cfg.gru_hidden < 1 || cfg.char_dim < 1 || cfg.mlp_hidden < 1 || cfg.fc_hidden < 1 ||
      cfg.conv_filters < 1 || cfg.conv_kernel < 1 || cfg.conv_kernel % 2 == 0 || cfg.pool_h < 1 ||
      cfg.pool_w < 1)
    throw Error("neural: layer sizes must be positive and the kernel odd");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw Error("neural: dropout must be in [0, 1)");
  if (cfg.mode == SymbolMode::Word && (!pretrained || pretrained->size() == 0))
    throw Error("neural: word mode needs a non-empty pretrained embedding table");

  NeuralModel m;
  m.config_ = cfg;
  m.classes_ = std::move(classes);
  m.vocabulary_.push_back(kUnknown);
  std::set<std::string> seen;
  for (const auto& t : texts)
    for (const auto* side : {&t.src, &t.tgt})
      for (const auto& s : *side) {
        if (!seen.insert(s).second) continue;
        if (cfg.mode == SymbolMode::Word && !pretrained_lookup(*pretrained, s)) continue;
        m.vocabulary_.push_back(s);
      }
  std::sort(m.vocabulary_.begin() + 1, m.vocabulary_.end());
  for (std::size_t i = 0; i < m.vocabulary_.size(); ++i) m.index_[m.vocabulary_[i]] = i;

  Rng rng(derive_seed(cfg.seed, {0}));
  auto add = [&](std::string name, std::size_t r, std::size_t c) -> nn::Parameter& {
    m.param_index_[name] = m.params_.size();
    m.params_.emplace_back(std::move(name), r, c);
    return m.params_.back();
  };

  const std::size_t vsize = m.vocabulary_.size();
  if (cfg.mode == SymbolMode::Character) {
    auto& e = add("embedding", vsize, static_cast<std::size_t>(cfg.char_dim));
    fill_uniform(e, rng, 1.0);
  } else {
    auto& e = add("embedding", vsize, pretrained->dim());
    e.trainable = cfg.tune_embeddings;
    std::vector<double> mean(pretrained->dim(), 0.0);
    for (std::size_t i = 0; i < pretrained->size(); ++i) {
      const auto row = pretrained->row(i);
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(pretrained->size());
    std::copy(mean.begin(), mean.end(), e.value.begin());
    for (std::size_t i = 1; i < vsize; ++i) {
      const auto row = *pretrained_lookup(*pretrained, m.vocabulary_[i]);
      std::copy(row.begin(), row.end(), e.value.begin() + static_cast<std::ptrdiff_t>(i * e.cols));
    }
  }
  const std::size_t edim = m.params_[0].cols;
  const std::size_t h = static_cast<std::size_t>(cfg.gru_hidden);
  const double k = 1.0 / std::sqrt(static_cast<double>(h));
  for (const char* dir : {"fwd", "bwd"})
    for (const char* g : kGates) {
      const std::string p = std::string("gru.") + dir + ".";
      fill_uniform(add(p + "W_i" + g, h, edim), rng, k);
      fill_uniform(add(p + "b_i" + g, h, 1), rng, k);
      fill_uniform(add(p + "W_h" + g, h, h), rng, k);
      fill_uniform(add(p + "b_h" + g, h, 1), rng, k);
    }
  const std::size_t nclass = m.classes_.size();
  if (cfg.head == NeuralHead::MeanConcat) {
    const std::size_t hid = static_cast<std::size_t>(cfg.mlp_hidden);
    glorot(add("head.hidden.W", hid, 4 * h), rng);
    add("head.hidden.b", hid, 1);
    glorot(add("head.out.W", nclass, hid), rng);
    add("head.out.b", nclass, 1);
  } else {
    const std::size_t f = static_cast<std::size_t>(cfg.conv_filters);
    const std::size_t kk = static_cast<std::size_t>(cfg.conv_kernel);
    fill_uniform(add("head.conv.W", f, kk * kk), rng, 1.0 / static_cast<double>(kk));
    add("head.conv.b", f, 1);
    const std::size_t pooled = f * static_cast<std::size_t>(cfg.pool_h * cfg.pool_w);
    const std::size_t fc = static_cast<std::size_t>(cfg.fc_hidden);
    glorot(add("head.fc.W", fc, pooled), rng);
    add("head.fc.b", fc, 1);
    glorot(add("head.out.W", nclass, fc), rng);
    add("head.out.b", nclass, 1);
  }
  return m;
}

std::vector<nn::Var> NeuralModel::encode_on(nn::Tape& tape, const std::vector<std::string>& symbols,
                                            Rng* dropout_rng) {
  if (symbols.empty()) throw Error("neural: cannot encode an empty symbol sequence");
  auto& emb = param("embedding");
  std::vector<nn::Var> xs;
  xs.reserve(symbols.size());
  for (const auto& s : symbols) xs.push_back(tape.gather(emb, symbol_index(s)));

  const std::size_t h = static_cast<std::size_t>(config_.gru_hidden);
  auto run = [&](const std::string& dir, bool reverse) {
    const std::string p = "gru." + dir + ".";
    auto& Wir = param(p + "W_ir"); auto& bir = param(p + "b_ir");
    auto& Wiz = param(p + "W_iz"); auto& biz = param(p + "b_iz");
    auto& Win = param(p + "W_in"); auto& bin = param(p + "b_in");
    auto& Whr = param(p + "W_hr"); auto& bhr = param(p + "b_hr");
    auto& Whz = param(p + "W_hz"); auto& bhz = param(p + "b_hz");
    auto& Whn = param(p + "W_hn"); auto& bhn = param(p + "b_hn");
    std::vector<nn::Var> out(xs.size());
    nn::Var hprev = tape.constant(std::vector<double>(h, 0.0));
    for (std::size_t step = 0; step < xs.size(); ++step) {
      const std::size_t t = reverse ? xs.size() - 1 - step : step;
      const nn::Var x = xs[t];
      const nn::Var r = tape.sigmoid(tape.add(tape.linear(Wir, x, bir), tape.linear(Whr, hprev, bhr)));
      const nn::Var z = tape.sigmoid(tape.add(tape.linear(Wiz, x, biz), tape.linear(Whz, hprev, bhz)));
      const nn::Var n = tape.tanh(tape.add(tape.linear(Win, x, bin), tape.mul(r, tape.linear(Whn, hprev, bhn))));
      hprev = tape.add(tape.mul(tape.one_minus(z), n), tape.mul(z, hprev));
      out[t] = hprev;
    }
    return out;
  };
  const auto fwd = run("fwd", false);
  const auto bwd = run("bwd", true);
  std::vector<nn::Var> rep(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const nn::Var both[] = {fwd[t], bwd[t]};
    rep[t] = tape.dropout(tape.concat(both), config_.dropout, dropout_rng);
  }
  return rep;
}

nn::Var NeuralModel::forward(nn::Tape& tape, const TextPair& pair, Rng* dropout_rng) {
  const auto hs = encode_on(tape, pair.src, dropout_rng);
  const auto ht = encode_on(tape, pair.tgt, dropout_rng);
  if (config_.head == NeuralHead::MeanConcat) {
    const nn::Var means[] = {tape.mean(hs), tape.mean(ht)};
    const nn::Var c = tape.concat(means);
    nn::Var hid = tape.tanh(tape.linear(param("head.hidden.W"), c, param("head.hidden.b")));
    hid = tape.dropout(hid, config_.dropout, dropout_rng);
    return tape.linear(param("head.out.W"), hid, param("head.out.b"));
  }
  const nn::Var m = tape.dot_matrix(hs, ht);
  const nn::Var conv = tape.tanh(tape.conv2d(m, hs.size(), ht.size(), param("head.conv.W"), param("head.conv.b"),
                                             static_cast<std::size_t>(config_.conv_kernel)));
  nn::Var pooled = tape.adaptive_max_pool(conv, static_cast<std::size_t>(config_.conv_filters), hs.size(),
                                          ht.size(), static_cast<std::size_t>(config_.pool_h),
                                          static_cast<std::size_t>(config_.pool_w));
  pooled = tape.dropout(pooled, config_.dropout, dropout_rng);
  nn::Var fc = tape.tanh(tape.linear(param("head.fc.W"), pooled, param("head.fc.b")));
  fc = tape.dropout(fc, config_.dropout, dropout_rng);
  return tape.linear(param("head.out.W"), fc, param("head.out.b"));
}

// Inference never runs backward, so parameters are only read; the const_cast
// lets the tape ops share the training signatures.
Matrix NeuralModel::encode(const std::vector<std::string>& symbols) const {
  nn::Tape tape;
  const auto rep = const_cast<NeuralModel*>(this)->encode_on(tape, symbols, nullptr);
  const std::size_t w = 2 * static_cast<std::size_t>(config_.gru_hidden);
  Matrix out(rep.size(), w);
  for (std::size_t t = 0; t < rep.size(); ++t)
    std::copy(tape.value(rep[t]).begin(), tape.value(rep[t]).end(), out.row(t).begin());
  return out;
}

std::vector<double> NeuralModel::probabilities(const TextPair& pair) const {
  nn::Tape tape;
  const auto logits = const_cast<NeuralModel*>(this)->forward(tape, pair, nullptr);
  std::vector<double> p = tape.value(logits);
  const double m = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (double& v : p) s += (v = std::exp(v - m));
  for (double& v : p) v /= s;
  return p;
}

std::vector<Prediction> NeuralModel::predict(const std::vector<TextPair>& pairs) const {
  std::vector<Prediction> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    out[i].proba = probabilities(pairs[i]);
    out[i].label = argmax(out[i].proba);
  });
  return out;
}

double NeuralModel::loss(const std::vector<TextPair>& pairs, const std::vector<int>& labels, bool accumulate,
                         Rng* dropout_rng, double* min_pool_margin) {
  if (pairs.size() != labels.size() || pairs.empty()) throw Error("neural: batch and label sizes differ or are zero");
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    nn::Tape tape;
    const auto l = tape.softmax_xent(forward(tape, pairs[i], dropout_rng), labels[i]);
    total += tape.value(l)[0];
    if (accumulate) tape.backward(l, inv);
    if (min_pool_margin) *min_pool_margin = std::min(*min_pool_margin, tape.min_pool_margin());
  }
  return total * inv;
}

std::vector<double> NeuralModel::flat_parameters() const {
  std::vector<double> out;
  for (const auto& p : params_)
    if (p.trainable) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

void NeuralModel::set_flat_parameters(std::span<const double> v) {
  std::size_t at = 0;
  for (auto& p : params_) {
    if (!p.trainable) continue;
    if (at + p.size() > v.size()) throw Error("neural: parameter vector too short");
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(at), p.size(), p.value.begin());
    at += p.size();
  }
  if (at != v.size()) throw Error("neural: parameter vector too long");
}

bool NeuralModel::operator==(const NeuralModel& o) const {
  if (!(config_ == o.config_) || classes_ != o.classes_ || vocabulary_ != o.vocabulary_ ||
      params_.size() != o.params_.size())
    return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = o.params_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.trainable != b.trainable ||
        a.value != b.value)
      return false;
  }
  return true;
}

// --- training ------------------------------------------------------------------

NeuralTrainResult train_neural(const std::vector<TextPair>& texts, const std::vector<int>& labels,
                               std::vector<std::string> classes, const NeuralConfig& cfg,
                               const EmbeddingTable* pretrained, const std::vector<TextPair>& vocabulary_texts) {
  if (texts.size() != labels.size() || texts.empty()) throw Error("neural: empty or mismatched training data");
  if (cfg.batch < 1 || cfg.epochs < 0) throw Error("neural: batch must be positive, epochs non-negative");
  std::vector<TextPair> vocab = texts;
  vocab.insert(vocab.end(), vocabulary_texts.begin(), vocabulary_texts.end());
  NeuralTrainResult result{NeuralModel::create(cfg, std::move(classes), vocab, pretrained),
                           {}, false, -1, {}};
  NeuralModel& model = result.model;

  std::vector<std::vector<double>> m1, m2;
  for (const auto& p : model.parameters()) {
    m1.emplace_back(p.size(), 0.0);
    m2.emplace_back(p.size(), 0.0);
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(texts.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  std::vector<double> last_good = model.flat_parameters();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(epoch)}));
    Rng dropout_rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch)}));
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double epoch_loss = 0.0;
    bool bad = false;
    for (std::size_t start = 0; start < order.size() && !bad; start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<TextPair> bx;
      std::vector<int> by;
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(texts[order[i]]);
        by.push_back(labels[order[i]]);
      }
      for (auto& p : model.parameters()) p.zero_grad();
      const double l = model.loss(bx, by, true, &dropout_rng);
      if (!std::isfinite(l)) {
        bad = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start);
        break;
      }
      epoch_loss += l * static_cast<double>(end - start);
      ++step;
      const double c1 = 1 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1 - std::pow(b2, static_cast<double>(step));
      auto& params = model.parameters();
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double g = p.grad[i];
          m1[pi][i] = b1 * m1[pi][i] + (1 - b1) * g;
          m2[pi][i] = b2 * m2[pi][i] + (1 - b2) * g * g;
          p.value[i] -= cfg.learning_rate * (m1[pi][i] / c1) / (std::sqrt(m2[pi][i] / c2) + eps);
        }
      }
    }
    const auto current = model.flat_parameters();
    if (!bad && std::any_of(current.begin(), current.end(), [](double v) { return !std::isfinite(v); })) {
      bad = true;
      result.abort_reason = "non-finite parameters after epoch " + std::to_string(epoch);
    }
    if (bad) {
      model.set_flat_parameters(last_good);
      result.aborted = true;
      result.aborted_epoch = epoch;
      break;
    }
    last_good = current;
    result.loss_curve.push_back(epoch_loss / static_cast<double>(texts.size()));
  }
  for (auto& p : model.parameters()) p.zero_grad();
  return result;
}

GradientCheckResult gradient_check(NeuralModel& model, const std::vector<TextPair>& batch,
                                   const std::vector<int>& labels, double step) {
  GradientCheckResult r;
  for (auto& p : model.parameters()) p.zero_grad();
  model.loss(batch, labels, true, nullptr, &r.min_pool_margin);
  for (auto& p : model.parameters()) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + step;
      const double lp = model.loss(batch, labels, false);
      p.value[i] = orig - step;
      const double lm = model.loss(batch, labels, false);
      p.value[i] = orig;
      const double numeric = (lp - lm) / (2 * step);
      const double analytic = p.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      r.max_relative_error = std::max(r.max_relative_error, std::abs(analytic - numeric) / denom);
      ++r.checked;
    }
  }
  for (auto& p : model.parameters()) p.zero_grad();
  return r;
}

// --- files -------------------------------------------------------------------

namespace {

json config_to_json(const NeuralConfig& c) {
  return {{"head", head_name(c.head)},        {"mode", symbol_mode_name(c.mode)},
          {"char_dim", c.char_dim},           {"gru_hidden", c.gru_hidden},
          {"mlp_hidden", c.mlp_hidden},       {"conv_filters", c.conv_filters},
          {"conv_kernel", c.conv_kernel},     {"pool_h", c.pool_h},
          {"pool_w", c.pool_w},               {"fc_hidden", c.fc_hidden},
          {"dropout", c.dropout},             {"epochs", c.epochs},
          {"learning_rate", c.learning_rate}, {"batch", c.batch},
          {"tune_embeddings", c.tune_embeddings}, {"char_spaces", c.char_spaces},
          {"seed", c.seed}};
}

NeuralConfig config_from_json(const json& j) {
  NeuralConfig c;
  c.head = parse_head(j.at("head").get<std::string>());
  c.mode = parse_symbol_mode(j.at("mode").get<std::string>());
  c.char_dim = j.at("char_dim");
  c.gru_hidden = j.at("gru_hidden");
  c.mlp_hidden = j.at("mlp_hidden");
  c.conv_filters = j.at("conv_filters");
  c.conv_kernel = j.at("conv_kernel");
  c.pool_h = j.at("pool_h");
  c.pool_w = j.at("pool_w");
  c.fc_hidden = j.at("fc_hidden");
  c.dropout = j.at("dropout");
  c.epochs = j.at("epochs");
  c.learning_rate = j.at("learning_rate");
  c.batch = j.at("batch");
  c.tune_embeddings = j.at("tune_embeddings");
  c.char_spaces = j.at("char_spaces");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

std::string serialize_neural(const NeuralModel& model) {
  json params = json::array();
  for (const auto& p : model.parameters())
    params.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}, {"trainable", p.trainable},
                      {"value", p.value}});
  json j = {{"format", "tpc-neural"},
            {"version", kNeuralFormatVersion},
            {"config", config_to_json(model.config())},
            {"classes", model.classes()},
            {"vocabulary", model.vocabulary()},
            {"parameters", params}};
  return j.dump();
}

NeuralModel deserialize_neural(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "tpc-neural") throw Error("neural checkpoint: not a tpc neural model");
    if (j.at("version").get<int>() != kNeuralFormatVersion)
      throw Error("neural checkpoint: unsupported version " + j.at("version").dump());
    NeuralModel m;
    m.config_ = config_from_json(j.at("config"));
    m.classes_ = j.at("classes").get<std::vector<std::string>>();
    m.vocabulary_ = j.at("vocabulary").get<std::vector<std::string>>();
    if (m.vocabulary_.empty() || m.vocabulary_[0] != kUnknown)
      throw Error("neural checkpoint: vocabulary must start with the unknown symbol");
    for (std::size_t i = 0; i < m.vocabulary_.size(); ++i) m.index_[m.vocabulary_[i]] = i;
    for (const auto& p : j.at("parameters")) {
      nn::Parameter q(p.at("name").get<std::string>(), p.at("rows").get<std::size_t>(),
                      p.at("cols").get<std::size_t>());
      q.trainable = p.at("trainable");
      q.value = p.at("value").get<std::vector<double>>();
      if (q.value.size() != q.rows * q.cols) throw Error("neural checkpoint: parameter " + q.name + " has wrong size");
      m.param_index_[q.name] = m.params_.size();
      m.params_.push_back(std::move(q));
    }
    // Shape check against a freshly built network with the same config.
    std::vector<TextPair> none;
    EmbeddingTable dummy(m.params_.empty() ? 1 : m.params_[0].cols);
    std::vector<double> zero(dummy.dim(), 0.0);
    dummy.insert("x", zero);
    NeuralConfig shape_cfg = m.config_;
    const auto ref = NeuralModel::create(shape_cfg, m.classes_, none, &dummy);
    if (ref.params_.size() != m.params_.size()) throw Error("neural checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < ref.params_.size(); ++i) {
      const auto& a = ref.params_[i];
      const auto& b = m.params_[i];
      const bool emb = a.name == "embedding";
      if (a.name != b.name || (!emb && (a.rows != b.rows || a.cols != b.cols)) ||
          (emb && b.rows != m.vocabulary_.size()))
        throw Error("neural checkpoint: parameter " + b.name + " does not match the configuration");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("neural checkpoint: malformed: ") + e.what());
  }
}

void save_neural(const std::string& path, const NeuralModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write neural checkpoint " + path);
  out << serialize_neural(model) << '\n';
  if (!out) throw Error("failed writing neural checkpoint " + path);
}

NeuralModel load_neural(const std::string& path) {
  try {
    return deserialize_neural(text::read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void write_loss_curve(std::ostream& out, const std::vector<double>& curve) {
  out << "epoch\tloss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << (i + 1) << '\t' << format_real(curve[i]) << '\n';
}

}  // namespace tpc
