#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ktrans/encode.hpp"
#include "ktrans/errors.hpp"
#include "ktrans/rng.hpp"

namespace ktrans {

// Transformer encoder with additive channel embeddings. Everything is
// templated on the scalar so the training path runs in float while
// gradient checking runs the identical code in double.

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowX = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class Pooling { Cls, Mean };

struct ModelConfig {
  int layers = 4;
  int hidden = 128;
  int heads = 4;
  int ffn_dim = 512;
  int max_len = 512;
  std::array<int, kNumChannels> vocab_sizes{};  // token, instr_type, opnd_type, opnd_rw, flags
  double dropout = 0.1;
  std::uint64_t seed = 0;
  bool tie_heads = false;
  Pooling pooling = Pooling::Cls;

  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& origin);

enum class TensorKind { Weight, Bias, Gain };

template <class S>
struct LayerParams {
  MatX<S> wq, bq, wk, bk, wv, bv, wo, bo;  // biases are 1 x hidden
  MatX<S> ln1_gain, ln1_bias;
  MatX<S> w1, b1, w2, b2;
  MatX<S> ln2_gain, ln2_bias;
};

template <class S>
struct Parameters {
  ModelConfig config;
  std::array<MatX<S>, kNumChannels> embeddings;  // vocab x hidden per channel
  MatX<S> pos_embedding;                         // max_len x hidden
  std::vector<LayerParams<S>> layers;
  MatX<S> mlm_w, mlm_b;  // hidden x token_vocab, 1 x token_vocab
  MatX<S> ki_w, ki_b;    // absent (0 x 0) when tie_heads

  Parameters() = default;
  explicit Parameters(const ModelConfig& cfg);
};

/// Visits every tensor in the canonical order (also the checkpoint order).
/// f(name, tensor, kind); works on const and mutable Parameters.
template <class P, class F>
void visit_tensors(P& p, F&& f) {
  f("embedding.token", p.embeddings[0], TensorKind::Weight);
  f("embedding.instr_type", p.embeddings[1], TensorKind::Weight);
  f("embedding.opnd_type", p.embeddings[2], TensorKind::Weight);
  f("embedding.opnd_rw", p.embeddings[3], TensorKind::Weight);
  f("embedding.flags", p.embeddings[4], TensorKind::Weight);
  f("embedding.position", p.pos_embedding, TensorKind::Weight);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& lp = p.layers[l];
    const std::string prefix = "layer." + std::to_string(l) + ".";
    f(prefix + "attn.wq", lp.wq, TensorKind::Weight);
    f(prefix + "attn.bq", lp.bq, TensorKind::Bias);
    f(prefix + "attn.wk", lp.wk, TensorKind::Weight);
    f(prefix + "attn.bk", lp.bk, TensorKind::Bias);
    f(prefix + "attn.wv", lp.wv, TensorKind::Weight);
    f(prefix + "attn.bv", lp.bv, TensorKind::Bias);
    f(prefix + "attn.wo", lp.wo, TensorKind::Weight);
    f(prefix + "attn.bo", lp.bo, TensorKind::Bias);
    f(prefix + "ln1.gain", lp.ln1_gain, TensorKind::Gain);
    f(prefix + "ln1.bias", lp.ln1_bias, TensorKind::Bias);
    f(prefix + "ffn.w1", lp.w1, TensorKind::Weight);
    f(prefix + "ffn.b1", lp.b1, TensorKind::Bias);
    f(prefix + "ffn.w2", lp.w2, TensorKind::Weight);
    f(prefix + "ffn.b2", lp.b2, TensorKind::Bias);
    f(prefix + "ln2.gain", lp.ln2_gain, TensorKind::Gain);
    f(prefix + "ln2.bias", lp.ln2_bias, TensorKind::Bias);
  }
  f("head.mlm.w", p.mlm_w, TensorKind::Weight);
  f("head.mlm.b", p.mlm_b, TensorKind::Bias);
  if (!p.config.tie_heads) {
    f("head.ki.w", p.ki_w, TensorKind::Weight);
    f("head.ki.b", p.ki_b, TensorKind::Bias);
  }
}

template <class S>
struct TensorRef {
  std::string name;
  MatX<S>* tensor;
  TensorKind kind;
};

template <class S>
struct ConstTensorRef {
  std::string name;
  const MatX<S>* tensor;
  TensorKind kind;
};

template <class S>
std::vector<TensorRef<S>> tensor_refs(Parameters<S>& p) {
  std::vector<TensorRef<S>> out;
  visit_tensors(p, [&](const std::string& name, MatX<S>& t, TensorKind k) {
    out.push_back({name, &t, k});
  });
  return out;
}

template <class S>
std::vector<ConstTensorRef<S>> tensor_refs(const Parameters<S>& p) {
  std::vector<ConstTensorRef<S>> out;
  visit_tensors(p, [&](const std::string& name, const MatX<S>& t, TensorKind k) {
    out.push_back({name, &t, k});
  });
  return out;
}

long parameter_count(const ModelConfig& config);

template <class S>
long parameter_count(const Parameters<S>& p) {
  long n = 0;
  visit_tensors(p, [&](const std::string&, const MatX<S>& t, TensorKind) {
    n += static_cast<long>(t.size());
  });
  return n;
}

/// Fresh parameters: truncated-normal weights (std 0.02, clipped at two
/// std), zero biases, unit gains. The draw sequence is fixed by
/// (config.seed, tensor order), so identical configs initialize
/// identically.
template <class S>
Parameters<S> init_params(const ModelConfig& config) {
  config.validate();
  Parameters<S> p(config);
  Rng rng(derive_seed(config.seed, fnv1a64("param-init")));
  visit_tensors(p, [&](const std::string&, MatX<S>& t, TensorKind kind) {
    switch (kind) {
      case TensorKind::Weight:
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
          for (Eigen::Index c = 0; c < t.cols(); ++c) {
            t(r, c) = static_cast<S>(rng.truncated_normal(0.02));
          }
        }
        break;
      case TensorKind::Bias:
        t.setZero();
        break;
      case TensorKind::Gain:
        t.setOnes();
        break;
    }
  });
  return p;
}

template <class S>
Parameters<S> zeros_like(const Parameters<S>& p) {
  return Parameters<S>(p.config);
}

// ---------------------------------------------------------------------------
// Forward pass with tape.

template <class S>
struct LnTape {
  MatX<S> xhat;
  VecX<S> rstd;
};

template <class S>
struct LayerTape {
  MatX<S> x_in, q, k, v;
  std::vector<MatX<S>> attn;  // per-head L x L probabilities
  MatX<S> ctx, drop1;
  LnTape<S> ln1;
  MatX<S> y1, u, g, drop2;
  LnTape<S> ln2;
};

template <class S>
struct ForwardTape {
  MatX<S> drop0;  // input dropout scales, empty in eval mode
  std::vector<LayerTape<S>> layers;
};

inline constexpr double kLnEps = 1e-12;
inline constexpr double kAttnMaskValue = -1e9;
inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <class S>
S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(kInvSqrt2)));
}

template <class S>
S gelu_grad_scalar(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(kInvSqrt2)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(kInvSqrt2Pi);
  return cdf + x * pdf;
}

/// Sum of token, knowledge-channel and position embedding rows; exactly
/// the additive combination, no scaling or normalization. use_knowledge
/// false drops the four knowledge channels. Throws ConfigError on IDs out
/// of the configured vocab ranges or sequences longer than max_len.
template <class S>
MatX<S> embed(const EncodedFunction& enc, const Parameters<S>& p, bool use_knowledge) {
  const int len = enc.length();
  const int hidden = p.config.hidden;
  if (len == 0) throw ConfigError("cannot embed an empty sequence");
  if (len > p.config.max_len) {
    throw ConfigError("sequence length " + std::to_string(len) +
                      " exceeds max_len " + std::to_string(p.config.max_len));
  }
  auto check_id = [&](int id, int vocab, const char* what) {
    if (id < 0 || id >= vocab) {
      throw ConfigError(std::string(what) + " ID " + std::to_string(id) +
                        " out of range [0, " + std::to_string(vocab) + ")");
    }
  };

  MatX<S> x(len, hidden);
  for (int i = 0; i < len; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    check_id(enc.token_ids[si], p.config.vocab_sizes[0], "token");
    check_id(enc.positions[si], p.config.max_len, "position");
    x.row(i) = p.embeddings[0].row(enc.token_ids[si]) +
               p.pos_embedding.row(enc.positions[si]);
    if (use_knowledge) {
      check_id(enc.instr_type_ids[si], p.config.vocab_sizes[1], "instruction type");
      check_id(enc.opnd_type_ids[si], p.config.vocab_sizes[2], "operand type");
      check_id(enc.opnd_rw_ids[si], p.config.vocab_sizes[3], "operand r/w");
      check_id(enc.flags_ids[si], p.config.vocab_sizes[4], "flags");
      x.row(i) += p.embeddings[1].row(enc.instr_type_ids[si]) +
                  p.embeddings[2].row(enc.opnd_type_ids[si]) +
                  p.embeddings[3].row(enc.opnd_rw_ids[si]) +
                  p.embeddings[4].row(enc.flags_ids[si]);
    }
  }
  return x;
}

template <class S>
MatX<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  MatX<S> m(rows, cols);
  const S keep_scale = S(1.0 / (1.0 - rate));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = rng.uniform_real() < rate ? S(0) : keep_scale;
    }
  }
  return m;
}

template <class S>
MatX<S> ln_forward(const MatX<S>& x, const MatX<S>& gain, const MatX<S>& bias,
                   LnTape<S>* tape) {
  const Eigen::Index hidden = x.cols();
  MatX<S> xhat(x.rows(), hidden);
  VecX<S> rstd(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S mu = x.row(i).mean();
    auto centered = x.row(i).array() - mu;
    const S var = centered.square().sum() / S(hidden);
    const S r = S(1) / std::sqrt(var + S(kLnEps));
    xhat.row(i) = (centered * r).matrix();
    rstd(i) = r;
  }
  MatX<S> y = ((xhat.array().rowwise() * gain.row(0).array()).rowwise() +
               bias.row(0).array())
                  .matrix();
  if (tape) {
    tape->xhat = std::move(xhat);
    tape->rstd = std::move(rstd);
  }
  return y;
}

/// Accumulates dgain/dbias and returns dx.
template <class S>
MatX<S> ln_backward(const MatX<S>& dy, const MatX<S>& gain, const LnTape<S>& tape,
                    MatX<S>& dgain, MatX<S>& dbias) {
  dgain.array() += (dy.array() * tape.xhat.array()).colwise().sum();
  dbias.array() += dy.array().colwise().sum();
  MatX<S> dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  MatX<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const S m1 = dxhat.row(i).mean();
    const S m2 = (dxhat.row(i).array() * tape.xhat.row(i).array()).mean();
    dx.row(i) = (tape.rstd(i) *
                 (dxhat.row(i).array() - m1 - tape.xhat.row(i).array() * m2))
                    .matrix();
  }
  return dx;
}

template <class S>
MatX<S> row_softmax(MatX<S> scores) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const S m = scores.row(i).maxCoeff();
    auto e = (scores.row(i).array() - m).exp();
    scores.row(i) = (e / e.sum()).matrix();
  }
  return scores;
}

/// Runs the encoder stack over precomputed embeddings. Padding positions
/// (attention_mask 0) are excluded as attention keys via a large negative
/// additive score. dropout_rng enables the three dropout sites (input,
/// attention output, FFN output); pass nullptr for evaluation. When tape
/// is given every intermediate needed by encoder_backward is recorded.
template <class S>
MatX<S> encode_sequence(const MatX<S>& embeddings,
                        const std::vector<std::uint8_t>& attention_mask,
                        const Parameters<S>& p, Rng* dropout_rng = nullptr,
                        ForwardTape<S>* tape = nullptr) {
  const Eigen::Index len = embeddings.rows();
  const Eigen::Index hidden = embeddings.cols();
  if (static_cast<std::size_t>(len) != attention_mask.size()) {
    throw ConfigError("attention mask length does not match sequence length");
  }
  if (hidden != p.config.hidden) {
    throw ConfigError("embedding width does not match model hidden size");
  }
  const bool use_drop = dropout_rng != nullptr && p.config.dropout > 0.0;
  const int n_heads = p.config.heads;
  const Eigen::Index head_dim = hidden / n_heads;
  const S scale = S(1) / std::sqrt(S(head_dim));

  RowX<S> mask_add(len);
  for (Eigen::Index j = 0; j < len; ++j) {
    mask_add(j) = attention_mask[static_cast<std::size_t>(j)] ? S(0) : S(kAttnMaskValue);
  }

  if (tape) tape->layers.resize(static_cast<std::size_t>(p.config.layers));

  MatX<S> x = embeddings;
  if (!x.allFinite()) throw NumericError("non-finite embedding output", -1);
  if (use_drop) {
    MatX<S> drop0 = dropout_mask<S>(len, hidden, p.config.dropout, *dropout_rng);
    x = x.cwiseProduct(drop0);
    if (tape) tape->drop0 = std::move(drop0);
  }

  for (int l = 0; l < p.config.layers; ++l) {
    const LayerParams<S>& lp = p.layers[static_cast<std::size_t>(l)];
    LayerTape<S>* t = tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr;

    MatX<S> q = (x * lp.wq).rowwise() + lp.bq.row(0);
    MatX<S> k = (x * lp.wk).rowwise() + lp.bk.row(0);
    MatX<S> v = (x * lp.wv).rowwise() + lp.bv.row(0);

    MatX<S> ctx(len, hidden);
    std::vector<MatX<S>> head_probs;
    if (t) head_probs.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      auto qh = q.middleCols(h * head_dim, head_dim);
      auto kh = k.middleCols(h * head_dim, head_dim);
      auto vh = v.middleCols(h * head_dim, head_dim);
      MatX<S> scores = (qh * kh.transpose()) * scale;
      scores.rowwise() += mask_add;
      MatX<S> probs = row_softmax(std::move(scores));
      ctx.middleCols(h * head_dim, head_dim) = probs * vh;
      if (t) head_probs.push_back(std::move(probs));
    }

    MatX<S> attn_out = (ctx * lp.wo).rowwise() + lp.bo.row(0);
    MatX<S> drop1;
    if (use_drop) {
      drop1 = dropout_mask<S>(len, hidden, p.config.dropout, *dropout_rng);
      attn_out = attn_out.cwiseProduct(drop1);
    }
    MatX<S> s1 = x + attn_out;
    LnTape<S> ln1;
    MatX<S> y1 = ln_forward(s1, lp.ln1_gain, lp.ln1_bias, t ? &ln1 : nullptr);

    MatX<S> u = (y1 * lp.w1).rowwise() + lp.b1.row(0);
    MatX<S> g = u.unaryExpr([](S a) { return gelu_scalar(a); });
    MatX<S> z = (g * lp.w2).rowwise() + lp.b2.row(0);
    MatX<S> drop2;
    if (use_drop) {
      drop2 = dropout_mask<S>(len, hidden, p.config.dropout, *dropout_rng);
      z = z.cwiseProduct(drop2);
    }
    MatX<S> s2 = y1 + z;
    LnTape<S> ln2;
    MatX<S> y2 = ln_forward(s2, lp.ln2_gain, lp.ln2_bias, t ? &ln2 : nullptr);

    if (!y2.allFinite()) {
      throw NumericError("non-finite activations in encoder layer " + std::to_string(l), l);
    }
    if (t) {
      t->x_in = std::move(x);
      t->q = std::move(q);
      t->k = std::move(k);
      t->v = std::move(v);
      t->attn = std::move(head_probs);
      t->ctx = std::move(ctx);
      t->drop1 = std::move(drop1);
      t->ln1 = std::move(ln1);
      t->y1 = std::move(y1);
      t->u = std::move(u);
      t->g = std::move(g);
      t->drop2 = std::move(drop2);
      t->ln2 = std::move(ln2);
    }
    x = std::move(y2);
  }
  return x;
}

/// Backpropagates d_out (gradient at the encoder output) through the
/// stack, accumulating parameter gradients into `grads`, and returns the
/// gradient at the embedding sum (input-dropout already applied).
template <class S>
MatX<S> encoder_backward(const ForwardTape<S>& tape, const MatX<S>& d_out,
                         const Parameters<S>& p, Parameters<S>& grads) {
  const int n_heads = p.config.heads;
  const Eigen::Index hidden = p.config.hidden;
  const Eigen::Index head_dim = hidden / n_heads;
  const S scale = S(1) / std::sqrt(S(head_dim));

  MatX<S> d = d_out;
  for (int l = p.config.layers - 1; l >= 0; --l) {
    const LayerTape<S>& t = tape.layers[static_cast<std::size_t>(l)];
    const LayerParams<S>& lp = p.layers[static_cast<std::size_t>(l)];
    LayerParams<S>& gl = grads.layers[static_cast<std::size_t>(l)];
    const Eigen::Index len = t.x_in.rows();

    MatX<S> ds2 = ln_backward(d, lp.ln2_gain, t.ln2, gl.ln2_gain, gl.ln2_bias);
    MatX<S> dy1 = ds2;
    MatX<S> dz = t.drop2.size() ? ds2.cwiseProduct(t.drop2).eval() : ds2;

    gl.w2 += t.g.transpose() * dz;
    gl.b2.array() += dz.array().colwise().sum();
    MatX<S> dg = dz * lp.w2.transpose();
    MatX<S> du = dg.cwiseProduct(t.u.unaryExpr([](S a) { return gelu_grad_scalar(a); }));
    gl.w1 += t.y1.transpose() * du;
    gl.b1.array() += du.array().colwise().sum();
    dy1 += du * lp.w1.transpose();

    MatX<S> ds1 = ln_backward(dy1, lp.ln1_gain, t.ln1, gl.ln1_gain, gl.ln1_bias);
    MatX<S> dx = ds1;
    MatX<S> d_attn = t.drop1.size() ? ds1.cwiseProduct(t.drop1).eval() : ds1;

    gl.wo += t.ctx.transpose() * d_attn;
    gl.bo.array() += d_attn.array().colwise().sum();
    MatX<S> dctx = d_attn * lp.wo.transpose();

    MatX<S> dq(len, hidden), dk(len, hidden), dv(len, hidden);
    for (int h = 0; h < n_heads; ++h) {
      const MatX<S>& probs = t.attn[static_cast<std::size_t>(h)];
      auto dctx_h = dctx.middleCols(h * head_dim, head_dim);
      auto kh = t.k.middleCols(h * head_dim, head_dim);
      auto qh = t.q.middleCols(h * head_dim, head_dim);
      auto vh = t.v.middleCols(h * head_dim, head_dim);

      MatX<S> dprobs = dctx_h * vh.transpose();
      dv.middleCols(h * head_dim, head_dim) = probs.transpose() * dctx_h;

      MatX<S> dscores(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        const S dot = (dprobs.row(i).array() * probs.row(i).array()).sum();
        dscores.row(i) =
            (probs.row(i).array() * (dprobs.row(i).array() - dot)).matrix();
      }
      dscores *= scale;
      dq.middleCols(h * head_dim, head_dim) = dscores * kh;
      dk.middleCols(h * head_dim, head_dim) = dscores.transpose() * qh;
    }

    gl.wq += t.x_in.transpose() * dq;
    gl.bq.array() += dq.array().colwise().sum();
    gl.wk += t.x_in.transpose() * dk;
    gl.bk.array() += dk.array().colwise().sum();
    gl.wv += t.x_in.transpose() * dv;
    gl.bv.array() += dv.array().colwise().sum();
    dx += dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();

    d = std::move(dx);
  }
  if (tape.drop0.size()) d = d.cwiseProduct(tape.drop0);
  return d;
}

/// Scatter-adds the embedding-sum gradient into the embedding tables.
template <class S>
void embed_backward(const EncodedFunction& enc, const MatX<S>& d_embed,
                    bool use_knowledge, Parameters<S>& grads) {
  for (Eigen::Index i = 0; i < d_embed.rows(); ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    grads.embeddings[0].row(enc.token_ids[si]) += d_embed.row(i);
    grads.pos_embedding.row(enc.positions[si]) += d_embed.row(i);
    if (use_knowledge) {
      grads.embeddings[1].row(enc.instr_type_ids[si]) += d_embed.row(i);
      grads.embeddings[2].row(enc.opnd_type_ids[si]) += d_embed.row(i);
      grads.embeddings[3].row(enc.opnd_rw_ids[si]) += d_embed.row(i);
      grads.embeddings[4].row(enc.flags_ids[si]) += d_embed.row(i);
    }
  }
}

enum class Head { Mlm, Ki };

template <class S>
const MatX<S>& head_weight(const Parameters<S>& p, Head head) {
  return (head == Head::Mlm || p.config.tie_heads) ? p.mlm_w : p.ki_w;
}

template <class S>
const MatX<S>& head_bias(const Parameters<S>& p, Head head) {
  return (head == Head::Mlm || p.config.tie_heads) ? p.mlm_b : p.ki_b;
}

template <class S>
MatX<S>& head_weight_grad(Parameters<S>& grads, Head head) {
  return (head == Head::Mlm || grads.config.tie_heads) ? grads.mlm_w : grads.ki_w;
}

template <class S>
MatX<S>& head_bias_grad(Parameters<S>& grads, Head head) {
  return (head == Head::Mlm || grads.config.tie_heads) ? grads.mlm_b : grads.ki_b;
}

/// Token-vocabulary logits for the given prediction head.
template <class S>
MatX<S> head_logits(const MatX<S>& contextual, const Parameters<S>& p, Head head) {
  return (contextual * head_weight(p, head)).rowwise() + head_bias(p, head).row(0);
}

/// Function-level vector: the [CLS] row, or the mean over all
/// instruction-span positions.
template <class S>
VecX<S> function_embedding(const MatX<S>& contextual, const EncodedFunction& enc,
                           Pooling pooling) {
  if (pooling == Pooling::Cls) return contextual.row(0).transpose();
  VecX<S> acc = VecX<S>::Zero(contextual.cols());
  long n = 0;
  for (auto [a, b] : enc.instruction_spans) {
    for (int i = a; i <= b; ++i) {
      acc += contextual.row(i).transpose();
      ++n;
    }
  }
  if (n == 0) throw ConfigError("mean pooling requires at least one instruction span");
  return acc / S(n);
}

/// Mean of the contextual rows covered by one instruction span.
template <class S>
VecX<S> instruction_embedding(const MatX<S>& contextual, std::pair<int, int> span) {
  const auto [a, b] = span;
  if (a < 0 || b < a || b >= contextual.rows()) {
    throw ConfigError("instruction span [" + std::to_string(a) + ", " +
                      std::to_string(b) + "] out of range");
  }
  VecX<S> acc = VecX<S>::Zero(contextual.cols());
  for (int i = a; i <= b; ++i) acc += contextual.row(i).transpose();
  return acc / S(b - a + 1);
}

template <class S>
Parameters<S>::Parameters(const ModelConfig& cfg) : config(cfg) {
  const int hidden = cfg.hidden;
  for (int c = 0; c < kNumChannels; ++c) {
    embeddings[static_cast<std::size_t>(c)] =
        MatX<S>::Zero(cfg.vocab_sizes[static_cast<std::size_t>(c)], hidden);
  }
  pos_embedding = MatX<S>::Zero(cfg.max_len, hidden);
  layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& lp : layers) {
    lp.wq = MatX<S>::Zero(hidden, hidden);
    lp.wk = MatX<S>::Zero(hidden, hidden);
    lp.wv = MatX<S>::Zero(hidden, hidden);
    lp.wo = MatX<S>::Zero(hidden, hidden);
    lp.bq = MatX<S>::Zero(1, hidden);
    lp.bk = MatX<S>::Zero(1, hidden);
    lp.bv = MatX<S>::Zero(1, hidden);
    lp.bo = MatX<S>::Zero(1, hidden);
    lp.ln1_gain = MatX<S>::Zero(1, hidden);
    lp.ln1_bias = MatX<S>::Zero(1, hidden);
    lp.w1 = MatX<S>::Zero(hidden, cfg.ffn_dim);
    lp.b1 = MatX<S>::Zero(1, cfg.ffn_dim);
    lp.w2 = MatX<S>::Zero(cfg.ffn_dim, hidden);
    lp.b2 = MatX<S>::Zero(1, hidden);
    lp.ln2_gain = MatX<S>::Zero(1, hidden);
    lp.ln2_bias = MatX<S>::Zero(1, hidden);
  }
  mlm_w = MatX<S>::Zero(hidden, cfg.vocab_sizes[0]);
  mlm_b = MatX<S>::Zero(1, cfg.vocab_sizes[0]);
  if (!cfg.tie_heads) {
    ki_w = MatX<S>::Zero(hidden, cfg.vocab_sizes[0]);
    ki_b = MatX<S>::Zero(1, cfg.vocab_sizes[0]);
  }
}

}  // namespace ktrans
