#pragma once

#include <cstdint>
#include <vector>

#include "ktrans/masking.hpp"
#include "ktrans/model.hpp"

namespace ktrans {

// Pre-training objective: masked cross-entropy for the token-level view
// plus, when enabled, the instruction-level view. Both heads predict over
// the full token vocabulary; losses are means over predicted positions.

struct LossSwitches {
  bool explicit_knowledge = true;  // feed knowledge channels into the embedding sum
  bool implicit_knowledge = true;  // include the instruction-masking objective
};

struct LossReport {
  double mlm = 0.0;
  double ki = 0.0;
  double total = 0.0;
  long mlm_positions = 0;
  long ki_positions = 0;
};

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits`. When dlogits is given it receives d(mean)/dlogits.
template <class S>
double masked_ce(const MatX<S>& logits, const std::vector<int>& targets,
                 MatX<S>* dlogits) {
  const Eigen::Index m = logits.rows();
  if (m == 0) throw ConfigError("cross-entropy over zero positions");
  if (static_cast<std::size_t>(m) != targets.size()) {
    throw ConfigError("target count does not match logit rows");
  }
  if (dlogits) dlogits->resize(m, logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= logits.cols()) {
      throw ConfigError("cross-entropy target ID " + std::to_string(target) +
                        " out of vocab range");
    }
    const S max = logits.row(i).maxCoeff();
    auto shifted = (logits.row(i).array() - max).exp();
    const S z = shifted.sum();
    const S log_z = max + std::log(z);
    loss += static_cast<double>(log_z - logits(i, target));
    if (dlogits) {
      dlogits->row(i) = (shifted / z).matrix();
      (*dlogits)(i, target) -= S(1);
    }
  }
  loss /= static_cast<double>(m);
  if (dlogits) *dlogits /= S(m);
  return loss;
}

/// Loss of one masked view: encode the corrupted sequence, project the
/// predicted positions through the head, and take masked cross-entropy.
/// With `grads` the full backward pass runs and gradients of
/// grad_scale * loss are accumulated. The returned loss is unscaled.
template <class S>
double view_loss(const MaskedView& mv, const Parameters<S>& p, Head head,
                 bool use_knowledge, Rng* dropout_rng, Parameters<S>* grads,
                 double grad_scale) {
  MatX<S> x = embed(mv.view, p, use_knowledge);
  ForwardTape<S> tape;
  MatX<S> ctx = encode_sequence(x, mv.view.attention_mask, p, dropout_rng,
                                grads ? &tape : nullptr);

  const Eigen::Index m = static_cast<Eigen::Index>(mv.plan.positions.size());
  MatX<S> rows(m, ctx.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    rows.row(i) = ctx.row(mv.plan.positions[static_cast<std::size_t>(i)]);
  }
  MatX<S> logits = head_logits(rows, p, head);
  if (!logits.allFinite()) {
    throw NumericError("non-finite prediction-head logits", p.config.layers);
  }

  MatX<S> dlogits;
  const double loss = masked_ce(logits, mv.targets, grads ? &dlogits : nullptr);
  if (grads) {
    dlogits *= S(grad_scale);
    head_weight_grad(*grads, head) += rows.transpose() * dlogits;
    head_bias_grad(*grads, head).array() += dlogits.array().colwise().sum();
    MatX<S> drows = dlogits * head_weight(p, head).transpose();
    MatX<S> dctx = MatX<S>::Zero(ctx.rows(), ctx.cols());
    for (Eigen::Index i = 0; i < m; ++i) {
      dctx.row(mv.plan.positions[static_cast<std::size_t>(i)]) = drows.row(i);
    }
    MatX<S> dembed = encoder_backward(tape, dctx, p, *grads);
    embed_backward(mv.view, dembed, use_knowledge, *grads);
  }
  return loss;
}

/// Builds the masked view(s) of one function from seq_seed and sums the
/// enabled objectives. Masking draws, dropout draws and therefore the
/// loss depend only on (enc, params, seq_seed, switches, options).
template <class S>
LossReport total_loss(const EncodedFunction& enc, const Parameters<S>& p,
                      std::uint64_t seq_seed, const LossSwitches& switches,
                      const MaskingOptions& options, bool train_mode,
                      Parameters<S>* grads = nullptr, double grad_scale = 1.0) {
  LossReport report;
  const bool dropout_active = train_mode && p.config.dropout > 0.0;

  Rng mlm_rng(derive_seed(seq_seed, fnv1a64("mlm-mask")));
  MaskedView mlm_view = mlm_mask(enc, mlm_rng, p.config.vocab_sizes[0], options);
  Rng mlm_drop(derive_seed(seq_seed, fnv1a64("mlm-drop")));
  report.mlm = view_loss(mlm_view, p, Head::Mlm, switches.explicit_knowledge,
                         dropout_active ? &mlm_drop : nullptr, grads, grad_scale);
  report.mlm_positions = static_cast<long>(mlm_view.plan.positions.size());
  report.total = report.mlm;

  if (switches.implicit_knowledge) {
    Rng ki_rng(derive_seed(seq_seed, fnv1a64("ki-mask")));
    MaskedView ki_view = ki_mask(enc, ki_rng, options);
    Rng ki_drop(derive_seed(seq_seed, fnv1a64("ki-drop")));
    report.ki = view_loss(ki_view, p, Head::Ki, switches.explicit_knowledge,
                          dropout_active ? &ki_drop : nullptr, grads, grad_scale);
    report.ki_positions = static_cast<long>(ki_view.plan.positions.size());
    report.total += report.ki;
  }
  return report;
}

}  // namespace ktrans
