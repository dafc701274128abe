#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "ktrans/corpus.hpp"
#include "ktrans/losses.hpp"
#include "ktrans/trainer.hpp"

namespace ktrans {

// Evaluation: masked-token perplexity, instruction outlier detection,
// similarity-based retrieval metrics, ablation over the two knowledge
// switches, and embedding export.

/// Runs fn(0..n-1), each index exactly once. Results must be written into
/// per-index slots by the caller's closure, which keeps output identical
/// for any thread count.
template <class F>
void parallel_for_ordered(long n, int threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  auto worker = [&] {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = static_cast<int>(std::min<long>(threads, n));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Perplexity.

struct PplReport {
  double ppl = 0.0;
  long predicted = 0;        // positions entering the average
  long skipped_special = 0;  // masked positions whose target is a special ID
  long clamped = 0;          // probabilities clamped at the floor
};

inline constexpr double kProbFloor = 1e-12;

/// Masked-token perplexity 2^(-mean log2 p) over the pool. Masking draws
/// come from (seed, function_id), dropout is off, and the predictive
/// distribution is the softmax restricted to data token IDs, so special
/// tokens neither receive probability mass nor enter the average.
template <class S>
PplReport perplexity(const Parameters<S>& p, const std::vector<EncodedFunction>& pool,
                     std::uint64_t seed, const MaskingOptions& options = {},
                     bool use_knowledge = true, int threads = 1) {
  if (pool.empty()) throw ConfigError("cannot evaluate perplexity on an empty pool");
  const int vocab = p.config.vocab_sizes[0];

  struct Partial {
    double log2_sum = 0.0;
    long predicted = 0, skipped = 0, clamped = 0;
  };
  std::vector<Partial> partials(pool.size());

  parallel_for_ordered(static_cast<long>(pool.size()), threads, [&](long idx) {
    const EncodedFunction& enc = pool[static_cast<std::size_t>(idx)];
    Partial& out = partials[static_cast<std::size_t>(idx)];
    Rng rng(derive_seed(seed, fnv1a64(enc.function_id)));
    MaskedView mv = mlm_mask(enc, rng, vocab, options);
    MatX<S> x = embed(mv.view, p, use_knowledge);
    MatX<S> ctx = encode_sequence(x, mv.view.attention_mask, p);

    for (std::size_t i = 0; i < mv.plan.positions.size(); ++i) {
      const int target = mv.targets[i];
      if (target < kTokenDataStart) {
        ++out.skipped;
        continue;
      }
      MatX<S> row = ctx.row(mv.plan.positions[i]);
      MatX<S> logits = head_logits(row, p, Head::Mlm);
      auto data = logits.row(0).tail(vocab - kTokenDataStart).array();
      const S max = data.maxCoeff();
      const S z = (data - max).exp().sum();
      double prob = static_cast<double>(
          std::exp(data(target - kTokenDataStart) - max) / z);
      if (prob < kProbFloor) {
        prob = kProbFloor;
        ++out.clamped;
      }
      out.log2_sum += std::log2(prob);
      ++out.predicted;
    }
  });

  PplReport report;
  double log2_sum = 0.0;
  for (const Partial& part : partials) {
    log2_sum += part.log2_sum;
    report.predicted += part.predicted;
    report.skipped_special += part.skipped;
    report.clamped += part.clamped;
  }
  if (report.predicted == 0) {
    throw ConfigError("perplexity undefined: no masked position had a data-token target");
  }
  report.ppl = std::exp2(-log2_sum / static_cast<double>(report.predicted));
  return report;
}

/// Mean of per-function losses under eval conditions (no dropout).
template <class S>
LossReport mean_eval_loss(const std::vector<EncodedFunction>& pool,
                          const Parameters<S>& p, std::uint64_t seed,
                          const LossSwitches& switches, const MaskingOptions& options) {
  if (pool.empty()) throw ConfigError("cannot evaluate loss on an empty pool");
  LossReport sum;
  for (const EncodedFunction& enc : pool) {
    const std::uint64_t seq_seed = derive_seed(seed, fnv1a64(enc.function_id));
    LossReport r = total_loss(enc, p, seq_seed, switches, options, /*train_mode=*/false);
    sum.mlm += r.mlm;
    sum.ki += r.ki;
    sum.total += r.total;
    sum.mlm_positions += r.mlm_positions;
    sum.ki_positions += r.ki_positions;
  }
  const double inv = 1.0 / static_cast<double>(pool.size());
  sum.mlm *= inv;
  sum.ki *= inv;
  sum.total *= inv;
  return sum;
}

// ---------------------------------------------------------------------------
// Outlier detection.

/// Cosine similarity; zero-norm vectors compare as 0.
double cosine(const VecX<double>& a, const VecX<double>& b);

/// Index whose leave-one-out mean cosine to the rest is smallest; ties go
/// to the lowest index.
int detect_outlier(const std::vector<VecX<double>>& embeddings);

struct OutlierGroup {
  std::array<int, 5> members{};  // indices into an instruction inventory
  int outlier = 0;               // position 0..4 inside `members`
};

/// Draws groups of five: four members of one class plus one of another,
/// outlier slot randomized. Classes need at least 4 members to act as the
/// inlier class; throws ConfigError if fewer than two usable classes.
std::vector<OutlierGroup> build_outlier_groups(const std::vector<std::string>& classes,
                                               int n_groups, Rng& rng);

/// Contextual embedding of one instruction encoded on its own.
template <class S>
VecX<double> standalone_instruction_embedding(const NormalizedInstruction& ins,
                                              const VocabSet& vocabs,
                                              const Parameters<S>& p,
                                              bool use_knowledge) {
  const int len = static_cast<int>(ins.size()) + 2;
  if (len > p.config.max_len) {
    throw ConfigError("instruction does not fit in max_len for standalone encoding");
  }
  EncodedFunction enc = encode_function({ins}, vocabs, len);
  MatX<S> x = embed(enc, p, use_knowledge);
  MatX<S> ctx = encode_sequence(x, enc.attention_mask, p);
  VecX<S> e = instruction_embedding(ctx, enc.instruction_spans[0]);
  return e.template cast<double>();
}

struct OutlierReport {
  double accuracy = 0.0;
  long groups = 0;
  long correct = 0;
};

/// Accuracy of detect_outlier over groups, given one embedding per
/// inventory entry.
OutlierReport outlier_accuracy(const std::vector<OutlierGroup>& groups,
                               const std::vector<VecX<double>>& embeddings);

// ---------------------------------------------------------------------------
// Retrieval.

/// Pessimistic rank of the ground-truth candidate: 1 plus the number of
/// other candidates scoring greater than or equal to it.
int retrieval_rank(const VecX<double>& query, const std::vector<VecX<double>>& candidates,
                   int ground_truth);

double mean_reciprocal_rank(const std::vector<int>& ranks);
double recall_at_k(const std::vector<int>& ranks, int k);

// ---------------------------------------------------------------------------
// Ablation over the two knowledge switches.

struct AblationRow {
  char setting = 'A';
  bool explicit_knowledge = false;
  bool implicit_knowledge = false;
  double eval_mlm = 0.0;
  double eval_ki = 0.0;
  double eval_total = 0.0;  // the setting's own training objective on eval data
};

/// Trains one model per switch combination from the same initialization
/// seed and evaluates each on the test pool. eval_mlm is the common
/// comparable column: the token-masking loss under each model's own
/// embedding mode.
template <class S>
std::vector<AblationRow> run_ablation(const std::vector<EncodedFunction>& train_pool,
                                      const std::vector<EncodedFunction>& test_pool,
                                      const ModelConfig& mcfg, TrainConfig tcfg,
                                      const std::array<std::uint64_t, kNumChannels>& digests,
                                      const std::string& work_dir,
                                      std::uint64_t eval_seed) {
  static const struct {
    char name;
    bool explicit_k, implicit_k;
  } kSettings[] = {
      {'A', false, false}, {'B', true, false}, {'C', false, true}, {'D', true, true}};

  std::vector<AblationRow> rows;
  for (const auto& s : kSettings) {
    tcfg.switches.explicit_knowledge = s.explicit_k;
    tcfg.switches.implicit_knowledge = s.implicit_k;

    Parameters<S> params = init_params<S>(mcfg);
    AdamWState<S> opt(mcfg);
    const std::string dir = work_dir + "/setting-" + s.name;
    train(train_pool, params, opt, tcfg, digests, dir);

    AblationRow row;
    row.setting = s.name;
    row.explicit_knowledge = s.explicit_k;
    row.implicit_knowledge = s.implicit_k;
    LossSwitches eval_switches;
    eval_switches.explicit_knowledge = s.explicit_k;
    eval_switches.implicit_knowledge = true;  // report the KI column for every setting
    LossReport r = mean_eval_loss(test_pool, params, eval_seed, eval_switches, tcfg.masking);
    row.eval_mlm = r.mlm;
    row.eval_ki = r.ki;
    row.eval_total = s.implicit_k ? r.mlm + r.ki : r.mlm;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Embedding export.

/// JSONL rows {"id", "label", "vector"}.
void export_embeddings(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<std::string>& labels,
                       const std::vector<VecX<double>>& vectors);

/// Function-level embeddings for a pool, honoring the configured pooling.
template <class S>
std::vector<VecX<double>> function_embeddings(const std::vector<EncodedFunction>& pool,
                                              const Parameters<S>& p, bool use_knowledge,
                                              int threads = 1) {
  std::vector<VecX<double>> out(pool.size());
  parallel_for_ordered(static_cast<long>(pool.size()), threads, [&](long i) {
    const EncodedFunction& enc = pool[static_cast<std::size_t>(i)];
    MatX<S> x = embed(enc, p, use_knowledge);
    MatX<S> ctx = encode_sequence(x, enc.attention_mask, p);
    VecX<S> e = function_embedding(ctx, enc, p.config.pooling);
    out[static_cast<std::size_t>(i)] = e.template cast<double>();
  });
  return out;
}

}  // namespace ktrans
