#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ktrans/checkpoint.hpp"
#include "ktrans/corpus.hpp"
#include "ktrans/losses.hpp"

namespace ktrans {

// Pre-training loop: shuffled mini-batches, gradient averaging over the
// batch, AdamW with decoupled weight decay, linear warmup then linear
// decay, CSV metrics, and checkpoints in the binary format above.

struct TrainConfig {
  double lr = 3e-5;
  double warmup_ratio = 0.01;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;  // extra saves every N steps; final save always happens
  LossSwitches switches;
  MaskingOptions masking;

  void validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(lr > 0.0, "learning rate must be positive");
    require(warmup_ratio >= 0.0 && warmup_ratio < 1.0, "warmup_ratio must lie in [0, 1)");
    require(weight_decay >= 0.0, "weight_decay must be non-negative");
    require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
    require(eps > 0.0, "epsilon must be positive");
    require(epochs >= 1, "epochs must be at least 1");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(masking.mlm_rate > 0.0 && masking.mlm_rate <= 1.0,
            "mlm masking rate must lie in (0, 1]");
    require(masking.ki_rate > 0.0 && masking.ki_rate <= 1.0,
            "ki masking rate must lie in (0, 1]");
  }
};

/// Linear warmup to base_lr over W = round(warmup_ratio * total) steps
/// (at least 1), then linear decay to zero at step == total. Step counts
/// from 1 for the first update; lr_at(0, ...) is 0.
inline double lr_at(double base_lr, double warmup_ratio, long step, long total_steps) {
  if (total_steps < 1) throw ConfigError("total_steps must be at least 1");
  const long warmup =
      std::max<long>(1, round_half_up(warmup_ratio * static_cast<double>(total_steps)));
  if (step <= 0) return 0.0;
  if (step <= warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return 0.0;
  return base_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

template <class S>
struct AdamWState {
  Parameters<S> m, v;
  long t = 0;

  AdamWState() = default;
  explicit AdamWState(const ModelConfig& cfg) : m(cfg), v(cfg) {}
};

/// One decoupled-weight-decay Adam update. Decay touches Weight tensors
/// only (embeddings and projections), never biases or layer-norm terms,
/// and uses the pre-update value.
template <class S>
void adamw_step(Parameters<S>& params, const Parameters<S>& grads, AdamWState<S>& st,
                double lr, const TrainConfig& cfg) {
  ++st.t;
  const S bc1 = S(1.0 - std::pow(cfg.beta1, static_cast<double>(st.t)));
  const S bc2 = S(1.0 - std::pow(cfg.beta2, static_cast<double>(st.t)));
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  const S step_size = S(lr), eps = S(cfg.eps);
  const S decay = S(lr * cfg.weight_decay);

  auto pr = tensor_refs(params);
  auto gr = tensor_refs(grads);
  auto mr = tensor_refs(st.m);
  auto vr = tensor_refs(st.v);
  for (std::size_t i = 0; i < pr.size(); ++i) {
    MatX<S>& w = *pr[i].tensor;
    const MatX<S>& g = *gr[i].tensor;
    MatX<S>& m = *mr[i].tensor;
    MatX<S>& v = *vr[i].tensor;
    m = b1 * m + (S(1) - b1) * g;
    v = (b2 * v.array() + (S(1) - b2) * g.array().square()).matrix();
    auto update = (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    if (pr[i].kind == TensorKind::Weight && cfg.weight_decay > 0.0) {
      w = (w.array() * (S(1) - decay) - step_size * update).matrix();
    } else {
      w = (w.array() - step_size * update).matrix();
    }
  }
}

inline constexpr char kOptMagic[5] = {'K', 'T', 'O', 'P', '1'};

template <class S>
void save_opt_state(const std::string& path, const AdamWState<S>& st) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open optimizer state for writing: " + path);
  nlohmann::json header;
  header["step"] = st.t;
  detail::write_header(out, kOptMagic, header);
  detail::write_tensor_data(out, st.m);
  detail::write_tensor_data(out, st.v);
  if (!out) throw IoError("failed writing optimizer state: " + path);
}

template <class S>
AdamWState<S> load_opt_state(const std::string& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open optimizer state: " + path);
  nlohmann::json header = detail::read_header(in, kOptMagic, path);
  if (!header.contains("step")) throw SchemaError(path + ": optimizer header needs step");
  AdamWState<S> st(cfg);
  st.t = header["step"].get<long>();
  detail::read_tensor_data(in, st.m, path);
  detail::read_tensor_data(in, st.v, path);
  detail::require_eof(in, path);
  return st;
}

struct TrainResult {
  long steps = 0;
  double final_mlm = 0.0;
  double final_ki = 0.0;
  double final_total = 0.0;
  std::string metrics_path;
  std::string checkpoint_path;
};

/// Runs cfg.epochs over the pool. start_step > 0 resumes: the metrics
/// file is appended and the step counter and batch-order epochs carry on
/// from where the previous run stopped. On non-finite loss the current
/// parameters are written to a diagnostic checkpoint and NumericError is
/// rethrown naming it.
template <class S>
TrainResult train(const std::vector<EncodedFunction>& pool, Parameters<S>& params,
                  AdamWState<S>& opt, const TrainConfig& cfg,
                  const std::array<std::uint64_t, kNumChannels>& vocab_digests,
                  const std::string& out_dir, long start_step = 0) {
  cfg.validate();
  if (pool.empty()) throw ConfigError("cannot train on an empty pool");

  const long batches_per_epoch =
      static_cast<long>((pool.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                        static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = start_step + static_cast<long>(cfg.epochs) * batches_per_epoch;
  const long epoch_base = batches_per_epoch > 0 ? start_step / batches_per_epoch : 0;

  TrainResult result;
  std::filesystem::create_directories(out_dir);
  result.metrics_path = out_dir + "/metrics.csv";
  result.checkpoint_path = out_dir + "/model.ktrn";

  std::ofstream metrics(result.metrics_path,
                        start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot open metrics file: " + result.metrics_path);
  if (start_step == 0) {
    metrics << "step,lr,mlm_loss,ki_loss,total_loss,tokens_masked,wall_ms\n";
  }

  long step = start_step;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    BatchStream stream(pool, cfg.batch_size, cfg.seed,
                       static_cast<int>(epoch_base) + epoch);
    while (auto batch = stream.next()) {
      const auto t0 = std::chrono::steady_clock::now();
      Parameters<S> grads = zeros_like(params);
      double mlm_sum = 0.0, ki_sum = 0.0, total_sum = 0.0;
      long tokens_masked = 0;
      const double inv_b = 1.0 / static_cast<double>(batch->items.size());

      try {
        for (const EncodedFunction* enc : batch->items) {
          const std::uint64_t seq_seed =
              derive_seed(cfg.seed, fnv1a64(enc->function_id),
                          static_cast<std::uint64_t>(epoch_base + epoch));
          LossReport r = total_loss(*enc, params, seq_seed, cfg.switches, cfg.masking,
                                    /*train_mode=*/true, &grads, inv_b);
          if (!std::isfinite(r.total)) {
            throw NumericError("non-finite loss at step " + std::to_string(step + 1));
          }
          mlm_sum += r.mlm;
          ki_sum += r.ki;
          total_sum += r.total;
          tokens_masked += r.mlm_positions + r.ki_positions;
        }
      } catch (const NumericError& e) {
        const std::string diag =
            out_dir + "/diagnostic-step" + std::to_string(step + 1) + ".ktrn";
        save_checkpoint(diag, params, vocab_digests, step);
        throw NumericError(std::string(e.what()) +
                               "; parameters saved to " + diag,
                           e.layer_index);
      }

      ++step;
      const double lr = lr_at(cfg.lr, cfg.warmup_ratio, step, total_steps);
      adamw_step(params, grads, opt, lr, cfg);

      const auto t1 = std::chrono::steady_clock::now();
      const long wall_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();

      std::ostringstream row;
      row << step << ',';
      row.setf(std::ios::fmtflags(0), std::ios::floatfield);
      row.precision(10);
      row << lr << ',';
      row.precision(8);
      row << mlm_sum * inv_b << ',' << ki_sum * inv_b << ',' << total_sum * inv_b << ','
          << tokens_masked << ',' << wall_ms << '\n';
      metrics << row.str();
      metrics.flush();

      result.final_mlm = mlm_sum * inv_b;
      result.final_ki = ki_sum * inv_b;
      result.final_total = total_sum * inv_b;

      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
        save_checkpoint(result.checkpoint_path, params, vocab_digests, step);
        save_opt_state(out_dir + "/model.opt", opt);
      }
    }
  }

  result.steps = step;
  save_checkpoint(result.checkpoint_path, params, vocab_digests, step);
  save_opt_state(out_dir + "/model.opt", opt);
  return result;
}

}  // namespace ktrans
