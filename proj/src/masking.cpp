#include "ktrans/masking.hpp"

#include <algorithm>

#include "ktrans/errors.hpp"

namespace ktrans {

namespace {

std::vector<int> maskable_positions(const EncodedFunction& enc) {
  std::vector<int> out;
  for (auto [a, b] : enc.instruction_spans) {
    for (int i = a; i <= b; ++i) out.push_back(i);
  }
  return out;
}

int mask_count(double rate, int n) {
  return std::max(1, std::min(n, round_half_up(rate * n)));
}

void mask_knowledge_at(EncodedFunction& view, int pos) {
  const std::size_t i = static_cast<std::size_t>(pos);
  view.instr_type_ids[i] = kMaskId;
  view.opnd_type_ids[i] = kMaskId;
  view.opnd_rw_ids[i] = kMaskId;
  view.flags_ids[i] = kMaskId;
}

}  // namespace

MaskedView mlm_mask(const EncodedFunction& enc, Rng& rng, int token_vocab_size,
                    const MaskingOptions& options) {
  std::vector<int> maskable = maskable_positions(enc);
  if (maskable.empty()) {
    throw ConfigError("cannot mask a function without instruction spans");
  }
  if (token_vocab_size <= kTokenDataStart) {
    throw ConfigError("token vocab has no data tokens to draw random replacements from");
  }

  const int k = mask_count(options.mlm_rate, static_cast<int>(maskable.size()));
  std::vector<int> picks =
      rng.sample_without_replacement(static_cast<int>(maskable.size()), k);
  std::vector<int> positions;
  positions.reserve(picks.size());
  for (int idx : picks) positions.push_back(maskable[static_cast<std::size_t>(idx)]);
  std::sort(positions.begin(), positions.end());

  MaskedView out;
  out.view = enc;
  out.plan.kind = MaskKind::Mlm;
  out.plan.positions = positions;
  for (int pos : positions) {
    const std::size_t i = static_cast<std::size_t>(pos);
    out.targets.push_back(enc.token_ids[i]);
    const double u = rng.uniform_real();
    Corruption corr;
    if (u < 0.8) {
      corr = Corruption::Mask;
      out.view.token_ids[i] = kMaskId;
    } else if (u < 0.9) {
      corr = Corruption::Random;
      out.view.token_ids[i] =
          kTokenDataStart +
          static_cast<int>(rng.uniform(
              static_cast<std::uint64_t>(token_vocab_size - kTokenDataStart)));
    } else {
      corr = Corruption::Keep;
    }
    if (corr != Corruption::Keep && options.mask_knowledge_with_token) {
      mask_knowledge_at(out.view, pos);
    }
    out.plan.corruption.push_back(corr);
  }
  return out;
}

MaskedView ki_mask(const EncodedFunction& enc, Rng& rng,
                   const MaskingOptions& options) {
  const int n_spans = static_cast<int>(enc.instruction_spans.size());
  if (n_spans == 0) {
    throw ConfigError("cannot mask a function without instruction spans");
  }

  const int k = mask_count(options.ki_rate, n_spans);
  std::vector<int> spans = rng.sample_without_replacement(n_spans, k);
  std::sort(spans.begin(), spans.end());

  MaskedView out;
  out.view = enc;
  out.plan.kind = MaskKind::Ki;
  out.plan.spans = spans;
  for (int s : spans) {
    auto [a, b] = enc.instruction_spans[static_cast<std::size_t>(s)];
    for (int pos = a; pos <= b; ++pos) {
      const std::size_t i = static_cast<std::size_t>(pos);
      out.plan.positions.push_back(pos);
      out.plan.corruption.push_back(Corruption::Mask);
      out.targets.push_back(enc.token_ids[i]);
      out.view.token_ids[i] = kMaskId;
      mask_knowledge_at(out.view, pos);
    }
  }
  return out;
}

}  // namespace ktrans
