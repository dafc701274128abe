#pragma once

#include <cstdint>
#include <vector>

#include "ktrans/encode.hpp"
#include "ktrans/rng.hpp"

namespace ktrans {

// Builds the two masked training views of an encoded function. Only
// instruction-span positions are ever maskable; [CLS], [SEP] and padding
// are untouched and never predicted.

enum class MaskKind { Mlm, Ki };

enum class Corruption {
  Mask,    // token id replaced by [MASK]
  Random,  // token id replaced by a random non-special token
  Keep,    // token id left as-is (still predicted)
};

struct MaskingOptions {
  double mlm_rate = 0.15;
  double ki_rate = 0.15;
  // Replace the four knowledge-channel IDs with their channel [MASK]
  // whenever the token itself was replaced. Switch off to leave the
  // knowledge context visible under token masking.
  bool mask_knowledge_with_token = true;
};

struct MaskPlan {
  MaskKind kind = MaskKind::Mlm;
  std::vector<int> positions;           // ascending token indices to predict
  std::vector<Corruption> corruption;   // parallel to positions
  std::vector<int> spans;               // ascending instruction indices (KI only)
};

struct MaskedView {
  EncodedFunction view;       // corrupted copy of the input
  MaskPlan plan;
  std::vector<int> targets;   // original token IDs, parallel to plan.positions
};

/// Token-level masking: round(rate * maskable), at least 1, positions
/// drawn without replacement; each becomes [MASK] / random / kept with
/// probability 0.8 / 0.1 / 0.1. token_vocab_size bounds the random
/// replacement draw.
MaskedView mlm_mask(const EncodedFunction& enc, Rng& rng, int token_vocab_size,
                    const MaskingOptions& options = {});

/// Instruction-level masking: round(rate * spans), at least 1, whole
/// spans; every covered position has its token and all four knowledge
/// channels replaced by [MASK]. Partial instruction masks cannot occur.
MaskedView ki_mask(const EncodedFunction& enc, Rng& rng,
                   const MaskingOptions& options = {});

}  // namespace ktrans
