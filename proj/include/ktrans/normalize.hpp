#pragma once

#include <string>
#include <vector>

#include "ktrans/isa.hpp"

namespace ktrans {

// Normalization rewrites annotated instructions into the token form the
// model consumes: mnemonic plus one token per operand, constants replaced
// by "const", commas and intra-operand whitespace removed.

/// One instruction as aligned token / tag sequences. All five lists have
/// identical length; tags not applicable at a position hold "[NONE]".
struct NormalizedInstruction {
  std::vector<std::string> tokens;
  std::vector<std::string> instr_type;
  std::vector<std::string> opnd_type;
  std::vector<std::string> opnd_rw;
  std::vector<std::string> flags;

  std::size_t size() const { return tokens.size(); }
};

struct NormalizeOptions {
  // When set, operand positions carry their instruction's type and flags
  // tags; otherwise those channels hold [NONE] outside the mnemonic.
  bool propagate_instruction_tags = true;
};

/// Replaces every numeric literal (hex or decimal) in an operand string
/// with the token "const". Register names like r8 or xmm12 are untouched.
std::string replace_constants(const std::string& text);

/// True if the string still contains a bare numeric literal.
bool contains_numeric_literal(const std::string& text);

/// Total function: never fails on a well-formed AnnotatedInstruction.
NormalizedInstruction normalize(const AnnotatedInstruction& instr,
                                const NormalizeOptions& options = {});

}  // namespace ktrans
