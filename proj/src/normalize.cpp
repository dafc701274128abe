#include "ktrans/normalize.hpp"

#include <cctype>

namespace ktrans {

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_hex_digit(char c) { return std::isxdigit(static_cast<unsigned char>(c)); }

std::string strip_whitespace(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

// Finds the numeric literal starting at `i`, or returns i if none starts
// there. A literal must not be preceded by an identifier character, so the
// digits inside register names (r8, xmm12, st0) are never matched.
std::size_t literal_end(const std::string& s, std::size_t i) {
  if (!std::isdigit(static_cast<unsigned char>(s[i]))) return i;
  if (i > 0 && is_ident_char(s[i - 1])) return i;
  std::size_t j = i;
  if (s[j] == '0' && j + 1 < s.size() && (s[j + 1] == 'x' || s[j + 1] == 'X') &&
      j + 2 < s.size() && is_hex_digit(s[j + 2])) {
    j += 2;
    while (j < s.size() && is_hex_digit(s[j])) ++j;
  } else {
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
  }
  return j;
}

}  // namespace

std::string replace_constants(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t end = literal_end(text, i);
    if (end > i) {
      out += "const";
      i = end;
    } else {
      out.push_back(text[i]);
      ++i;
    }
  }
  return out;
}

bool contains_numeric_literal(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (literal_end(text, i) > i) return true;
  }
  return false;
}

NormalizedInstruction normalize(const AnnotatedInstruction& instr,
                                const NormalizeOptions& options) {
  NormalizedInstruction out;
  std::size_t n = 1 + instr.operands.size();
  out.tokens.reserve(n);
  out.instr_type.reserve(n);
  out.opnd_type.reserve(n);
  out.opnd_rw.reserve(n);
  out.flags.reserve(n);

  out.tokens.push_back(instr.parsed.mnemonic);
  out.instr_type.push_back(instr.instruction_type);
  out.opnd_type.push_back("[NONE]");
  out.opnd_rw.push_back("[NONE]");
  out.flags.push_back(instr.flags);

  for (const AnnotatedOperand& op : instr.operands) {
    out.tokens.push_back(replace_constants(strip_whitespace(op.text)));
    out.instr_type.push_back(options.propagate_instruction_tags
                                 ? instr.instruction_type
                                 : std::string("[NONE]"));
    out.opnd_type.push_back(operand_kind_name(op.kind));
    out.opnd_rw.push_back(access_mode_name(op.access));
    out.flags.push_back(options.propagate_instruction_tags
                            ? instr.flags
                            : std::string("[NONE]"));
  }
  return out;
}

}  // namespace ktrans
