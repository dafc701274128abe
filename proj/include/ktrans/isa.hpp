#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ktrans {

// x86-64 instruction annotation against a declarative ISA table. Each
// instruction gets four explicit-knowledge tags: instruction type, operand
// type, operand read/write status and FLAGS effect signature.

inline constexpr int kNumStatusFlags = 8;

/// Status flags in canonical signature order.
enum class StatusFlag : int { CF = 0, PF, AF, ZF, SF, TF, OF, DF };

enum class FlagAction : std::uint8_t {
  None = 0,
  Test,
  Modify,
  Reset,
  Set,
  Undefined,
  Prior,
};

const char* flag_name(StatusFlag f);
const char* flag_action_name(FlagAction a);

/// Per-instruction FLAGS effect: one action per status flag.
struct FlagsEffect {
  std::array<FlagAction, kNumStatusFlags> actions{};

  bool operator==(const FlagsEffect&) const = default;
};

/// Canonical 8-character signature, one character per flag in CF PF AF ZF
/// SF TF OF DF order. Distinct effect maps yield distinct strings; the
/// all-None effect is "--------".
std::string flags_signature(const FlagsEffect& effect);

enum class OperandKind : std::uint8_t { Reg, Imm, Mem, Unknown };
enum class AccessMode : std::uint8_t { Read, Write, ReadWrite, Unknown };

const char* operand_kind_name(OperandKind k);
const char* access_mode_name(AccessMode m);

struct OperandTemplate {
  OperandKind kind = OperandKind::Unknown;  // documentation only; kind is inferred syntactically
  AccessMode access = AccessMode::Read;
};

struct IsaEntry {
  std::string type_id;
  std::vector<OperandTemplate> operands;
  FlagsEffect flags;
  // Default access for a first operand beyond the template list: true -> Write,
  // false -> ReadWrite. Later operands default to Read.
  bool dest_writes = false;
};

struct IsaTable {
  std::string version;
  std::map<std::string, IsaEntry> entries;

  const IsaEntry* find(std::string_view mnemonic) const;
};

/// Loads and validates an ISA table JSON file. Throws SchemaError naming the
/// offending entry on malformed content or duplicate mnemonics, IoError if
/// the file cannot be read.
IsaTable load_isa_table(const std::string& path);

/// Same validation, from an in-memory JSON string.
IsaTable parse_isa_table(const std::string& text, const std::string& origin);

struct ParsedInstruction {
  std::string raw_text;
  std::string mnemonic;                 // lower-cased, prefixes folded in
  std::vector<std::string> operand_texts;  // verbatim, trimmed
};

/// Parses one Intel-syntax assembly line. Throws ParseError with a column
/// position for empty lines or unbalanced operand bracketing.
ParsedInstruction parse_instruction(std::string_view text);

struct AnnotatedOperand {
  std::string text;
  OperandKind kind = OperandKind::Unknown;
  AccessMode access = AccessMode::Unknown;
};

struct AnnotatedInstruction {
  ParsedInstruction parsed;
  std::string instruction_type;  // "[UNK]" when the mnemonic is not in the table
  std::vector<AnnotatedOperand> operands;
  std::string flags;  // signature string, "[UNK]" for unknown mnemonics
};

/// Tags a parsed instruction from the table. Unknown mnemonics never fail:
/// they produce [UNK] in every channel, mirroring the [UNK] token policy.
AnnotatedInstruction annotate(const ParsedInstruction& parsed, const IsaTable& table);

/// Syntactic operand classification: bracketed -> Mem, register name -> Reg,
/// anything else (literals, addresses, symbols) -> Imm. Total over the
/// operand grammar.
OperandKind classify_operand(std::string_view operand);

bool is_register_name(std::string_view token);

}  // namespace ktrans
