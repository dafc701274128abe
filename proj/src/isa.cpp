#include "ktrans/isa.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ktrans/errors.hpp"

namespace ktrans {

namespace {

using nlohmann::json;

const std::array<const char*, kNumStatusFlags> kFlagNames = {
    "CF", "PF", "AF", "ZF", "SF", "TF", "OF", "DF"};

const std::array<const char*, 7> kActionNames = {
    "NONE", "TEST", "MODIFY", "RESET", "SET", "UNDEFINED", "PRIOR"};

constexpr std::array<char, 7> kActionChars = {'-', 'T', 'M', '0', '1', 'U', 'P'};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// x86-64 general, segment, flag-free SIMD and legacy register names.
const std::unordered_set<std::string>& register_names() {
  static const std::unordered_set<std::string> names = [] {
    std::unordered_set<std::string> r;
    const char* base[] = {"rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp",
                          "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp",
                          "ax",  "bx",  "cx",  "dx",  "si",  "di",  "bp",  "sp",
                          "al",  "bl",  "cl",  "dl",  "ah",  "bh",  "ch",  "dh",
                          "sil", "dil", "bpl", "spl", "rip", "eip",
                          "cs",  "ds",  "es",  "fs",  "gs",  "ss"};
    for (const char* n : base) r.insert(n);
    for (int i = 8; i <= 15; ++i) {
      const std::string rn = "r" + std::to_string(i);
      r.insert(rn);
      r.insert(rn + "d");
      r.insert(rn + "w");
      r.insert(rn + "b");
    }
    for (int i = 0; i <= 15; ++i) {
      r.insert("xmm" + std::to_string(i));
      r.insert("ymm" + std::to_string(i));
      r.insert("st" + std::to_string(i));
    }
    return r;
  }();
  return names;
}

FlagAction parse_action(const std::string& name, const std::string& where) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i) {
    if (name == kActionNames[i]) return static_cast<FlagAction>(i);
  }
  throw SchemaError("isa table: unknown flag action '" + name + "' in " + where);
}

int flag_index(const std::string& name, const std::string& where) {
  for (int i = 0; i < kNumStatusFlags; ++i) {
    if (name == kFlagNames[static_cast<std::size_t>(i)]) return i;
  }
  throw SchemaError("isa table: unknown flag '" + name + "' in " + where);
}

OperandKind parse_template_kind(const std::string& name, const std::string& where) {
  if (name == "REG") return OperandKind::Reg;
  if (name == "IMM") return OperandKind::Imm;
  if (name == "MEM") return OperandKind::Mem;
  if (name == "ANY") return OperandKind::Unknown;
  throw SchemaError("isa table: unknown operand kind '" + name + "' in " + where);
}

AccessMode parse_access(const std::string& name, const std::string& where) {
  if (name == "READ") return AccessMode::Read;
  if (name == "WRITE") return AccessMode::Write;
  if (name == "READWRITE") return AccessMode::ReadWrite;
  throw SchemaError("isa table: unknown access mode '" + name + "' in " + where);
}

// nlohmann silently keeps the last value for repeated keys, so duplicates are
// caught during a callback parse before the document is materialized.
void check_duplicate_keys(const std::string& text, const std::string& origin) {
  std::vector<std::set<std::string>> stack;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event,
                                   json& parsed) -> bool {
    switch (event) {
      case json::parse_event_t::object_start:
        stack.emplace_back();
        break;
      case json::parse_event_t::object_end:
        stack.pop_back();
        break;
      case json::parse_event_t::key: {
        const std::string key = parsed.get<std::string>();
        if (!stack.back().insert(key).second) {
          throw SchemaError(origin + ": duplicate key '" + key + "'");
        }
        break;
      }
      default:
        break;
    }
    return true;
  };
  const json reparsed = json::parse(text, cb);
  (void)reparsed;
}

}  // namespace

const char* flag_name(StatusFlag f) { return kFlagNames[static_cast<std::size_t>(f)]; }

const char* flag_action_name(FlagAction a) { return kActionNames[static_cast<std::size_t>(a)]; }

std::string flags_signature(const FlagsEffect& effect) {
  std::string sig(kNumStatusFlags, '-');
  for (int i = 0; i < kNumStatusFlags; ++i) {
    sig[static_cast<std::size_t>(i)] =
        kActionChars[static_cast<std::size_t>(effect.actions[static_cast<std::size_t>(i)])];
  }
  return sig;
}

const char* operand_kind_name(OperandKind k) {
  switch (k) {
    case OperandKind::Reg: return "REG";
    case OperandKind::Imm: return "IMM";
    case OperandKind::Mem: return "MEM";
    case OperandKind::Unknown: return "[UNK]";
  }
  return "[UNK]";
}

const char* access_mode_name(AccessMode m) {
  switch (m) {
    case AccessMode::Read: return "READ";
    case AccessMode::Write: return "WRITE";
    case AccessMode::ReadWrite: return "READWRITE";
    case AccessMode::Unknown: return "[UNK]";
  }
  return "[UNK]";
}

const IsaEntry* IsaTable::find(std::string_view mnemonic) const {
  auto it = entries.find(std::string(mnemonic));
  return it == entries.end() ? nullptr : &it->second;
}

IsaTable parse_isa_table(const std::string& text, const std::string& origin) {
  check_duplicate_keys(text, origin);

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(origin + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw SchemaError(origin + ": top level must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "version" && key != "mnemonics") {
      throw SchemaError(origin + ": unknown top-level key '" + key + "'");
    }
  }
  if (!doc.contains("version") || !doc["version"].is_string()) {
    throw SchemaError(origin + ": missing string field 'version'");
  }
  if (!doc.contains("mnemonics") || !doc["mnemonics"].is_object()) {
    throw SchemaError(origin + ": missing object field 'mnemonics'");
  }

  IsaTable table;
  table.version = doc["version"].get<std::string>();

  std::unordered_set<std::string> seen_type_ids;
  for (const auto& [name, body] : doc["mnemonics"].items()) {
    const std::string where = "mnemonic '" + name + "'";
    if (!body.is_object()) throw SchemaError(origin + ": " + where + " must be an object");
    for (const auto& [key, _] : body.items()) {
      if (key != "type_id" && key != "operands" && key != "flags" && key != "dest_writes") {
        throw SchemaError(origin + ": " + where + ": unknown key '" + key + "'");
      }
    }
    IsaEntry entry;
    if (!body.contains("type_id") || !body["type_id"].is_string()) {
      throw SchemaError(origin + ": " + where + ": missing string field 'type_id'");
    }
    entry.type_id = body["type_id"].get<std::string>();
    if (body.contains("operands")) {
      if (!body["operands"].is_array()) {
        throw SchemaError(origin + ": " + where + ": 'operands' must be an array");
      }
      for (const auto& op : body["operands"]) {
        if (!op.is_array() || op.size() != 2 || !op[0].is_string() || !op[1].is_string()) {
          throw SchemaError(origin + ": " + where + ": operand template must be [kind, access]");
        }
        OperandTemplate tmpl;
        tmpl.kind = parse_template_kind(op[0].get<std::string>(), where);
        tmpl.access = parse_access(op[1].get<std::string>(), where);
        entry.operands.push_back(tmpl);
      }
    }
    if (body.contains("flags")) {
      if (!body["flags"].is_object()) {
        throw SchemaError(origin + ": " + where + ": 'flags' must be an object");
      }
      for (const auto& [flag, action] : body["flags"].items()) {
        if (!action.is_string()) {
          throw SchemaError(origin + ": " + where + ": flag action must be a string");
        }
        entry.flags.actions[static_cast<std::size_t>(flag_index(flag, where))] =
            parse_action(action.get<std::string>(), where);
      }
    }
    if (body.contains("dest_writes")) {
      if (!body["dest_writes"].is_boolean()) {
        throw SchemaError(origin + ": " + where + ": 'dest_writes' must be a boolean");
      }
      entry.dest_writes = body["dest_writes"].get<bool>();
    }
    if (!seen_type_ids.insert(entry.type_id).second) {
      throw SchemaError(origin + ": " + where + ": type_id '" + entry.type_id +
                        "' already used by another mnemonic");
    }
    if (!table.entries.emplace(name, std::move(entry)).second) {
      throw SchemaError(origin + ": duplicate mnemonic '" + name + "'");
    }
  }
  return table;
}

IsaTable load_isa_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open isa table file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_isa_table(buf.str(), path);
}

ParsedInstruction parse_instruction(std::string_view text) {
  const std::string_view trimmed = trim(text);
  if (trimmed.empty()) {
    throw ParseError("empty instruction at column 0");
  }

  ParsedInstruction out;
  out.raw_text = std::string(trimmed);

  std::size_t pos = 0;
  auto take_word = [&]() {
    const std::size_t start = pos;
    while (pos < trimmed.size() && !std::isspace(static_cast<unsigned char>(trimmed[pos]))) ++pos;
    return lower(trimmed.substr(start, pos - start));
  };
  auto skip_space = [&]() {
    while (pos < trimmed.size() && std::isspace(static_cast<unsigned char>(trimmed[pos]))) ++pos;
  };

  std::string word = take_word();
  static const std::unordered_set<std::string> kPrefixes = {
      "rep", "repe", "repz", "repne", "repnz", "lock"};
  if (kPrefixes.count(word) && pos < trimmed.size()) {
    skip_space();
    if (pos < trimmed.size()) {
      word += " " + take_word();
    }
  }
  out.mnemonic = word;
  skip_space();

  // Operands: split the remainder on commas at bracket depth 0.
  if (pos < trimmed.size()) {
    int depth = 0;
    std::size_t start = pos;
    for (std::size_t i = pos; i <= trimmed.size(); ++i) {
      const char c = i == trimmed.size() ? ',' : trimmed[i];
      if (c == '[') {
        ++depth;
      } else if (c == ']') {
        if (--depth < 0) throw ParseError("unbalanced ']' at column " + std::to_string(i));
      } else if (c == ',' && depth == 0) {
        const std::string_view piece = trim(trimmed.substr(start, i - start));
        if (piece.empty()) throw ParseError("empty operand at column " + std::to_string(start));
        out.operand_texts.emplace_back(piece);
        start = i + 1;
      }
    }
    if (depth != 0) throw ParseError("unbalanced '[' at column " + std::to_string(trimmed.size()));
  }
  return out;
}

bool is_register_name(std::string_view token) {
  return register_names().count(lower(token)) > 0;
}

OperandKind classify_operand(std::string_view operand) {
  const std::string_view t = trim(operand);
  if (t.find('[') != std::string_view::npos) return OperandKind::Mem;
  if (is_register_name(t)) return OperandKind::Reg;
  return OperandKind::Imm;
}

AnnotatedInstruction annotate(const ParsedInstruction& parsed, const IsaTable& table) {
  AnnotatedInstruction out;
  out.parsed = parsed;
  out.operands.resize(parsed.operand_texts.size());
  for (std::size_t i = 0; i < parsed.operand_texts.size(); ++i) {
    out.operands[i].text = parsed.operand_texts[i];
  }

  const IsaEntry* entry = table.find(parsed.mnemonic);
  if (entry == nullptr) {
    out.instruction_type = "[UNK]";
    out.flags = "[UNK]";
    for (auto& op : out.operands) {
      op.kind = OperandKind::Unknown;
      op.access = AccessMode::Unknown;
    }
    return out;
  }

  out.instruction_type = entry->type_id;
  out.flags = flags_signature(entry->flags);
  for (std::size_t i = 0; i < out.operands.size(); ++i) {
    out.operands[i].kind = classify_operand(out.operands[i].text);
    if (i < entry->operands.size()) {
      out.operands[i].access = entry->operands[i].access;
    } else if (i == 0) {
      out.operands[i].access = entry->dest_writes ? AccessMode::Write : AccessMode::ReadWrite;
    } else {
      out.operands[i].access = AccessMode::Read;
    }
  }
  return out;
}

}  // namespace ktrans
