#include "ktrans/encode.hpp"

#include <fstream>

#include "ktrans/errors.hpp"

namespace ktrans {

int EncodedFunction::real_length() const {
  int n = 0;
  for (std::uint8_t m : attention_mask) n += m;
  return n;
}

std::vector<int>& EncodedFunction::channel_ids(Channel c) {
  switch (c) {
    case Channel::Token: return token_ids;
    case Channel::InstrType: return instr_type_ids;
    case Channel::OpndType: return opnd_type_ids;
    case Channel::OpndRw: return opnd_rw_ids;
    case Channel::Flags: return flags_ids;
  }
  return token_ids;
}

const std::vector<int>& EncodedFunction::channel_ids(Channel c) const {
  return const_cast<EncodedFunction*>(this)->channel_ids(c);
}

EncodedFunction encode_function(const std::vector<NormalizedInstruction>& instrs,
                                const VocabSet& vocabs, int max_len,
                                const std::string& function_id) {
  if (max_len < 3) {
    throw ConfigError("max_len must be at least 3 ([CLS], one token, [SEP]); got " +
                      std::to_string(max_len));
  }
  if (instrs.empty()) throw ConfigError("cannot encode an empty function");

  int budget = max_len - 2;
  std::size_t kept = 0;
  int used = 0;
  while (kept < instrs.size() &&
         used + static_cast<int>(instrs[kept].size()) <= budget) {
    used += static_cast<int>(instrs[kept].size());
    ++kept;
  }
  if (kept == 0) {
    throw ConfigError("function empty after truncation: first instruction has " +
                      std::to_string(instrs[0].size()) + " tokens but only " +
                      std::to_string(budget) + " fit");
  }

  EncodedFunction enc;
  enc.function_id = function_id;
  auto push_special = [&](int id) {
    enc.token_ids.push_back(id);
    enc.instr_type_ids.push_back(id);
    enc.opnd_type_ids.push_back(id);
    enc.opnd_rw_ids.push_back(id);
    enc.flags_ids.push_back(id);
  };

  push_special(kClsId);
  for (std::size_t i = 0; i < kept; ++i) {
    const NormalizedInstruction& ins = instrs[i];
    int first = enc.length();
    for (std::size_t j = 0; j < ins.size(); ++j) {
      enc.token_ids.push_back(vocabs[Channel::Token].id_or_unk(ins.tokens[j]));
      enc.instr_type_ids.push_back(vocabs[Channel::InstrType].id_or_unk(ins.instr_type[j]));
      enc.opnd_type_ids.push_back(vocabs[Channel::OpndType].id_or_unk(ins.opnd_type[j]));
      enc.opnd_rw_ids.push_back(vocabs[Channel::OpndRw].id_or_unk(ins.opnd_rw[j]));
      enc.flags_ids.push_back(vocabs[Channel::Flags].id_or_unk(ins.flags[j]));
    }
    enc.instruction_spans.emplace_back(first, enc.length() - 1);
  }
  push_special(kSepId);

  int real = enc.length();
  enc.attention_mask.assign(static_cast<std::size_t>(real), 1);
  while (enc.length() < max_len) {
    push_special(kPadId);
    enc.attention_mask.push_back(0);
  }
  enc.positions.resize(static_cast<std::size_t>(max_len));
  for (int i = 0; i < max_len; ++i) enc.positions[static_cast<std::size_t>(i)] = i;
  return enc;
}

nlohmann::json encoded_to_json(const EncodedFunction& enc) {
  nlohmann::json j;
  j["function_id"] = enc.function_id;
  j["token_ids"] = enc.token_ids;
  j["instr_type_ids"] = enc.instr_type_ids;
  j["opnd_type_ids"] = enc.opnd_type_ids;
  j["opnd_rw_ids"] = enc.opnd_rw_ids;
  j["flags_ids"] = enc.flags_ids;
  j["positions"] = enc.positions;
  nlohmann::json spans = nlohmann::json::array();
  for (auto [a, b] : enc.instruction_spans) spans.push_back({a, b});
  j["instruction_spans"] = spans;
  std::vector<int> mask(enc.attention_mask.begin(), enc.attention_mask.end());
  j["attention_mask"] = mask;
  return j;
}

namespace {

std::vector<int> int_array(const nlohmann::json& j, const char* key,
                           const std::string& origin) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw SchemaError(origin + ": missing integer array '" + key + "'");
  }
  std::vector<int> out;
  out.reserve(j[key].size());
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) {
      throw SchemaError(origin + ": '" + std::string(key) + "' must hold integers");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

EncodedFunction encoded_from_json(const nlohmann::json& j, const std::string& origin) {
  if (!j.is_object()) throw SchemaError(origin + ": encoded record must be an object");
  EncodedFunction enc;
  if (!j.contains("function_id") || !j["function_id"].is_string()) {
    throw SchemaError(origin + ": missing string 'function_id'");
  }
  enc.function_id = j["function_id"].get<std::string>();
  enc.token_ids = int_array(j, "token_ids", origin);
  enc.instr_type_ids = int_array(j, "instr_type_ids", origin);
  enc.opnd_type_ids = int_array(j, "opnd_type_ids", origin);
  enc.opnd_rw_ids = int_array(j, "opnd_rw_ids", origin);
  enc.flags_ids = int_array(j, "flags_ids", origin);
  enc.positions = int_array(j, "positions", origin);
  std::vector<int> mask = int_array(j, "attention_mask", origin);
  enc.attention_mask.reserve(mask.size());
  for (int m : mask) {
    if (m != 0 && m != 1) throw SchemaError(origin + ": attention_mask entries must be 0 or 1");
    enc.attention_mask.push_back(static_cast<std::uint8_t>(m));
  }
  if (!j.contains("instruction_spans") || !j["instruction_spans"].is_array()) {
    throw SchemaError(origin + ": missing array 'instruction_spans'");
  }
  for (const auto& s : j["instruction_spans"]) {
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() ||
        !s[1].is_number_integer()) {
      throw SchemaError(origin + ": instruction_spans entries must be [first, last] pairs");
    }
    enc.instruction_spans.emplace_back(s[0].get<int>(), s[1].get<int>());
  }

  std::size_t n = enc.token_ids.size();
  if (enc.instr_type_ids.size() != n || enc.opnd_type_ids.size() != n ||
      enc.opnd_rw_ids.size() != n || enc.flags_ids.size() != n ||
      enc.positions.size() != n || enc.attention_mask.size() != n) {
    throw SchemaError(origin + ": channel sequences have mismatched lengths");
  }
  for (auto [a, b] : enc.instruction_spans) {
    if (a < 1 || b < a || b >= static_cast<int>(n)) {
      throw SchemaError(origin + ": instruction span [" + std::to_string(a) + ", " +
                        std::to_string(b) + "] out of range");
    }
  }
  return enc;
}

void save_encoded(const std::vector<EncodedFunction>& funcs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open encoded corpus for writing: " + path);
  for (const EncodedFunction& f : funcs) out << encoded_to_json(f).dump() << '\n';
  if (!out) throw IoError("failed writing encoded corpus: " + path);
}

std::vector<EncodedFunction> load_encoded(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open encoded corpus: " + path);
  std::vector<EncodedFunction> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string origin = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(origin + ": invalid JSON: " + e.what());
    }
    out.push_back(encoded_from_json(j, origin));
  }
  return out;
}

}  // namespace ktrans
