#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ktrans/vocab.hpp"

namespace ktrans {

// Turns a normalized function into five aligned ID sequences padded to a
// fixed length: [CLS] tokens... [SEP] [PAD]*. Special positions carry the
// matching special ID in every channel. Truncation drops whole
// instructions from the tail, never splitting one.

struct EncodedFunction {
  std::string function_id;
  std::vector<int> token_ids;
  std::vector<int> instr_type_ids;
  std::vector<int> opnd_type_ids;
  std::vector<int> opnd_rw_ids;
  std::vector<int> flags_ids;
  std::vector<int> positions;  // 0..max_len-1
  // Inclusive [first, last] token index ranges, one per surviving
  // instruction, in order. Never covers [CLS], [SEP] or padding.
  std::vector<std::pair<int, int>> instruction_spans;
  std::vector<std::uint8_t> attention_mask;  // 1 = real token, 0 = padding

  int length() const { return static_cast<int>(token_ids.size()); }
  int real_length() const;

  std::vector<int>& channel_ids(Channel c);
  const std::vector<int>& channel_ids(Channel c) const;
};

/// Encodes one function. Out-of-vocabulary strings map to [UNK]. Throws
/// ConfigError if max_len < 3, the instruction list is empty, or no
/// instruction fits within max_len.
EncodedFunction encode_function(const std::vector<NormalizedInstruction>& instrs,
                                const VocabSet& vocabs, int max_len,
                                const std::string& function_id = "");

/// JSONL record with every EncodedFunction field spelled out.
nlohmann::json encoded_to_json(const EncodedFunction& enc);
EncodedFunction encoded_from_json(const nlohmann::json& j, const std::string& origin);

void save_encoded(const std::vector<EncodedFunction>& funcs, const std::string& path);
std::vector<EncodedFunction> load_encoded(const std::string& path);

}  // namespace ktrans
