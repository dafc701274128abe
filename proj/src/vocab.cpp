#include "ktrans/vocab.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ktrans/errors.hpp"
#include "ktrans/rng.hpp"

namespace ktrans {

namespace {

constexpr const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
constexpr const char* kNone = "[NONE]";

bool channel_has_none(Channel c) { return c != Channel::Token; }

}  // namespace

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::Token: return "token";
    case Channel::InstrType: return "instruction_type";
    case Channel::OpndType: return "operand_type";
    case Channel::OpndRw: return "operand_rw";
    case Channel::Flags: return "flags";
  }
  return "token";
}

Vocab Vocab::with_specials(bool with_none) {
  Vocab v;
  for (const char* s : kSpecials) v.add(s);
  if (with_none) v.add(kNone);
  v.num_specials_ = v.size();
  return v;
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<int> Vocab::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id_or_unk(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw ConfigError("vocab ID " + std::to_string(id) + " out of range [0, " +
                      std::to_string(size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocab::digest() const {
  std::string joined;
  for (const std::string& t : tokens_) {
    joined += t;
    joined.push_back('\n');
  }
  return fnv1a64(joined);
}

std::array<std::uint64_t, kNumChannels> VocabSet::digests() const {
  std::array<std::uint64_t, kNumChannels> out{};
  for (int c = 0; c < kNumChannels; ++c) out[c] = channels[c].digest();
  return out;
}

std::array<int, kNumChannels> VocabSet::sizes() const {
  std::array<int, kNumChannels> out{};
  for (int c = 0; c < kNumChannels; ++c) out[c] = channels[c].size();
  return out;
}

VocabSet build_vocabs(const std::vector<std::vector<NormalizedInstruction>>& corpus,
                      VocabBuildStats* stats) {
  if (corpus.empty()) throw ConfigError("cannot build vocabularies from an empty corpus");

  VocabSet vs;
  for (int c = 0; c < kNumChannels; ++c) {
    vs.channels[c] = Vocab::with_specials(channel_has_none(static_cast<Channel>(c)));
  }

  auto feed = [&](Channel c, const std::vector<std::string>& values) {
    Vocab& v = vs[c];
    for (const std::string& t : values) v.add(t);
    if (stats) stats->occurrences[static_cast<int>(c)] += static_cast<long>(values.size());
  };

  for (const auto& fn : corpus) {
    for (const NormalizedInstruction& ins : fn) {
      feed(Channel::Token, ins.tokens);
      feed(Channel::InstrType, ins.instr_type);
      feed(Channel::OpndType, ins.opnd_type);
      feed(Channel::OpndRw, ins.opnd_rw);
      feed(Channel::Flags, ins.flags);
    }
  }

  if (stats) {
    for (int c = 0; c < kNumChannels; ++c) {
      stats->distinct[c] = vs.channels[c].size() - vs.channels[c].num_specials();
    }
  }
  return vs;
}

void save_vocab(const Vocab& vocab, Channel channel, const std::string& path) {
  nlohmann::json j;
  j["channel"] = channel_name(channel);
  j["tokens"] = vocab.tokens();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open vocab file for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing vocab file: " + path);
}

Vocab load_vocab(Channel channel, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocab file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("channel") || !j.contains("tokens")) {
    throw SchemaError(path + ": vocab file must be an object with 'channel' and 'tokens'");
  }
  if (!j["channel"].is_string() || j["channel"].get<std::string>() != channel_name(channel)) {
    throw SchemaError(path + ": expected channel '" + channel_name(channel) + "'");
  }
  if (!j["tokens"].is_array()) throw SchemaError(path + ": 'tokens' must be an array");

  Vocab expected = Vocab::with_specials(channel_has_none(channel));
  Vocab v;
  int id = 0;
  for (const auto& item : j["tokens"]) {
    if (!item.is_string()) throw SchemaError(path + ": token entries must be strings");
    std::string t = item.get<std::string>();
    if (v.lookup(t)) throw SchemaError(path + ": duplicate token '" + t + "'");
    if (id < expected.size() && t != expected.token(id)) {
      throw SchemaError(path + ": token at ID " + std::to_string(id) +
                        " must be the special '" + expected.token(id) + "', got '" + t + "'");
    }
    v.add(t);
    ++id;
  }
  if (v.size() < expected.size()) {
    throw SchemaError(path + ": vocab is missing the leading special tokens");
  }
  // Reconstruct via with_specials so num_specials_ is set for this channel.
  Vocab out = Vocab::with_specials(channel_has_none(channel));
  for (int i = out.size(); i < v.size(); ++i) out.add(v.token(i));
  return out;
}

void save_vocab_set(const VocabSet& vocabs, const std::string& dir) {
  for (int c = 0; c < kNumChannels; ++c) {
    Channel ch = static_cast<Channel>(c);
    save_vocab(vocabs.channels[c], ch, dir + "/" + channel_name(ch) + ".json");
  }
}

VocabSet load_vocab_set(const std::string& dir) {
  VocabSet vs;
  for (int c = 0; c < kNumChannels; ++c) {
    Channel ch = static_cast<Channel>(c);
    vs.channels[c] = load_vocab(ch, dir + "/" + channel_name(ch) + ".json");
  }
  return vs;
}

std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace ktrans
