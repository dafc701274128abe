#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ktrans/normalize.hpp"

namespace ktrans {

// Five aligned vocabularies, one per channel. IDs 0..4 are the shared
// special tokens; knowledge channels add [NONE] at ID 5. Data tokens are
// assigned IDs in order of first occurrence so a rebuild over the same
// corpus reproduces the same mapping.

enum class Channel { Token = 0, InstrType = 1, OpndType = 2, OpndRw = 3, Flags = 4 };

inline constexpr int kNumChannels = 5;

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNoneId = 5;

// First data ID of the token channel (IDs below are its five specials).
// Random replacement and perplexity restriction both start here.
inline constexpr int kTokenDataStart = 5;

/// Short stable name used in vocab filenames and the file header.
const char* channel_name(Channel c);

class Vocab {
 public:
  /// Empty vocab holding only the special tokens. `with_none` adds [NONE]
  /// as a sixth special (knowledge channels).
  static Vocab with_specials(bool with_none);

  /// Returns the ID of `token`, inserting it if absent.
  int add(const std::string& token);

  std::optional<int> lookup(const std::string& token) const;

  /// Lookup that maps out-of-vocabulary tokens to [UNK].
  int id_or_unk(const std::string& token) const;

  /// Throws ConfigError if the ID is out of range.
  const std::string& token(int id) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int num_specials() const { return num_specials_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Order-sensitive FNV-1a digest of the token list; two vocabs agree on
  /// every ID assignment iff their digests match.
  std::uint64_t digest() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int num_specials_ = 0;
};

struct VocabSet {
  std::array<Vocab, kNumChannels> channels;

  Vocab& operator[](Channel c) { return channels[static_cast<int>(c)]; }
  const Vocab& operator[](Channel c) const { return channels[static_cast<int>(c)]; }

  std::array<std::uint64_t, kNumChannels> digests() const;
  std::array<int, kNumChannels> sizes() const;
};

struct VocabBuildStats {
  std::array<long, kNumChannels> distinct{};     // data tokens, excluding specials
  std::array<long, kNumChannels> occurrences{};  // total positions seen
};

/// Builds all five vocabularies in one pass over normalized functions.
/// Throws ConfigError on an empty corpus.
VocabSet build_vocabs(const std::vector<std::vector<NormalizedInstruction>>& corpus,
                      VocabBuildStats* stats = nullptr);

/// One JSON file per channel: {"channel": name, "tokens": [...]}, index is
/// the ID. save writes <dir>/<channel>.json for all five channels.
void save_vocab(const Vocab& vocab, Channel channel, const std::string& path);
Vocab load_vocab(Channel channel, const std::string& path);
void save_vocab_set(const VocabSet& vocabs, const std::string& dir);
VocabSet load_vocab_set(const std::string& dir);

/// Maps IDs back to token strings; throws ConfigError on out-of-range IDs.
std::vector<std::string> decode_ids(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace ktrans
