#include "ktrans/checkpoint.hpp"

#include <cctype>

namespace ktrans {

std::string hex16(std::uint64_t v) {
  static const char* kDigits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::uint64_t parse_hex16(const std::string& s, const std::string& origin) {
  if (s.size() != 16) {
    throw SchemaError(origin + ": digest must be 16 hex characters, got '" + s + "'");
  }
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') {
      v |= static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      v |= static_cast<std::uint64_t>(c - 'a' + 10);
    } else {
      throw SchemaError(origin + ": digest must be lowercase hex, got '" + s + "'");
    }
  }
  return v;
}

namespace detail {

void write_header(std::ostream& out, const char magic[5], const nlohmann::json& header) {
  out.write(magic, 5);
  const std::string body = header.dump();
  std::uint64_t len = body.size();
  char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<char>((len >> (8 * i)) & 0xff);
  out.write(len_bytes, 8);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

nlohmann::json read_header(std::istream& in, const char magic[5], const std::string& path) {
  char got[5];
  in.read(got, 5);
  if (!in || std::memcmp(got, magic, 5) != 0) {
    throw SchemaError(path + ": bad magic; not a checkpoint file of this format");
  }
  char len_bytes[8];
  in.read(len_bytes, 8);
  if (!in) throw SchemaError(path + ": truncated header length");
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) {
    len = (len << 8) | static_cast<std::uint64_t>(static_cast<unsigned char>(len_bytes[i]));
  }
  if (len > (1ull << 24)) throw SchemaError(path + ": implausible header length");
  std::string body(static_cast<std::size_t>(len), '\0');
  in.read(body.data(), static_cast<std::streamsize>(len));
  if (!in) throw SchemaError(path + ": truncated header");
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": invalid header JSON: " + e.what());
  }
}

void require_eof(std::istream& in, const std::string& path) {
  in.peek();
  if (!in.eof()) throw SchemaError(path + ": trailing bytes after tensor data");
}

}  // namespace detail

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json header = detail::read_header(in, kCheckpointMagic, path);
  if (!header.contains("config") || !header.contains("vocab_digests") ||
      !header.contains("step")) {
    throw SchemaError(path + ": checkpoint header needs config, vocab_digests and step");
  }
  CheckpointInfo info;
  info.config = model_config_from_json(header["config"], path);
  for (int c = 0; c < kNumChannels; ++c) {
    info.vocab_digests[static_cast<std::size_t>(c)] =
        parse_hex16(header["vocab_digests"][static_cast<std::size_t>(c)].get<std::string>(),
                    path);
  }
  info.step = header["step"].get<long>();
  return info;
}

}  // namespace ktrans
