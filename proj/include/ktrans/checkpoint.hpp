#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ktrans/model.hpp"

namespace ktrans {

// Checkpoint layout: the 5-byte magic "KTRN1", a little-endian u64 header
// length, a JSON header {config, vocab_digests, step}, then every tensor
// in canonical visit order as row-major little-endian float32. Loading
// rebuilds shapes from the header config, so a truncated or padded file
// is detected exactly.

inline constexpr char kCheckpointMagic[5] = {'K', 'T', 'R', 'N', '1'};

struct CheckpointInfo {
  ModelConfig config;
  std::array<std::uint64_t, kNumChannels> vocab_digests{};
  long step = 0;
};

std::string hex16(std::uint64_t v);
std::uint64_t parse_hex16(const std::string& s, const std::string& origin);

namespace detail {

template <class S>
void write_tensor_data(std::ostream& out, const Parameters<S>& params) {
  std::vector<float> buffer;
  visit_tensors(params, [&](const std::string&, const MatX<S>& t, TensorKind) {
    buffer.clear();
    buffer.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        buffer.push_back(static_cast<float>(t(r, c)));
      }
    }
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  });
}

template <class S>
void read_tensor_data(std::istream& in, Parameters<S>& params, const std::string& path) {
  std::vector<float> buffer;
  visit_tensors(params, [&](const std::string& name, MatX<S>& t, TensorKind) {
    buffer.resize(static_cast<std::size_t>(t.size()));
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    if (!in) {
      throw SchemaError(path + ": checkpoint truncated while reading tensor '" + name + "'");
    }
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        t(r, c) = static_cast<S>(buffer[i++]);
      }
    }
  });
}

void write_header(std::ostream& out, const char magic[5], const nlohmann::json& header);
nlohmann::json read_header(std::istream& in, const char magic[5], const std::string& path);
void require_eof(std::istream& in, const std::string& path);

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const Parameters<S>& params,
                     const std::array<std::uint64_t, kNumChannels>& vocab_digests,
                     long step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  nlohmann::json header;
  header["config"] = model_config_to_json(params.config);
  std::vector<std::string> digests;
  for (std::uint64_t d : vocab_digests) digests.push_back(hex16(d));
  header["vocab_digests"] = digests;
  header["step"] = step;
  detail::write_header(out, kCheckpointMagic, header);
  detail::write_tensor_data(out, params);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

CheckpointInfo read_checkpoint_info(const std::string& path);

/// Loads parameters. With expected_digests given, a vocabulary mismatch
/// raises SchemaError before any tensor data is read.
template <class S>
Parameters<S> load_checkpoint(
    const std::string& path,
    const std::array<std::uint64_t, kNumChannels>* expected_digests = nullptr,
    CheckpointInfo* info_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json header = detail::read_header(in, kCheckpointMagic, path);

  CheckpointInfo info;
  if (!header.contains("config") || !header.contains("vocab_digests") ||
      !header.contains("step")) {
    throw SchemaError(path + ": checkpoint header needs config, vocab_digests and step");
  }
  info.config = model_config_from_json(header["config"], path);
  info.config.validate();
  if (!header["vocab_digests"].is_array() ||
      header["vocab_digests"].size() != kNumChannels) {
    throw SchemaError(path + ": vocab_digests must hold 5 entries");
  }
  for (int c = 0; c < kNumChannels; ++c) {
    info.vocab_digests[static_cast<std::size_t>(c)] =
        parse_hex16(header["vocab_digests"][static_cast<std::size_t>(c)].get<std::string>(),
                    path);
  }
  info.step = header["step"].get<long>();

  if (expected_digests) {
    for (int c = 0; c < kNumChannels; ++c) {
      if (info.vocab_digests[static_cast<std::size_t>(c)] !=
          (*expected_digests)[static_cast<std::size_t>(c)]) {
        throw SchemaError(path + ": vocabulary digest mismatch on channel " +
                          channel_name(static_cast<Channel>(c)) +
                          "; checkpoint was trained against different vocab files");
      }
    }
  }

  Parameters<S> params(info.config);
  detail::read_tensor_data(in, params, path);
  detail::require_eof(in, path);
  if (info_out) *info_out = info;
  return params;
}

}  // namespace ktrans
