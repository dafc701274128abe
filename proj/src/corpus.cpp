#include "ktrans/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ktrans/errors.hpp"
#include "ktrans/normalize.hpp"
#include "ktrans/rng.hpp"

namespace ktrans {

namespace {

std::string require_string(const nlohmann::json& j, const char* key,
                           const std::string& origin) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw SchemaError(origin + ": missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

IngestResult ingest_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  return ingest_corpus(in, path);
}

IngestResult ingest_corpus(std::istream& in, const std::string& origin) {
  IngestResult result;
  std::unordered_set<std::string> seen_keys;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw SchemaError(where + ": corpus record must be an object");

    FunctionRecord rec;
    rec.function_id = require_string(j, "function_id", where);
    rec.binary_id = require_string(j, "binary_id", where);
    rec.project = require_string(j, "project", where);
    rec.opt_level = require_string(j, "opt_level", where);
    if (rec.function_id.empty() || rec.binary_id.empty() || rec.project.empty()) {
      throw SchemaError(where + ": function_id, binary_id and project must be non-empty");
    }
    if (!j.contains("instructions") || !j["instructions"].is_array()) {
      throw SchemaError(where + ": missing array field 'instructions'");
    }
    for (const auto& ins : j["instructions"]) {
      if (!ins.is_string() || ins.get<std::string>().empty()) {
        throw SchemaError(where + ": instructions must be non-empty strings");
      }
      rec.instructions.push_back(ins.get<std::string>());
    }

    std::string key = rec.binary_id + '\x1f' + rec.function_id;
    if (!seen_keys.insert(key).second) {
      throw SchemaError(where + ": duplicate (binary_id, function_id) pair ('" +
                        rec.binary_id + "', '" + rec.function_id + "')");
    }

    ++result.total_read;
    if (rec.instructions.size() < 5) {
      ++result.dropped_short;
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

CorpusSplit split_by_project(const std::vector<FunctionRecord>& records,
                             double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw ConfigError("train_ratio must lie in (0, 1); got " + std::to_string(train_ratio));
  }
  std::vector<std::string> projects;
  std::unordered_set<std::string> seen;
  for (const FunctionRecord& r : records) {
    if (seen.insert(r.project).second) projects.push_back(r.project);
  }
  int p = static_cast<int>(projects.size());
  if (p < 2) {
    throw ConfigError("project-level split needs at least 2 projects; corpus has " +
                      std::to_string(p));
  }

  int n_train = std::clamp(round_half_up(train_ratio * p), 1, p - 1);
  Rng rng(derive_seed(seed, fnv1a64("project-split")));
  rng.shuffle(projects);

  CorpusSplit split;
  std::unordered_set<std::string> train_set;
  for (int i = 0; i < p; ++i) {
    if (i < n_train) {
      split.train_projects.push_back(projects[static_cast<std::size_t>(i)]);
      train_set.insert(projects[static_cast<std::size_t>(i)]);
    } else {
      split.test_projects.push_back(projects[static_cast<std::size_t>(i)]);
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (train_set.count(records[i].project)) {
      split.train.push_back(static_cast<int>(i));
    } else {
      split.test.push_back(static_cast<int>(i));
    }
  }
  return split;
}

std::vector<NormalizedInstruction> normalize_record(const FunctionRecord& record,
                                                    const IsaTable& isa,
                                                    const NormalizeOptions& options) {
  std::vector<NormalizedInstruction> out;
  out.reserve(record.instructions.size());
  for (std::size_t i = 0; i < record.instructions.size(); ++i) {
    try {
      ParsedInstruction parsed = parse_instruction(record.instructions[i]);
      out.push_back(normalize(annotate(parsed, isa), options));
    } catch (const ParseError& e) {
      throw ParseError("function '" + record.function_id + "', instruction " +
                       std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<EncodedFunction> encode_records(const std::vector<FunctionRecord>& records,
                                            const IsaTable& isa, const VocabSet& vocabs,
                                            const PipelineOptions& options) {
  std::vector<EncodedFunction> out;
  out.reserve(records.size());
  for (const FunctionRecord& rec : records) {
    out.push_back(encode_function(normalize_record(rec, isa, options.normalize), vocabs,
                                  options.max_len, rec.function_id));
  }
  return out;
}

BatchStream::BatchStream(const std::vector<EncodedFunction>& pool, int batch_size,
                         std::uint64_t seed, int epoch)
    : pool_(&pool), batch_size_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  order_.resize(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) order_[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, fnv1a64("batch-order"), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order_);
}

std::optional<BatchStream::Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  Batch batch;
  batch.index = emitted_++;
  while (cursor_ < order_.size() &&
         static_cast<int>(batch.items.size()) < batch_size_) {
    batch.items.push_back(&(*pool_)[static_cast<std::size_t>(order_[cursor_])]);
    ++cursor_;
  }
  return batch;
}

int BatchStream::num_batches() const {
  if (order_.empty()) return 0;
  return static_cast<int>((order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
                          static_cast<std::size_t>(batch_size_));
}

}  // namespace ktrans
