#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ktrans/encode.hpp"
#include "ktrans/isa.hpp"

namespace ktrans {

// Raw corpus handling: JSONL ingestion with validation, the short-function
// filter, the project-granularity train/test split, and batch iteration.

struct FunctionRecord {
  std::string function_id;
  std::string binary_id;
  std::string project;
  std::string opt_level;
  std::vector<std::string> instructions;
};

struct IngestResult {
  std::vector<FunctionRecord> records;  // functions that passed the filter
  long total_read = 0;
  long dropped_short = 0;  // fewer than 5 instructions
};

/// Reads corpus JSONL. Malformed lines, missing fields and duplicate
/// (binary_id, function_id) pairs raise ParseError/SchemaError naming the
/// line. Functions with fewer than 5 instructions are dropped and counted.
IngestResult ingest_corpus(const std::string& path);
IngestResult ingest_corpus(std::istream& in, const std::string& origin);

struct CorpusSplit {
  std::vector<int> train;  // indices into the ingested record list
  std::vector<int> test;
  std::vector<std::string> train_projects;
  std::vector<std::string> test_projects;
};

/// Splits at project granularity: every function of a project lands on the
/// same side. train_ratio applies to the project count, rounded half-up
/// and clamped so both sides keep at least one project. Throws ConfigError
/// if the corpus has fewer than two projects or the ratio is outside (0,1).
CorpusSplit split_by_project(const std::vector<FunctionRecord>& records,
                             double train_ratio, std::uint64_t seed);

struct PipelineOptions {
  NormalizeOptions normalize;
  int max_len = 512;
};

/// parse -> annotate -> normalize for one record.
std::vector<NormalizedInstruction> normalize_record(const FunctionRecord& record,
                                                    const IsaTable& isa,
                                                    const NormalizeOptions& options);

/// Full pipeline for many records against an existing vocabulary.
std::vector<EncodedFunction> encode_records(const std::vector<FunctionRecord>& records,
                                            const IsaTable& isa, const VocabSet& vocabs,
                                            const PipelineOptions& options);

/// Shuffled mini-batches over an encoded pool. The permutation depends on
/// (seed, epoch) only; the final short batch is emitted.
class BatchStream {
 public:
  struct Batch {
    std::vector<const EncodedFunction*> items;
    int index = 0;
  };

  BatchStream(const std::vector<EncodedFunction>& pool, int batch_size,
              std::uint64_t seed, int epoch);

  std::optional<Batch> next();
  int num_batches() const;

 private:
  const std::vector<EncodedFunction>* pool_;
  std::vector<int> order_;
  int batch_size_;
  std::size_t cursor_ = 0;
  int emitted_ = 0;
};

}  // namespace ktrans
