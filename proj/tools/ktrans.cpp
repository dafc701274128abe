// Command-line front end: annotate, build-vocab, encode, pretrain,
// eval {ppl, outlier, bcsd, ablate}, embed. One JSON config file feeds
// every subcommand; individual flags override config values. Exit codes:
// 0 success, 2 usage/input errors, 3 numeric failures.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ktrans/checkpoint.hpp"
#include "ktrans/corpus.hpp"
#include "ktrans/eval.hpp"
#include "ktrans/trainer.hpp"

namespace {

using nlohmann::json;
using namespace ktrans;

constexpr const char* kToolVersion = "1.0.0";

struct CliConfig {
  ModelConfig model;
  TrainConfig train;
  NormalizeOptions normalize;
  double train_ratio = 0.8;
  std::uint64_t seed = 0;
  bool seed_from_config = false;
};

void check_keys(const json& j, const std::set<std::string>& known,
                const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

CliConfig load_cli_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  check_keys(j, {"model", "train", "pipeline", "seed"}, path);

  if (j.contains("model")) {
    cfg.model = model_config_from_json(j["model"], path + ": model");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    const std::string where = path + ": train";
    if (!t.is_object()) throw ConfigError(where + " must be an object");
    check_keys(t,
               {"lr", "warmup_ratio", "weight_decay", "beta1", "beta2", "eps", "epochs",
                "batch_size", "checkpoint_every", "mlm_rate", "ki_rate",
                "mask_knowledge_with_token", "explicit_knowledge", "implicit_knowledge"},
               where);
    try {
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.warmup_ratio = t.value("warmup_ratio", cfg.train.warmup_ratio);
      cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
      cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
      cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
      cfg.train.eps = t.value("eps", cfg.train.eps);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.checkpoint_every = t.value("checkpoint_every", cfg.train.checkpoint_every);
      cfg.train.masking.mlm_rate = t.value("mlm_rate", cfg.train.masking.mlm_rate);
      cfg.train.masking.ki_rate = t.value("ki_rate", cfg.train.masking.ki_rate);
      cfg.train.masking.mask_knowledge_with_token =
          t.value("mask_knowledge_with_token", cfg.train.masking.mask_knowledge_with_token);
      cfg.train.switches.explicit_knowledge =
          t.value("explicit_knowledge", cfg.train.switches.explicit_knowledge);
      cfg.train.switches.implicit_knowledge =
          t.value("implicit_knowledge", cfg.train.switches.implicit_knowledge);
    } catch (const json::exception& e) {
      throw ConfigError(where + ": bad value: " + e.what());
    }
  }
  if (j.contains("pipeline")) {
    const json& pl = j["pipeline"];
    const std::string where = path + ": pipeline";
    if (!pl.is_object()) throw ConfigError(where + " must be an object");
    check_keys(pl, {"propagate_instruction_tags", "train_ratio"}, where);
    try {
      cfg.normalize.propagate_instruction_tags =
          pl.value("propagate_instruction_tags", cfg.normalize.propagate_instruction_tags);
      cfg.train_ratio = pl.value("train_ratio", cfg.train_ratio);
    } catch (const json::exception& e) {
      throw ConfigError(where + ": bad value: " + e.what());
    }
  }
  if (j.contains("seed")) {
    try {
      cfg.seed = j["seed"].get<std::uint64_t>();
      cfg.seed_from_config = true;
    } catch (const json::exception& e) {
      throw ConfigError(path + ": bad seed: " + e.what());
    }
  }
  return cfg;
}

std::uint64_t resolve_seed(const CliConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (cfg.seed_from_config) return cfg.seed;
  if (const char* env = std::getenv("KTRANS_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("KTRANS_SEED must be an unsigned integer, got '") +
                        env + "'");
    }
  }
  return 0;
}

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for digest: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

// One manifest per invocation, written next to the primary output, so a
// result directory records exactly which inputs and seed produced it.
void write_manifest(const std::string& out_path, const std::string& command,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    const std::string& isa_version) {
  json m;
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["seed"] = seed;
  json ins = json::array();
  for (const std::string& p : inputs) {
    ins.push_back({{"path", p}, {"fnv1a64", hex16(file_digest(p))}});
  }
  m["inputs"] = ins;
  m["outputs"] = outputs;
  if (!isa_version.empty()) m["isa_version"] = isa_version;
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + out_path);
  out << m.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

json annotated_record_json(const FunctionRecord& rec, const IsaTable& isa) {
  json instructions = json::array();
  for (const std::string& text : rec.instructions) {
    AnnotatedInstruction ann = annotate(parse_instruction(text), isa);
    json ops = json::array();
    for (const AnnotatedOperand& op : ann.operands) {
      ops.push_back({{"text", op.text},
                     {"kind", operand_kind_name(op.kind)},
                     {"access", access_mode_name(op.access)}});
    }
    instructions.push_back({{"text", text},
                            {"mnemonic", ann.parsed.mnemonic},
                            {"instruction_type", ann.instruction_type},
                            {"flags", ann.flags},
                            {"operands", ops}});
  }
  return json{{"function_id", rec.function_id},
              {"binary_id", rec.binary_id},
              {"project", rec.project},
              {"opt_level", rec.opt_level},
              {"instructions", instructions}};
}

struct LoadedModel {
  Parameters<float> params;
  CheckpointInfo info;
};

LoadedModel load_model(const std::string& model_path, const VocabSet& vocabs) {
  LoadedModel m;
  const auto digests = vocabs.digests();
  m.params = load_checkpoint<float>(model_path, &digests, &m.info);
  return m;
}

std::vector<FunctionRecord> select_split(const std::vector<FunctionRecord>& records,
                                         const std::string& which, double ratio,
                                         std::uint64_t seed) {
  if (which == "all") return records;
  CorpusSplit split = split_by_project(records, ratio, seed);
  const std::vector<int>& idx = which == "train" ? split.train : split.test;
  std::vector<FunctionRecord> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(records[static_cast<std::size_t>(i)]);
  return out;
}

// Distinct normalized instructions with their type-class labels, used by
// the outlier task and instruction-level export.
struct InstructionInventory {
  std::vector<NormalizedInstruction> instructions;
  std::vector<std::string> classes;  // instruction type of the mnemonic
  std::vector<std::string> texts;    // normalized token join, for ids
};

InstructionInventory build_inventory(const std::vector<FunctionRecord>& records,
                                     const IsaTable& isa, const NormalizeOptions& nopts) {
  InstructionInventory inv;
  std::set<std::string> seen;
  for (const FunctionRecord& rec : records) {
    for (const std::string& text : rec.instructions) {
      AnnotatedInstruction ann = annotate(parse_instruction(text), isa);
      NormalizedInstruction norm = normalize(ann, nopts);
      std::string key;
      for (const std::string& t : norm.tokens) {
        key += t;
        key.push_back(' ');
      }
      if (!seen.insert(key).second) continue;
      if (!key.empty()) key.pop_back();
      inv.instructions.push_back(std::move(norm));
      inv.classes.push_back(ann.instruction_type);
      inv.texts.push_back(key);
    }
  }
  return inv;
}

int run(int argc, char** argv) {
  CLI::App app{"knowledge-aware assembly transformer pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  int threads = 1;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "seed override (beats config and KTRANS_SEED)");
  app.add_option("--threads", threads, "worker threads for evaluation passes")
      ->check(CLI::PositiveNumber);

  std::string isa_path, in_path, out_path, out_dir, vocab_dir, model_path;
  std::string split_sel = "all";
  std::string level = "function";
  std::string query_opt = "O0", cand_opt = "O2";
  int n_groups = 200;
  bool resume = false;
  bool no_knowledge = false;
  std::optional<int> max_len_flag;
  std::optional<double> ratio_flag;

  auto* annotate_cmd = app.add_subcommand("annotate", "attach ISA knowledge to raw corpus");
  annotate_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  annotate_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  annotate_cmd->add_option("--out", out_path, "annotated JSONL")->required();

  auto* vocab_cmd = app.add_subcommand("build-vocab", "build the five channel vocabularies");
  vocab_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  vocab_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  vocab_cmd->add_option("--out-dir", out_dir, "directory for vocab files")->required();

  auto* encode_cmd = app.add_subcommand("encode", "encode corpus to aligned ID sequences");
  encode_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  encode_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  encode_cmd->add_option("--vocab-dir", vocab_dir, "vocab directory")->required();
  encode_cmd->add_option("--out", out_path, "encoded JSONL")->required();
  encode_cmd->add_option("--max-len", max_len_flag, "sequence length override");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "pre-train on the train split");
  pretrain_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  pretrain_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  pretrain_cmd->add_option("--vocab-dir", vocab_dir, "vocab directory")->required();
  pretrain_cmd->add_option("--out-dir", out_dir, "run directory")->required();
  pretrain_cmd->add_option("--train-ratio", ratio_flag, "project split ratio override");
  pretrain_cmd->add_flag("--resume", resume, "continue from out-dir/model.ktrn");

  auto* eval_cmd = app.add_subcommand("eval", "evaluation tasks");
  eval_cmd->require_subcommand(1);

  auto* ppl_cmd = eval_cmd->add_subcommand("ppl", "masked-token perplexity");
  ppl_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  ppl_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  ppl_cmd->add_option("--vocab-dir", vocab_dir, "vocab directory")->required();
  ppl_cmd->add_option("--model", model_path, "checkpoint")->required();
  ppl_cmd->add_option("--split", split_sel, "all, train or test")
      ->check(CLI::IsMember({"all", "train", "test"}));
  ppl_cmd->add_option("--out", out_path, "report JSON (default stdout only)");
  ppl_cmd->add_flag("--no-knowledge", no_knowledge, "drop knowledge channels at input");

  auto* outlier_cmd = eval_cmd->add_subcommand("outlier", "instruction outlier detection");
  outlier_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  outlier_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  outlier_cmd->add_option("--vocab-dir", vocab_dir, "vocab directory")->required();
  outlier_cmd->add_option("--model", model_path, "checkpoint")->required();
  outlier_cmd->add_option("--groups", n_groups, "number of groups")->check(CLI::PositiveNumber);
  outlier_cmd->add_option("--out", out_path, "report JSON (default stdout only)");
  outlier_cmd->add_flag("--no-knowledge", no_knowledge, "drop knowledge channels at input");

  auto* bcsd_cmd = eval_cmd->add_subcommand("bcsd", "cross-optimization retrieval");
  bcsd_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  bcsd_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  bcsd_cmd->add_option("--vocab-dir", vocab_dir, "vocab directory")->required();
  bcsd_cmd->add_option("--model", model_path, "checkpoint")->required();
  bcsd_cmd->add_option("--query-opt", query_opt, "opt level of queries");
  bcsd_cmd->add_option("--cand-opt", cand_opt, "opt level of candidates");
  bcsd_cmd->add_option("--out", out_path, "report JSON (default stdout only)");
  bcsd_cmd->add_flag("--no-knowledge", no_knowledge, "drop knowledge channels at input");

  auto* ablate_cmd = eval_cmd->add_subcommand("ablate", "train and compare the four settings");
  ablate_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  ablate_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  ablate_cmd->add_option("--out-dir", out_dir, "work directory")->required();
  ablate_cmd->add_option("--train-ratio", ratio_flag, "project split ratio override");

  auto* embed_cmd = app.add_subcommand("embed", "export embeddings as JSONL");
  embed_cmd->add_option("--isa", isa_path, "ISA table JSON")->required();
  embed_cmd->add_option("--in", in_path, "corpus JSONL")->required();
  embed_cmd->add_option("--vocab-dir", vocab_dir, "vocab directory")->required();
  embed_cmd->add_option("--model", model_path, "checkpoint")->required();
  embed_cmd->add_option("--out", out_path, "embedding JSONL")->required();
  embed_cmd->add_option("--level", level, "function or instruction")
      ->check(CLI::IsMember({"function", "instruction"}));
  embed_cmd->add_flag("--no-knowledge", no_knowledge, "drop knowledge channels at input");

  CLI11_PARSE(app, argc, argv);

  CliConfig cfg = load_cli_config(config_path);
  const std::uint64_t seed = resolve_seed(cfg, seed_flag);
  cfg.model.seed = seed;
  cfg.train.seed = seed;
  if (ratio_flag) cfg.train_ratio = *ratio_flag;
  const bool use_knowledge = !no_knowledge;

  if (annotate_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    IngestResult ingest = ingest_corpus(in_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot open output file: " + out_path);
    for (const FunctionRecord& rec : ingest.records) {
      out << annotated_record_json(rec, isa).dump() << '\n';
    }
    if (!out) throw IoError("failed writing: " + out_path);
    write_manifest(out_path + ".manifest.json", "annotate", seed, {isa_path, in_path},
                   {out_path}, isa.version);
    std::cout << "annotated " << ingest.records.size() << " functions ("
              << ingest.dropped_short << " dropped as shorter than 5 instructions)\n";
    return 0;
  }

  if (vocab_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    IngestResult ingest = ingest_corpus(in_path);
    std::vector<std::vector<NormalizedInstruction>> normalized;
    normalized.reserve(ingest.records.size());
    for (const FunctionRecord& rec : ingest.records) {
      normalized.push_back(normalize_record(rec, isa, cfg.normalize));
    }
    VocabBuildStats stats;
    VocabSet vocabs = build_vocabs(normalized, &stats);
    ensure_dir(out_dir);
    save_vocab_set(vocabs, out_dir);
    std::vector<std::string> outputs;
    for (int c = 0; c < kNumChannels; ++c) {
      outputs.push_back(out_dir + "/" + channel_name(static_cast<Channel>(c)) + ".json");
    }
    write_manifest(out_dir + "/manifest.json", "build-vocab", seed, {isa_path, in_path},
                   outputs, isa.version);
    for (int c = 0; c < kNumChannels; ++c) {
      std::cout << channel_name(static_cast<Channel>(c)) << ": "
                << vocabs.channels[static_cast<std::size_t>(c)].size() << " IDs ("
                << stats.distinct[static_cast<std::size_t>(c)] << " from data, "
                << stats.occurrences[static_cast<std::size_t>(c)] << " occurrences)\n";
    }
    return 0;
  }

  if (encode_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    VocabSet vocabs = load_vocab_set(vocab_dir);
    IngestResult ingest = ingest_corpus(in_path);
    PipelineOptions popts;
    popts.normalize = cfg.normalize;
    popts.max_len = max_len_flag ? *max_len_flag : cfg.model.max_len;
    std::vector<EncodedFunction> encoded = encode_records(ingest.records, isa, vocabs, popts);
    save_encoded(encoded, out_path);
    write_manifest(out_path + ".manifest.json", "encode", seed, {isa_path, in_path},
                   {out_path}, isa.version);
    std::cout << "encoded " << encoded.size() << " functions at max_len " << popts.max_len
              << "\n";
    return 0;
  }

  if (pretrain_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    VocabSet vocabs = load_vocab_set(vocab_dir);
    IngestResult ingest = ingest_corpus(in_path);
    CorpusSplit split = split_by_project(ingest.records, cfg.train_ratio, seed);
    std::vector<FunctionRecord> train_records;
    for (int i : split.train) train_records.push_back(ingest.records[static_cast<std::size_t>(i)]);

    cfg.model.vocab_sizes = vocabs.sizes();
    PipelineOptions popts;
    popts.normalize = cfg.normalize;
    popts.max_len = cfg.model.max_len;
    std::vector<EncodedFunction> pool = encode_records(train_records, isa, vocabs, popts);

    ensure_dir(out_dir);
    Parameters<float> params;
    AdamWState<float> opt;
    long start_step = 0;
    if (resume) {
      const auto digests = vocabs.digests();
      CheckpointInfo info;
      params = load_checkpoint<float>(out_dir + "/model.ktrn", &digests, &info);
      opt = load_opt_state<float>(out_dir + "/model.opt", info.config);
      start_step = info.step;
      cfg.model = info.config;
    } else {
      params = init_params<float>(cfg.model);
      opt = AdamWState<float>(cfg.model);
    }

    TrainResult result =
        train(pool, params, opt, cfg.train, vocabs.digests(), out_dir, start_step);
    write_manifest(out_dir + "/manifest.json", "pretrain", seed, {isa_path, in_path},
                   {result.checkpoint_path, result.metrics_path}, isa.version);
    std::cout << "trained " << result.steps << " steps on " << pool.size()
              << " functions; final loss " << result.final_total << " (mlm "
              << result.final_mlm << ", ki " << result.final_ki << ")\n"
              << "checkpoint: " << result.checkpoint_path << "\n";
    return 0;
  }

  auto emit_report = [&](const json& report, const std::string& command,
                         const std::vector<std::string>& inputs) {
    std::cout << report.dump(2) << '\n';
    if (!out_path.empty()) {
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw IoError("cannot open report file: " + out_path);
      out << report.dump(2) << '\n';
      write_manifest(out_path + ".manifest.json", command, seed, inputs, {out_path}, "");
    }
  };

  if (ppl_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    VocabSet vocabs = load_vocab_set(vocab_dir);
    IngestResult ingest = ingest_corpus(in_path);
    std::vector<FunctionRecord> records =
        select_split(ingest.records, split_sel, cfg.train_ratio, seed);
    LoadedModel model = load_model(model_path, vocabs);
    PipelineOptions popts;
    popts.normalize = cfg.normalize;
    popts.max_len = model.info.config.max_len;
    std::vector<EncodedFunction> pool = encode_records(records, isa, vocabs, popts);
    PplReport r = perplexity(model.params, pool, seed, cfg.train.masking, use_knowledge,
                             threads);
    json report{{"task", "ppl"},
                {"split", split_sel},
                {"functions", pool.size()},
                {"predicted_positions", r.predicted},
                {"skipped_special_targets", r.skipped_special},
                {"clamped_probabilities", r.clamped},
                {"perplexity", r.ppl}};
    emit_report(report, "eval-ppl", {isa_path, in_path, model_path});
    return 0;
  }

  if (outlier_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    VocabSet vocabs = load_vocab_set(vocab_dir);
    IngestResult ingest = ingest_corpus(in_path);
    LoadedModel model = load_model(model_path, vocabs);
    InstructionInventory inv = build_inventory(ingest.records, isa, cfg.normalize);

    Rng rng(derive_seed(seed, fnv1a64("outlier-groups")));
    std::vector<OutlierGroup> groups = build_outlier_groups(inv.classes, n_groups, rng);

    std::vector<VecX<double>> embeddings(inv.instructions.size());
    parallel_for_ordered(static_cast<long>(inv.instructions.size()), threads, [&](long i) {
      embeddings[static_cast<std::size_t>(i)] = standalone_instruction_embedding(
          inv.instructions[static_cast<std::size_t>(i)], vocabs, model.params,
          use_knowledge);
    });
    OutlierReport r = outlier_accuracy(groups, embeddings);
    json report{{"task", "outlier"},
                {"inventory_size", inv.instructions.size()},
                {"groups", r.groups},
                {"correct", r.correct},
                {"accuracy", r.accuracy}};
    emit_report(report, "eval-outlier", {isa_path, in_path, model_path});
    return 0;
  }

  if (bcsd_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    VocabSet vocabs = load_vocab_set(vocab_dir);
    IngestResult ingest = ingest_corpus(in_path);
    LoadedModel model = load_model(model_path, vocabs);
    PipelineOptions popts;
    popts.normalize = cfg.normalize;
    popts.max_len = model.info.config.max_len;

    std::vector<const FunctionRecord*> queries, candidates;
    for (const FunctionRecord& rec : ingest.records) {
      if (rec.opt_level == query_opt) queries.push_back(&rec);
      if (rec.opt_level == cand_opt) candidates.push_back(&rec);
    }
    if (candidates.empty() || queries.empty()) {
      throw ConfigError("no functions found for opt levels '" + query_opt + "' / '" +
                        cand_opt + "'");
    }
    std::unordered_map<std::string, int> cand_index;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      cand_index.emplace(candidates[i]->function_id, static_cast<int>(i));
    }

    auto embed_side = [&](const std::vector<const FunctionRecord*>& side) {
      std::vector<FunctionRecord> recs;
      recs.reserve(side.size());
      for (const FunctionRecord* r : side) recs.push_back(*r);
      std::vector<EncodedFunction> enc = encode_records(recs, isa, vocabs, popts);
      return function_embeddings(enc, model.params, use_knowledge, threads);
    };
    std::vector<VecX<double>> cand_vecs = embed_side(candidates);
    std::vector<VecX<double>> query_vecs = embed_side(queries);

    std::vector<int> ranks;
    long skipped = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      auto it = cand_index.find(queries[i]->function_id);
      if (it == cand_index.end()) {
        ++skipped;
        continue;
      }
      ranks.push_back(retrieval_rank(query_vecs[i], cand_vecs, it->second));
    }
    if (ranks.empty()) {
      throw ConfigError("no query function has a counterpart at opt level '" + cand_opt + "'");
    }
    json report{{"task", "bcsd"},
                {"query_opt", query_opt},
                {"cand_opt", cand_opt},
                {"queries", ranks.size()},
                {"candidates", candidates.size()},
                {"skipped_without_counterpart", skipped},
                {"mrr", mean_reciprocal_rank(ranks)},
                {"recall_at_1", recall_at_k(ranks, 1)},
                {"recall_at_5", recall_at_k(ranks, 5)}};
    emit_report(report, "eval-bcsd", {isa_path, in_path, model_path});
    return 0;
  }

  if (ablate_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    IngestResult ingest = ingest_corpus(in_path);
    CorpusSplit split = split_by_project(ingest.records, cfg.train_ratio, seed);

    std::vector<std::vector<NormalizedInstruction>> all_norm;
    for (const FunctionRecord& rec : ingest.records) {
      all_norm.push_back(normalize_record(rec, isa, cfg.normalize));
    }
    // Vocabulary from the train side only, as in a real pre-training run.
    std::vector<std::vector<NormalizedInstruction>> train_norm;
    for (int i : split.train) train_norm.push_back(all_norm[static_cast<std::size_t>(i)]);
    VocabSet vocabs = build_vocabs(train_norm);
    cfg.model.vocab_sizes = vocabs.sizes();

    PipelineOptions popts;
    popts.normalize = cfg.normalize;
    popts.max_len = cfg.model.max_len;
    auto encode_side = [&](const std::vector<int>& idx) {
      std::vector<FunctionRecord> recs;
      for (int i : idx) recs.push_back(ingest.records[static_cast<std::size_t>(i)]);
      return encode_records(recs, isa, vocabs, popts);
    };
    std::vector<EncodedFunction> train_pool = encode_side(split.train);
    std::vector<EncodedFunction> test_pool = encode_side(split.test);

    ensure_dir(out_dir);
    std::vector<AblationRow> rows =
        run_ablation<float>(train_pool, test_pool, cfg.model, cfg.train, vocabs.digests(),
                            out_dir, derive_seed(seed, fnv1a64("ablation-eval")));

    json table = json::array();
    std::cout << "setting explicit implicit eval_mlm eval_ki eval_total\n";
    for (const AblationRow& row : rows) {
      std::cout << row.setting << "       " << (row.explicit_knowledge ? "on " : "off")
                << "      " << (row.implicit_knowledge ? "on " : "off") << "      "
                << row.eval_mlm << " " << row.eval_ki << " " << row.eval_total << "\n";
      table.push_back({{"setting", std::string(1, row.setting)},
                       {"explicit_knowledge", row.explicit_knowledge},
                       {"implicit_knowledge", row.implicit_knowledge},
                       {"eval_mlm", row.eval_mlm},
                       {"eval_ki", row.eval_ki},
                       {"eval_total", row.eval_total}});
    }
    json report{{"task", "ablate"},
                {"train_functions", train_pool.size()},
                {"test_functions", test_pool.size()},
                {"settings", table}};
    std::ofstream out(out_dir + "/ablation.json", std::ios::binary);
    if (!out) throw IoError("cannot open report file: " + out_dir + "/ablation.json");
    out << report.dump(2) << '\n';
    write_manifest(out_dir + "/manifest.json", "eval-ablate", seed, {isa_path, in_path},
                   {out_dir + "/ablation.json"}, isa.version);
    return 0;
  }

  if (embed_cmd->parsed()) {
    IsaTable isa = load_isa_table(isa_path);
    VocabSet vocabs = load_vocab_set(vocab_dir);
    IngestResult ingest = ingest_corpus(in_path);
    LoadedModel model = load_model(model_path, vocabs);
    PipelineOptions popts;
    popts.normalize = cfg.normalize;
    popts.max_len = model.info.config.max_len;

    std::vector<std::string> ids, labels;
    std::vector<VecX<double>> vectors;
    if (level == "function") {
      std::vector<EncodedFunction> pool =
          encode_records(ingest.records, isa, vocabs, popts);
      vectors = function_embeddings(pool, model.params, use_knowledge, threads);
      for (const FunctionRecord& rec : ingest.records) {
        ids.push_back(rec.binary_id + "/" + rec.function_id);
        labels.push_back(rec.project);
      }
    } else {
      InstructionInventory inv = build_inventory(ingest.records, isa, cfg.normalize);
      vectors.resize(inv.instructions.size());
      parallel_for_ordered(static_cast<long>(inv.instructions.size()), threads, [&](long i) {
        vectors[static_cast<std::size_t>(i)] = standalone_instruction_embedding(
            inv.instructions[static_cast<std::size_t>(i)], vocabs, model.params,
            use_knowledge);
      });
      ids = inv.texts;
      labels = inv.classes;
    }
    export_embeddings(out_path, ids, labels, vectors);
    write_manifest(out_path + ".manifest.json", "embed", seed, {isa_path, in_path, model_path},
                   {out_path}, isa.version);
    std::cout << "exported " << vectors.size() << " " << level << " embeddings\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
