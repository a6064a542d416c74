// SPDX-License-Identifier: Apache-2.0
#pragma once

// On-disk artifact set shared by preprocessing, the synthetic generator,
// the language-model probe and training/evaluation.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softtopic/corpus.hpp"
#include "softtopic/matrix.hpp"

namespace softtopic {

/// Fixed file names inside an artifact/output directory.
class ArtifactLayout {
 public:
  explicit ArtifactLayout(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path corpus() const { return dir_ / "corpus.jsonl"; }
  std::filesystem::path vocab() const { return dir_ / "vocab.txt"; }
  std::filesystem::path bow() const { return dir_ / "bow.dtm"; }
  std::filesystem::path logits() const { return dir_ / "logits.dtm"; }
  std::filesystem::path targets() const { return dir_ / "targets.dtm"; }
  std::filesystem::path embeddings() const { return dir_ / "embeddings.dtm"; }
  std::filesystem::path external_embeddings() const { return dir_ / "external_embeddings.dtm"; }
  std::filesystem::path labels() const { return dir_ / "labels.csv"; }
  std::filesystem::path ids() const { return dir_ / "ids.txt"; }
  std::filesystem::path manifest() const { return dir_ / "manifest.json"; }
  std::filesystem::path checkpoint() const { return dir_ / "checkpoint.bin"; }
  std::filesystem::path eval() const { return dir_ / "eval.json"; }
  std::filesystem::path sweep() const { return dir_ / "sweep.csv"; }
  std::filesystem::path train_log() const { return dir_ / "train.log"; }
  std::filesystem::path topics() const { return dir_ / "topics.txt"; }

 private:
  std::filesystem::path dir_;
};

void write_ids(const std::filesystem::path& path, std::span<const std::string> ids);
std::vector<std::string> read_ids(const std::filesystem::path& path);

/// CSV with header `id,label`, RFC 4180 quoting. Documents without a label
/// are omitted.
void write_labels_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                      std::span<const std::optional<std::string>> labels);
/// Labels aligned to `ids`; ids absent from the file map to nullopt.
/// Throws InputError for unknown or duplicate ids.
std::vector<std::optional<std::string>> read_labels_csv(const std::filesystem::path& path,
                                                        std::span<const std::string> ids);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Output of the language-model probe: a manifest listing contiguous row
/// shards of raw restricted logits and last-token hidden states.
///
/// {"model_id": str, "prompt_template_sha256": str, "vocab_sha256": str,
///  "max_doc_tokens": int,
///  "shards": [{"begin": int, "end": int, "logits": path, "embeddings": path}]}
///
/// Shard paths are relative to the manifest's directory.
struct ProbeManifest {
  std::string model_id;
  std::string prompt_template_sha256;
  std::string vocab_sha256;
  std::size_t max_doc_tokens = 0;
  struct Shard {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::filesystem::path logits;
    std::filesystem::path embeddings;
  };
  std::vector<Shard> shards;
};

ProbeManifest read_probe_manifest(const std::filesystem::path& path);

struct ProbeOutputs {
  Matrix logits;
  Matrix embeddings;
};

/// Concatenates shards in row order after checking that they tile
/// [0, N) and that the vocabulary hash matches `vocab_path`.
ProbeOutputs load_probe_outputs(const std::filesystem::path& manifest_path,
                                const std::filesystem::path& vocab_path);

/// Everything a training/evaluation run may read. Optional matrices are
/// only loaded when their file exists.
struct Dataset {
  Vocabulary vocab;
  std::vector<std::string> ids;
  std::vector<std::optional<std::string>> labels;
  Matrix bow;
  std::optional<Matrix> logits;
  std::optional<Matrix> targets;
  std::optional<Matrix> embeddings;
  std::optional<Matrix> external_embeddings;

  std::size_t num_docs() const { return ids.size(); }
  bool has_labels() const;
};

/// Loads the fixed layout from `dir`. If `manifest.json` exists, logits
/// and embeddings come from the probe shards instead of the flat files.
/// Throws InputError naming any missing required file or misaligned matrix.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace softtopic
