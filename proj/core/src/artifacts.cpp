// SPDX-License-Identifier: Apache-2.0
#include "softtopic/artifacts.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "softtopic/dtm.hpp"
#include "softtopic/error.hpp"

namespace softtopic {
namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Splits CSV text into records of fields (RFC 4180).
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw InputError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Matrix require_matrix(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("missing required artifact: " + path.string());
  return read_dtm1(path);
}

std::optional<Matrix> optional_matrix(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_dtm1(path);
}

void check_rows(const std::optional<Matrix>& m, std::size_t n, const std::string& what) {
  if (m && m->rows() != n)
    throw InputError(what + " has " + std::to_string(m->rows()) + " rows, corpus has " +
                     std::to_string(n));
}

}  // namespace

void write_ids(const std::filesystem::path& path, std::span<const std::string> ids) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  for (const auto& id : ids) {
    if (id.find('\n') != std::string::npos) throw InputError("document id contains a newline: " + id);
    out << id << '\n';
  }
}

std::vector<std::string> read_ids(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ids.push_back(line);
  }
  return ids;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                      std::span<const std::optional<std::string>> labels) {
  if (ids.size() != labels.size()) throw InputError("ids and labels differ in length");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out << "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (labels[i]) out << csv_field(ids[i]) << ',' << csv_field(*labels[i]) << '\n';
}

std::vector<std::optional<std::string>> read_labels_csv(const std::filesystem::path& path,
                                                        std::span<const std::string> ids) {
  const auto rows = parse_csv(read_all(path));
  if (rows.empty() || rows.front() != std::vector<std::string>{"id", "label"})
    throw InputError(path.string() + ": expected header `id,label`");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::vector<std::optional<std::string>> labels(ids.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw InputError(path.string() + ": row " + std::to_string(r) + " needs 2 fields");
    const auto it = index.find(rows[r][0]);
    if (it == index.end()) throw InputError(path.string() + ": unknown document id " + rows[r][0]);
    if (labels[it->second]) throw InputError(path.string() + ": duplicate id " + rows[r][0]);
    labels[it->second] = rows[r][1];
  }
  return labels;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_all(path)); }

ProbeManifest read_probe_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": invalid manifest: " + e.what());
  }
  ProbeManifest m;
  try {
    m.model_id = j.at("model_id").get<std::string>();
    m.prompt_template_sha256 = j.at("prompt_template_sha256").get<std::string>();
    m.vocab_sha256 = j.at("vocab_sha256").get<std::string>();
    m.max_doc_tokens = j.at("max_doc_tokens").get<std::size_t>();
    const auto base = path.parent_path();
    for (const auto& s : j.at("shards")) {
      ProbeManifest::Shard shard;
      shard.begin = s.at("begin").get<std::size_t>();
      shard.end = s.at("end").get<std::size_t>();
      shard.logits = base / s.at("logits").get<std::string>();
      shard.embeddings = base / s.at("embeddings").get<std::string>();
      m.shards.push_back(std::move(shard));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

ProbeOutputs load_probe_outputs(const std::filesystem::path& manifest_path,
                                const std::filesystem::path& vocab_path) {
  ProbeManifest m = read_probe_manifest(manifest_path);
  if (sha256_file(vocab_path) != m.vocab_sha256)
    throw InputError(manifest_path.string() + ": vocabulary hash does not match " + vocab_path.string());
  std::sort(m.shards.begin(), m.shards.end(),
            [](const auto& a, const auto& b) { return a.begin < b.begin; });
  std::vector<Matrix> logits, embeddings;
  std::size_t next = 0;
  for (const auto& s : m.shards) {
    if (s.begin != next || s.end <= s.begin)
      throw InputError(manifest_path.string() + ": shards do not tile the corpus at row " +
                       std::to_string(next));
    logits.push_back(read_dtm1(s.logits));
    embeddings.push_back(read_dtm1(s.embeddings));
    if (logits.back().rows() != s.end - s.begin || embeddings.back().rows() != s.end - s.begin)
      throw InputError(manifest_path.string() + ": shard [" + std::to_string(s.begin) + ", " +
                       std::to_string(s.end) + ") row count mismatch");
    next = s.end;
  }
  auto concat = [&](const std::vector<Matrix>& parts, const char* what) {
    if (parts.empty()) return Matrix();
    Matrix out(next, parts.front().cols());
    std::size_t r = 0;
    for (const auto& p : parts) {
      if (p.cols() != out.cols())
        throw InputError(manifest_path.string() + ": " + what + " shards disagree on width");
      for (std::size_t i = 0; i < p.rows(); ++i, ++r)
        std::copy(p.row(i).begin(), p.row(i).end(), out.row(r).begin());
    }
    return out;
  };
  return {concat(logits, "logits"), concat(embeddings, "embeddings")};
}

bool Dataset::has_labels() const {
  return std::any_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const ArtifactLayout layout(dir);
  Dataset ds;
  if (!std::filesystem::exists(layout.vocab()))
    throw InputError("missing required artifact: " + layout.vocab().string());
  ds.vocab = read_vocabulary(layout.vocab());
  if (!std::filesystem::exists(layout.ids()))
    throw InputError("missing required artifact: " + layout.ids().string());
  ds.ids = read_ids(layout.ids());
  const std::size_t n = ds.ids.size();
  ds.labels = std::filesystem::exists(layout.labels()) ? read_labels_csv(layout.labels(), ds.ids)
                                                       : std::vector<std::optional<std::string>>(n);
  ds.bow = require_matrix(layout.bow());
  if (ds.bow.rows() != n || ds.bow.cols() != ds.vocab.size())
    throw InputError(layout.bow().string() + " shape does not match ids/vocabulary");

  if (std::filesystem::exists(layout.manifest())) {
    auto probe = load_probe_outputs(layout.manifest(), layout.vocab());
    ds.logits = std::move(probe.logits);
    ds.embeddings = std::move(probe.embeddings);
  } else {
    ds.logits = optional_matrix(layout.logits());
    ds.embeddings = optional_matrix(layout.embeddings());
  }
  ds.targets = optional_matrix(layout.targets());
  ds.external_embeddings = optional_matrix(layout.external_embeddings());

  check_rows(ds.logits, n, "logits");
  check_rows(ds.targets, n, "targets");
  check_rows(ds.embeddings, n, "embeddings");
  check_rows(ds.external_embeddings, n, "external embeddings");
  if (ds.logits && ds.logits->cols() != ds.vocab.size())
    throw InputError("logits width does not match the vocabulary size");
  if (ds.targets && ds.targets->cols() != ds.vocab.size())
    throw InputError("targets width does not match the vocabulary size");
  return ds;
}

}  // namespace softtopic
