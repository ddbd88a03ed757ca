#pragma once

// On-disk formats. Every file starts with a header line carrying the schema
// version and the config hash:
//   JSONL sequence datasets: first line {"schema": "seekmark.sequences", ...},
//     then one record object per line;
//   CSV tables: "# schema_version=1 config_hash=... key=value ..." then the
//     column header row.
// Readers reject files whose schema version differs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "seekmark/primitives.hpp"
#include "seekmark/schemes.hpp"

namespace seekmark {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSequenceSchema = "seekmark.sequences";

struct DatasetHeader {
  std::string config_hash;
  std::string scheme_id;
  /// scheme_to_json of the scheme the data was generated or attacked under;
  /// empty when unknown.
  std::string scheme_json;
  /// "watermarked", "null", "attacked" or "spoofed".
  std::string kind;
  std::string attack;
  std::uint64_t master_seed = 0;
};

struct SequenceRecord {
  std::string id;
  std::vector<TokenId> tokens;
  std::uint32_t prompt_len = 0;
  bool watermarked = false;
  std::string scheme_id;
  std::uint64_t seed = 0;
  /// Set on attack outputs.
  std::string attack;
  std::string attack_params;  // JSON object text
  std::string source_seq_id;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SequenceRecord> records;
};

/// Throws IoError when the file cannot be written.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
/// Throws IoError when the file cannot be read and ValidationError naming
/// file and line for malformed content or a schema-version mismatch.
Dataset read_dataset(const std::filesystem::path& path);

struct CsvTable {
  /// Key/value pairs of the "# ..." header line, schema_version included.
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws ValidationError when absent.
  std::size_t column(const std::string& name) const;
};

/// meta values must not contain whitespace. schema_version is added.
void write_csv(const std::filesystem::path& path, const std::map<std::string, std::string>& meta,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);
CsvTable read_csv(const std::filesystem::path& path);

/// Round-trip decimal representation of a double.
std::string format_double(double v);

std::vector<std::uint8_t> read_binary(const std::filesystem::path& path);
void write_binary(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace seekmark
