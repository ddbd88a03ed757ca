#include "seekmark/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seekmark/error.hpp"

namespace seekmark {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

[[noreturn]] void bad_line(const fs::path& path, std::size_t line, const std::string& what) {
  throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_dataset(const fs::path& path, const Dataset& data) {
  std::ofstream out = open_out(path);
  ordered_json h;
  h["schema"] = kSequenceSchema;
  h["schema_version"] = kSchemaVersion;
  h["config_hash"] = data.header.config_hash;
  h["scheme_id"] = data.header.scheme_id;
  h["scheme"] = data.header.scheme_json.empty() ? ordered_json(nullptr)
                                                : ordered_json::parse(data.header.scheme_json);
  h["kind"] = data.header.kind;
  h["attack"] = data.header.attack;
  h["master_seed"] = data.header.master_seed;
  out << h.dump() << '\n';
  for (const auto& r : data.records) {
    ordered_json j;
    j["id"] = r.id;
    j["tokens"] = r.tokens;
    j["prompt_len"] = r.prompt_len;
    j["watermarked"] = r.watermarked;
    j["scheme_id"] = r.scheme_id;
    j["seed"] = r.seed;
    if (!r.attack.empty()) {
      j["attack"] = r.attack;
      j["attack_params"] =
          r.attack_params.empty() ? ordered_json::object() : ordered_json::parse(r.attack_params);
      j["source_seq_id"] = r.source_seq_id;
    }
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset read_dataset(const fs::path& path) {
  std::ifstream in = open_in(path);
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) bad_line(path, 1, "empty file, expected a header line");
  ++lineno;
  try {
    const auto h = nlohmann::json::parse(line);
    if (!h.is_object() || h.value("schema", std::string()) != kSequenceSchema)
      bad_line(path, lineno, "missing dataset header");
    if (h.value("schema_version", -1) != kSchemaVersion)
      bad_line(path, lineno,
               "schema_version mismatch (expected " + std::to_string(kSchemaVersion) + ")");
    data.header.config_hash = h.value("config_hash", std::string());
    data.header.scheme_id = h.value("scheme_id", std::string());
    if (h.contains("scheme") && !h["scheme"].is_null()) data.header.scheme_json = h["scheme"].dump();
    data.header.kind = h.value("kind", std::string());
    data.header.attack = h.value("attack", std::string());
    data.header.master_seed = h.value("master_seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    bad_line(path, lineno, std::string("malformed header: ") + e.what());
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SequenceRecord r;
      r.id = j.at("id").get<std::string>();
      r.tokens = j.at("tokens").get<std::vector<TokenId>>();
      r.prompt_len = j.at("prompt_len").get<std::uint32_t>();
      r.watermarked = j.at("watermarked").get<bool>();
      r.scheme_id = j.value("scheme_id", std::string());
      r.seed = j.value("seed", std::uint64_t{0});
      r.attack = j.value("attack", std::string());
      if (j.contains("attack_params")) r.attack_params = j["attack_params"].dump();
      r.source_seq_id = j.value("source_seq_id", std::string());
      if (r.prompt_len > r.tokens.size()) bad_line(path, lineno, "prompt_len exceeds tokens");
      data.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      bad_line(path, lineno, std::string("malformed record: ") + e.what());
    }
  }
  return data;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw ValidationError("csv: missing column '" + name + "'");
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v[i];
  }
  return out;
}

}  // namespace

void write_csv(const fs::path& path, const std::map<std::string, std::string>& meta,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out = open_out(path);
  out << "# schema_version=" << kSchemaVersion;
  for (const auto& [k, v] : meta)
    if (k != "schema_version") out << ' ' << k << '=' << v;
  out << '\n' << join(columns) << '\n';
  for (const auto& r : rows) out << join(r) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
    bad_line(path, 1, "missing '# schema_version=...' header line");
  std::istringstream meta(line.substr(2));
  std::string kv;
  while (meta >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) bad_line(path, 1, "malformed header entry '" + kv + "'");
    t.meta[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (t.meta["schema_version"] != std::to_string(kSchemaVersion))
    bad_line(path, 1, "schema_version mismatch (expected " + std::to_string(kSchemaVersion) + ")");
  if (!std::getline(in, line)) bad_line(path, 2, "missing column header");
  t.columns = split(line, ',');
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto row = split(line, ',');
    if (row.size() != t.columns.size())
      bad_line(path, lineno, "expected " + std::to_string(t.columns.size()) + " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<std::uint8_t> read_binary(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_binary(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace seekmark
