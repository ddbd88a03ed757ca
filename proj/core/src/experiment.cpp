#include "seekmark/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "seekmark/detect.hpp"
#include "seekmark/error.hpp"
#include "seekmark/parallel.hpp"

namespace seekmark {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(where + ": malformed JSON: " + e.what());
  }
}

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <class T>
T field(const json& j, const char* key, T fallback, const std::string& path) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw ValidationError(path + "." + key + ": wrong type");
  }
}

const std::set<std::string> kAttackKinds{"scrub", "copypaste", "spoof"};

}  // namespace

void ExperimentConfig::validate() const {
  if (model.source.vocab_size < 2) throw ValidationError("config.model.vocab_size: must be >= 2");
  if (model.source.num_sequences < 1)
    throw ValidationError("config.model.corpus_sequences: must be >= 1");
  if (model.source.sequence_length < 2)
    throw ValidationError("config.model.corpus_length: must be >= 2");
  if (!(model.smoothing_alpha > 0.0))
    throw ValidationError("config.model.smoothing_alpha: must be positive");
  if (!(model.temperature > 0.0)) throw ValidationError("config.model.temperature: must be positive");
  if (!(model.repetition_penalty > 0.0))
    throw ValidationError("config.model.repetition_penalty: must be positive");
  if (schemes.empty()) throw ValidationError("config.schemes: at least one scheme required");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < schemes.size(); ++i) {
    const std::string path = "config.schemes[" + std::to_string(i) + "]";
    try {
      schemes[i].validate();
    } catch (const ValidationError& e) {
      throw ValidationError(path + "." + std::string(e.what()).substr(7));
    }
    if (schemes[i].vocab_size != model.source.vocab_size)
      throw ValidationError(path + ".vocab_size: differs from config.model.vocab_size");
    if (!ids.insert(sanitize(schemes[i].scheme_id())).second)
      throw ValidationError(path + ".id: duplicate scheme id '" + schemes[i].scheme_id() + "'");
    if (prompt_len < std::max(schemes[i].window, 1u))
      throw ValidationError("config.corpus.prompt_len: shorter than " + path + ".window_size");
  }
  if (sequences < 1) throw ValidationError("config.corpus.sequences: must be >= 1");
  if (new_tokens < 1) throw ValidationError("config.corpus.new_tokens: must be >= 1");
  if (winmax_min_len < 1) throw ValidationError("config.detection.winmax_min_len: must be >= 1");
  std::set<std::string> names;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const std::string path = "config.attacks[" + std::to_string(i) + "]";
    if (attacks[i].name.empty()) throw ValidationError(path + ".name: missing");
    if (!names.insert(sanitize(attacks[i].name)).second)
      throw ValidationError(path + ".name: duplicate attack name");
    if (attacks[i].name == "wm" || attacks[i].name == "null")
      throw ValidationError(path + ".name: reserved name");
    if (!kAttackKinds.count(attacks[i].kind))
      throw ValidationError(path + ".kind: expected scrub, copypaste or spoof");
    if (!parse_json(attacks[i].params, path + ".params").is_object())
      throw ValidationError(path + ".params: expected an object");
  }
  for (double f : fprs)
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("config.calibration.fprs: values in (0, 1]");
}

ExperimentConfig config_from_json(const std::string& text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  ExperimentConfig c;
  c.master_seed = field(j, "master_seed", c.master_seed, "config");
  c.output_dir = field(j, "output_dir", c.output_dir, "config");
  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) throw ValidationError("config.model: expected an object");
    const std::string p = "config.model";
    c.model.source.vocab_size = field(m, "vocab_size", c.model.source.vocab_size, p);
    c.model.source.zipf_exponent = field(m, "zipf_exponent", c.model.source.zipf_exponent, p);
    c.model.source.num_sequences = field(m, "corpus_sequences", c.model.source.num_sequences, p);
    c.model.source.sequence_length = field(m, "corpus_length", c.model.source.sequence_length, p);
    c.model.smoothing_alpha = field(m, "smoothing_alpha", c.model.smoothing_alpha, p);
    c.model.temperature = field(m, "temperature", c.model.temperature, p);
    c.model.repetition_penalty = field(m, "repetition_penalty", c.model.repetition_penalty, p);
  }
  if (!j.contains("schemes") || !j["schemes"].is_array())
    throw ValidationError("config.schemes: expected an array");
  for (std::size_t i = 0; i < j["schemes"].size(); ++i) {
    json s = j["schemes"][i];
    if (!s.is_object())
      throw ValidationError("config.schemes[" + std::to_string(i) + "]: expected an object");
    if (!s.contains("vocab_size")) s["vocab_size"] = c.model.source.vocab_size;
    try {
      c.schemes.push_back(scheme_from_json(s.dump()));
    } catch (const ValidationError& e) {
      std::string msg = e.what();
      if (msg.rfind("scheme", 0) == 0) msg = msg.substr(6);
      if (!msg.empty() && msg[0] != '.') msg = ": " + msg;
      throw ValidationError("config.schemes[" + std::to_string(i) + "]" + msg);
    }
  }
  if (j.contains("corpus")) {
    const json& k = j["corpus"];
    c.sequences = field(k, "sequences", c.sequences, "config.corpus");
    c.prompt_len = field(k, "prompt_len", c.prompt_len, "config.corpus");
    c.new_tokens = field(k, "new_tokens", c.new_tokens, "config.corpus");
  }
  if (j.contains("attacks")) {
    if (!j["attacks"].is_array()) throw ValidationError("config.attacks: expected an array");
    for (std::size_t i = 0; i < j["attacks"].size(); ++i) {
      const json& a = j["attacks"][i];
      const std::string p = "config.attacks[" + std::to_string(i) + "]";
      if (!a.is_object()) throw ValidationError(p + ": expected an object");
      AttackSpec s;
      s.kind = field(a, "kind", std::string(), p);
      s.name = field(a, "name", s.kind, p);
      s.params = a.contains("params") ? a["params"].dump() : "{}";
      c.attacks.push_back(s);
    }
  }
  if (j.contains("detection")) {
    c.winmax_min_len = field(j["detection"], "winmax_min_len", c.winmax_min_len, "config.detection");
    c.dedup = field(j["detection"], "dedup", c.dedup, "config.detection");
  }
  if (j.contains("calibration"))
    c.fprs = field(j["calibration"], "fprs", c.fprs, "config.calibration");
  c.validate();
  return c;
}

std::string config_to_json(const ExperimentConfig& c, bool include_output_dir) {
  json j;
  j["master_seed"] = c.master_seed;
  if (include_output_dir) j["output_dir"] = c.output_dir;
  j["model"] = {{"vocab_size", c.model.source.vocab_size},
                {"zipf_exponent", c.model.source.zipf_exponent},
                {"corpus_sequences", c.model.source.num_sequences},
                {"corpus_length", c.model.source.sequence_length},
                {"smoothing_alpha", c.model.smoothing_alpha},
                {"temperature", c.model.temperature},
                {"repetition_penalty", c.model.repetition_penalty}};
  j["schemes"] = json::array();
  for (const auto& s : c.schemes) j["schemes"].push_back(json::parse(scheme_to_json(s)));
  j["corpus"] = {{"sequences", c.sequences},
                 {"prompt_len", c.prompt_len},
                 {"new_tokens", c.new_tokens}};
  j["attacks"] = json::array();
  for (const auto& a : c.attacks)
    j["attacks"].push_back({{"name", a.name}, {"kind", a.kind}, {"params", json::parse(a.params)}});
  j["detection"] = {{"winmax_min_len", c.winmax_min_len}, {"dedup", c.dedup}};
  j["calibration"] = {{"fprs", c.fprs}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(config_to_json(cfg, false)));
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json(read_text(path)); }

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["artifact_version"] = artifact_version;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : stages)
    j["stages"].push_back({{"name", s.name}, {"files", s.files}, {"seconds", s.seconds}});
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  const json j = parse_json(text, "manifest");
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.artifact_version = j.value("artifact_version", std::string());
    for (const auto& s : j.at("stages"))
      m.stages.push_back({s.at("name").get<std::string>(),
                          s.at("files").get<std::vector<std::string>>(),
                          s.value("seconds", 0.0)});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

void record_stage(const fs::path& run_dir, const std::string& hash, const StageRecord& stage) {
  const fs::path path = run_dir / "manifest.json";
  RunManifest m;
  if (fs::exists(path)) {
    m = RunManifest::from_json(read_text(path));
    if (m.config_hash != hash) m = RunManifest{};
  }
  m.config_hash = hash;
  auto it = std::find_if(m.stages.begin(), m.stages.end(),
                         [&](const StageRecord& s) { return s.name == stage.name; });
  if (it != m.stages.end()) {
    *it = stage;
  } else {
    m.stages.push_back(stage);
  }
  write_text(path, m.to_json());
}

void save_model(const fs::path& path, const ToyModel& model, const std::string& hash) {
  const std::string header = "seekmark-toy-model schema_version=" +
                             std::to_string(kSchemaVersion) + " config_hash=" + hash + "\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const auto payload = model.serialize();
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  write_binary(path, bytes);
}

ToyModel load_model(const fs::path& path) {
  const auto bytes = read_binary(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  const std::string header(bytes.begin(), nl);
  if (nl == bytes.end() || header.rfind("seekmark-toy-model ", 0) != 0)
    throw ValidationError(path.string() + ":1: not a seekmark model file");
  if (header.find("schema_version=" + std::to_string(kSchemaVersion) + " ") == std::string::npos)
    throw ValidationError(path.string() + ":1: schema_version mismatch");
  return ToyModel::deserialize(std::span<const std::uint8_t>(&*(nl + 1), bytes.end() - nl - 1));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string rel(const fs::path& p, const fs::path& base) {
  return fs::relative(p, base).generic_string();
}

ModelParams seeded_model_params(const ExperimentConfig& cfg) {
  ModelParams p = cfg.model;
  p.source.seed = child_seed(cfg.master_seed, "model", 0);
  return p;
}

std::vector<TokenId> eval_prompt(const ToyModel& model, const ExperimentConfig& cfg,
                                 std::size_t i) {
  return sample_prompt(model, cfg.prompt_len, child_seed(cfg.master_seed, "prompt", i));
}

Dataset watermarked_corpus(const ToyModel& model, const SchemeSpec& spec,
                           const ExperimentConfig& cfg, const std::string& hash,
                           unsigned workers) {
  Dataset d;
  const std::string id = spec.scheme_id();
  d.header = {hash, id, scheme_to_json(spec), "watermarked", "", cfg.master_seed};
  d.records.resize(cfg.sequences);
  parallel_for(cfg.sequences, workers, [&](std::size_t i) {
    const auto prompt = eval_prompt(model, cfg, i);
    const std::uint64_t seed = child_seed(cfg.master_seed, "generate/" + id + "/wm", i);
    GenerationResult g = generate(model, spec, prompt, cfg.new_tokens, seed);
    auto& r = d.records[i];
    r.id = id + "/wm/" + std::to_string(i);
    r.tokens = std::move(g.tokens);
    r.prompt_len = g.prompt_len;
    r.watermarked = true;
    r.scheme_id = id;
    r.seed = seed;
  });
  return d;
}

Dataset null_corpus(const ToyModel& model, const SchemeSpec& spec, const ExperimentConfig& cfg,
                    const std::string& hash, unsigned workers) {
  Dataset d;
  const std::string id = spec.scheme_id();
  d.header = {hash, id, scheme_to_json(spec), "null", "", cfg.master_seed};
  d.records.resize(cfg.sequences);
  parallel_for(cfg.sequences, workers, [&](std::size_t i) {
    const auto prompt = eval_prompt(model, cfg, i);
    const std::uint64_t seed = child_seed(cfg.master_seed, "generate/null", i);
    auto& r = d.records[i];
    r.id = "null/" + std::to_string(i);
    r.tokens = generate_plain(model, prompt, cfg.new_tokens, seed);
    r.prompt_len = static_cast<std::uint32_t>(prompt.size());
    r.watermarked = false;
    r.scheme_id = id;
    r.seed = seed;
  });
  return d;
}

std::uint8_t parse_kinds(const json& p) {
  if (!p.contains("kinds")) return static_cast<std::uint8_t>(EditKind::Substitute);
  std::uint8_t k = 0;
  for (const auto& s : p["kinds"]) {
    const std::string name = s.get<std::string>();
    if (name == "substitute") {
      k |= static_cast<std::uint8_t>(EditKind::Substitute);
    } else if (name == "delete") {
      k |= static_cast<std::uint8_t>(EditKind::Delete);
    } else if (name == "insert") {
      k |= static_cast<std::uint8_t>(EditKind::Insert);
    } else {
      throw ValidationError("attack.kinds: unknown edit kind '" + name + "'");
    }
  }
  return k;
}

SchemeSpec dataset_scheme(const Dataset& d, const fs::path& path) {
  if (d.header.scheme_json.empty())
    throw ValidationError(path.string() + ":1: dataset header carries no scheme");
  return scheme_from_json(d.header.scheme_json);
}

Dataset scrub_dataset(const Dataset& src, const std::string& name, const json& params,
                      std::uint32_t vocab_size, std::uint64_t seed, unsigned workers) {
  ScrubConfig base;
  base.edit_rate = params.value("edit_rate", base.edit_rate);
  base.kinds = parse_kinds(params);
  base.vocab_size = vocab_size;
  Dataset out;
  out.header = src.header;
  out.header.kind = "attacked";
  out.header.attack = name;
  out.records.resize(src.records.size());
  const std::string pj = params.dump();
  parallel_for(src.records.size(), workers, [&](std::size_t i) {
    const auto& in = src.records[i];
    ScrubConfig c = base;
    c.rng_seed = child_seed(seed, "scrub", i);
    TokenSequence s = scrub(TokenSequence{in.tokens, in.prompt_len}, c);
    auto& r = out.records[i];
    r = in;
    r.id = in.id + "/" + name;
    r.tokens = std::move(s.tokens);
    r.seed = c.rng_seed;
    r.attack = name;
    r.attack_params = pj;
    r.source_seq_id = in.id;
  });
  return out;
}

Dataset copypaste_dataset(const Dataset& wm, const Dataset& host, const std::string& name,
                          const json& params, std::uint64_t seed, unsigned workers) {
  CopyPasteSpec spec;
  spec.m_slots = params.value("m_slots", spec.m_slots);
  spec.p_fraction = params.value("p_fraction", spec.p_fraction);
  const std::size_t n = std::min(wm.records.size(), host.records.size());
  Dataset out;
  out.header = wm.header;
  out.header.kind = "attacked";
  out.header.attack = name;
  out.records.resize(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& w = wm.records[i];
    const auto& h = host.records[i];
    const std::uint64_t s = child_seed(seed, "copypaste", i);
    const std::span<const TokenId> ht(h.tokens);
    const CopyPasteResult cp = copy_paste(std::span<const TokenId>(w.tokens).subspan(w.prompt_len),
                                          ht.subspan(h.prompt_len), spec, s);
    auto& r = out.records[i];
    r.id = w.id + "/" + name;
    r.tokens.assign(h.tokens.begin(), h.tokens.begin() + h.prompt_len);
    r.tokens.insert(r.tokens.end(), cp.tokens.begin(), cp.tokens.end());
    r.prompt_len = h.prompt_len;
    r.watermarked = true;
    r.scheme_id = w.scheme_id;
    r.seed = s;
    r.attack = name;
    json p = params;
    p.erase("host");
    p["spans"] = cp.spans;
    r.attack_params = p.dump();
    r.source_seq_id = w.id;
  });
  return out;
}

struct SpoofParams {
  std::uint32_t attacker_h;
  double ratio_threshold;
  double pseudo_count;
  double spoof_delta;
};

SpoofParams spoof_params(const json& p, const SchemeSpec& victim) {
  SpoofParams s{};
  s.attacker_h = p.contains("attacker_h") && !p["attacker_h"].is_null()
                     ? p["attacker_h"].get<std::uint32_t>()
                     : std::max(victim.window, 1u);
  s.ratio_threshold = p.value("ratio_threshold", kDefaultSpoofRatio);
  s.pseudo_count = p.value("pseudo_count", kDefaultSpoofPseudoCount);
  s.spoof_delta = p.value("spoof_delta", victim.delta);
  return s;
}

std::vector<TokenSequence> as_sequences(const Dataset& d) {
  std::vector<TokenSequence> out;
  out.reserve(d.records.size());
  for (const auto& r : d.records) out.push_back({r.tokens, r.prompt_len});
  return out;
}

Dataset spoof_dataset(const SpoofModel& sm, const ToyModel& model, const SchemeSpec& victim,
                      const DatasetHeader& header, const std::string& name, const json& params,
                      const SpoofParams& sp, std::uint32_t n, std::uint32_t prompt_len,
                      std::uint32_t new_tokens, std::uint64_t prompt_master, std::uint64_t seed,
                      unsigned workers) {
  Dataset out;
  out.header = header;
  out.header.kind = "spoofed";
  out.header.attack = name;
  out.header.scheme_id = victim.scheme_id();
  out.header.scheme_json = scheme_to_json(victim);
  out.records.resize(n);
  json p = params;
  p.erase("model");
  p.erase("base");
  p["attacker_h"] = sp.attacker_h;
  p["spoof_delta"] = sp.spoof_delta;
  p["estimates"] = sm.estimate_count();
  const std::string pj = p.dump();
  parallel_for(n, workers, [&](std::size_t i) {
    const auto prompt = sample_prompt(model, std::max(prompt_len, std::max(sp.attacker_h, 1u)),
                                      child_seed(prompt_master, "prompt", i));
    const std::uint64_t s = child_seed(seed, "spoof", i);
    auto& r = out.records[i];
    r.id = victim.scheme_id() + "/" + name + "/" + std::to_string(i);
    r.tokens = spoof_generate(sm, model, sp.spoof_delta, prompt, new_tokens, s);
    r.prompt_len = static_cast<std::uint32_t>(prompt.size());
    r.watermarked = false;
    r.scheme_id = victim.scheme_id();
    r.seed = s;
    r.attack = name;
    r.attack_params = pj;
  });
  return out;
}

const std::vector<std::string> kDetectColumns{"scheme_id", "seq_id",       "T",
                                              "green_count", "z",          "p_value",
                                              "winmax_z",  "winmax_start", "winmax_end"};

std::vector<std::vector<std::string>> detect_rows(const Dataset& d, const SchemeSpec& spec,
                                                  std::uint32_t min_len, bool dedup,
                                                  unsigned workers) {
  std::vector<std::vector<std::string>> rows(d.records.size());
  const std::string id = spec.scheme_id();
  parallel_for(d.records.size(), workers, [&](std::size_t i) {
    const auto& r = d.records[i];
    const DetectionReport rep = detect(r.tokens, r.prompt_len, spec, min_len, dedup);
    rows[i] = {id,
               r.id,
               std::to_string(rep.t_scored),
               std::to_string(rep.green_count),
               format_double(rep.z),
               format_double(rep.p_value),
               format_double(rep.winmax_z),
               std::to_string(rep.winmax_start),
               std::to_string(rep.winmax_end)};
  });
  return rows;
}

std::string attack_kind_of(const Dataset& d) {
  if (d.header.kind == "spoofed") return "spoof";
  if (d.records.empty() || d.records.front().attack.empty()) return "none";
  const json p = json::parse(d.records.front().attack_params.empty()
                                 ? "{}"
                                 : d.records.front().attack_params);
  if (p.contains("spans")) return "copypaste";
  return "scrub";
}

void write_detection(const fs::path& out, const Dataset& d, const SchemeSpec& spec,
                     const std::string& dataset_name, std::uint32_t min_len, bool dedup,
                     unsigned workers) {
  std::map<std::string, std::string> meta{{"config_hash", d.header.config_hash},
                                          {"scheme_id", sanitize(spec.scheme_id())},
                                          {"kind", d.header.kind},
                                          {"attack", d.header.attack.empty() ? "none"
                                                                             : sanitize(d.header.attack)},
                                          {"attack_kind", attack_kind_of(d)},
                                          {"dataset", dataset_name},
                                          {"winmax_min_len", std::to_string(min_len)}};
  write_csv(out, meta, kDetectColumns, detect_rows(d, spec, min_len, dedup, workers));
}

std::vector<double> column_doubles(const CsvTable& t, const std::string& name) {
  const std::size_t c = t.column(name);
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    try {
      out.push_back(std::stod(r[c]));
    } catch (const std::exception&) {
      throw ValidationError("csv: non-numeric value in column '" + name + "'");
    }
  }
  return out;
}

fs::path write_calibration(const fs::path& out, const CsvTable& null_table,
                           const std::vector<double>& fprs) {
  std::vector<std::vector<std::string>> rows;
  for (const char* score : {"z", "winmax_z"}) {
    const auto s = column_doubles(null_table, score);
    for (double f : fprs) {
      const CalibrationResult c = calibrate(s, f);
      rows.push_back({score, format_double(f), format_double(c.threshold),
                      format_double(c.achieved_fpr), std::to_string(c.n_null),
                      c.undersized ? "true" : "false"});
    }
  }
  std::map<std::string, std::string> meta = null_table.meta;
  meta.erase("winmax_min_len");
  meta["kind"] = "calibration";
  write_csv(out, meta, {"score", "target_fpr", "threshold", "achieved_fpr", "n_null", "undersized"},
            rows);
  return out;
}

}  // namespace

std::vector<fs::path> cmd_generate(const ExperimentConfig& cfg, unsigned workers) {
  cfg.validate();
  const auto t0 = Clock::now();
  const fs::path root = cfg.output_dir;
  const std::string hash = config_hash(cfg);
  write_text(root / "config.json", config_to_json(cfg, false) + "\n");
  const ToyModel model = build_toy_model(seeded_model_params(cfg));
  std::vector<fs::path> files{root / "model.bin"};
  save_model(files.back(), model, hash);
  for (const auto& spec : cfg.schemes) {
    const std::string id = sanitize(spec.scheme_id());
    files.push_back(root / "data" / (id + ".wm.jsonl"));
    write_dataset(files.back(), watermarked_corpus(model, spec, cfg, hash, workers));
    files.push_back(root / "data" / (id + ".null.jsonl"));
    write_dataset(files.back(), null_corpus(model, spec, cfg, hash, workers));
  }
  StageRecord st{"generate", {}, seconds_since(t0)};
  for (const auto& f : files) st.files.push_back(rel(f, root));
  record_stage(root, hash, st);
  return files;
}

fs::path cmd_detect(const fs::path& data, const std::string& scheme, const fs::path& out,
                    unsigned workers, std::uint32_t min_len, bool dedup) {
  const Dataset d = read_dataset(data);
  SchemeSpec spec;
  if (!scheme.empty() && fs::is_regular_file(scheme)) {
    spec = scheme_from_json(read_text(scheme));
    if (!d.header.scheme_id.empty() && spec.scheme_id() != d.header.scheme_id)
      throw ValidationError("scheme-id mismatch: dataset " + data.string() + " was produced under '" +
                            d.header.scheme_id + "', detector scheme is '" + spec.scheme_id() + "'");
  } else {
    spec = dataset_scheme(d, data);
    if (!scheme.empty() && scheme != d.header.scheme_id)
      throw ValidationError("scheme-id mismatch: dataset " + data.string() + " was produced under '" +
                            d.header.scheme_id + "', requested '" + scheme + "'");
  }
  write_detection(out, d, spec, data.filename().string(), min_len, dedup, workers);
  return out;
}

fs::path cmd_attack(const fs::path& data, const std::string& kind, const std::string& params,
                    const fs::path& out, std::uint64_t seed, unsigned workers) {
  const json p = parse_json(params, "attack.params");
  if (!p.is_object()) throw ValidationError("attack.params: expected an object");
  const Dataset d = read_dataset(data);
  const SchemeSpec spec = dataset_scheme(d, data);
  const std::string name = p.value("name", kind);
  Dataset result;
  try {
    if (kind == "scrub") {
      result = scrub_dataset(d, name, p, spec.vocab_size, seed, workers);
    } else if (kind == "copypaste") {
      if (!p.contains("host")) throw ValidationError("attack.params.host: missing");
      const Dataset host = read_dataset(p["host"].get<std::string>());
      result = copypaste_dataset(d, host, name, p, seed, workers);
    } else if (kind == "spoof") {
      if (!p.contains("model") || !p.contains("base"))
        throw ValidationError("attack.params: spoof requires 'model' and 'base' paths");
      const ToyModel model = load_model(p["model"].get<std::string>());
      const Dataset base = read_dataset(p["base"].get<std::string>());
      const SpoofParams sp = spoof_params(p, spec);
      const SpoofModel sm = spoof_learn(as_sequences(d), as_sequences(base), model.vocab_size(),
                                        sp.attacker_h, sp.ratio_threshold, sp.pseudo_count);
      const auto n = p.value("sequences", static_cast<std::uint32_t>(d.records.size()));
      const auto plen = p.value("prompt_len", d.records.empty() ? 16u : d.records[0].prompt_len);
      const std::uint32_t gen = d.records.empty() ? 200u
                                                  : static_cast<std::uint32_t>(
                                                        d.records[0].tokens.size() -
                                                        d.records[0].prompt_len);
      result = spoof_dataset(sm, model, spec, d.header, name, p, sp, n, plen,
                             p.value("new_tokens", gen), seed, seed, workers);
    } else {
      throw ValidationError("attack.kind: expected scrub, copypaste or spoof");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("attack.params: wrong type: ") + e.what());
  }
  write_dataset(out, result);
  return out;
}

fs::path cmd_calibrate(const fs::path& null, const std::vector<double>& fprs, const fs::path& out,
                       unsigned workers) {
  if (fprs.empty()) throw ValidationError("calibrate: no target FPRs given");
  if (null.extension() == ".jsonl") {
    const Dataset d = read_dataset(null);
    const SchemeSpec spec = dataset_scheme(d, null);
    const fs::path tmp = out.parent_path() / (null.stem().string() + ".detect.csv");
    write_detection(tmp, d, spec, null.filename().string(), kDefaultWinMaxMinLen, false, workers);
    return write_calibration(out, read_csv(tmp), fprs);
  }
  return write_calibration(out, read_csv(null), fprs);
}

VerifyGrid grid_from_json(const std::string& text) {
  VerifyGrid g;
  if (text.empty()) return g;
  const json j = parse_json(text, "grid");
  if (!j.is_object()) throw ValidationError("grid: expected an object");
  g.hs = field(j, "hs", g.hs, "grid");
  g.ds = field(j, "ds", g.ds, "grid");
  g.gammas = field(j, "gammas", g.gammas, "grid");
  g.v_size = field(j, "v_size", g.v_size, "grid");
  g.trials = field(j, "trials", g.trials, "grid");
  g.seed = field(j, "seed", g.seed, "grid");
  for (auto h : g.hs)
    if (h < 1) throw ValidationError("grid.hs: values must be >= 1");
  for (auto d : g.ds)
    if (d < 1) throw ValidationError("grid.ds: values must be >= 1");
  for (double x : g.gammas)
    if (!(x > 0.0 && x < 1.0)) throw ValidationError("grid.gammas: values in (0, 1)");
  if (g.trials < 1) throw ValidationError("grid.trials: must be >= 1");
  if (g.v_size < 1) throw ValidationError("grid.v_size: must be >= 1");
  return g;
}

fs::path cmd_verify_props(const std::string& grid_json, const fs::path& out, unsigned workers) {
  const VerifyGrid g = grid_from_json(grid_json);
  const auto reports = verify_props(g, workers);
  std::ostringstream ss;
  ss << "# schema_version=" << kSchemaVersion << " config_hash=" << hex64(fnv1a64(grid_json))
     << " kind=verify-props trials=" << g.trials << " seed=" << g.seed << "\n"
     << proposition_csv_header() << "\n";
  for (const auto& r : reports) ss << proposition_csv_row(r) << "\n";
  write_text(out, ss.str());
  return out;
}

namespace {

struct DetectFile {
  CsvTable table;
  std::string scheme, kind, attack, attack_kind;
};

std::string fmt_num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string text_table(const std::vector<std::string>& cols,
                       const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    w[c] = cols[c].size();
    for (const auto& r : rows) w[c] = std::max(w[c], r[c].size());
  }
  std::ostringstream ss;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      ss << (c ? "  " : "") << r[c];
      if (c + 1 < r.size()) ss << std::string(w[c] - r[c].size(), ' ');
    }
    ss << "\n";
  };
  line(cols);
  std::vector<std::string> rule;
  for (auto x : w) rule.push_back(std::string(x, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
  return ss.str();
}

}  // namespace

std::vector<fs::path> cmd_report(const fs::path& run_dir) {
  const fs::path dir = run_dir / "detect";
  std::vector<fs::path> paths;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".csv") paths.push_back(e.path());
  if (paths.empty()) throw ValidationError("no stage outputs found");
  std::sort(paths.begin(), paths.end());

  std::vector<DetectFile> files;
  for (const auto& p : paths) {
    DetectFile f{read_csv(p), "", "", "", ""};
    f.scheme = f.table.meta["scheme_id"];
    f.kind = f.table.meta["kind"];
    f.attack = f.table.meta["attack"];
    f.attack_kind = f.table.meta["attack_kind"];
    files.push_back(std::move(f));
  }
  const std::string hash = files.front().table.meta["config_hash"];

  std::vector<std::vector<std::string>> det_rows, spoof_rows, roc_rows, scatter_rows;
  std::vector<std::string> notes;
  std::set<std::string> schemes;
  for (const auto& f : files) schemes.insert(f.scheme);
  for (const auto& s : schemes) {
    const DetectFile* null = nullptr;
    for (const auto& f : files)
      if (f.scheme == s && f.kind == "null") null = &f;
    if (null == nullptr) {
      notes.push_back("scheme " + s + ": no null detection output, skipped");
      continue;
    }
    double scrub_z = std::nan("");
    std::string scrub_name = "none", spoof_name = "none";
    double spoof_fpr = std::nan("");
    for (const auto& f : files) {
      if (f.scheme != s || f.kind == "null") continue;
      for (const char* score : {"z", "winmax_z"}) {
        const auto neg = column_doubles(null->table, score);
        const auto pos = column_doubles(f.table, score);
        if (pos.empty()) continue;
        if (f.kind == "spoofed") {
          const double t3 = calibrate(neg, 0.001).threshold;
          const double t2 = calibrate(neg, 0.01).threshold;
          spoof_rows.push_back({s, f.attack, score, std::to_string(pos.size()),
                                fmt_num(flag_rate(pos, t3)), fmt_num(flag_rate(pos, t2)),
                                fmt_num(mean_of(pos))});
          if (std::string(score) == "z" && spoof_name == "none") {
            spoof_name = f.attack;
            spoof_fpr = flag_rate(pos, t2);
          }
          continue;
        }
        const RocMetrics m = roc_metrics(pos, neg);
        det_rows.push_back({s, f.attack, score, std::to_string(pos.size()),
                            std::to_string(neg.size()), fmt_num(m.auroc), fmt_num(m.tp_at.at(0.01)),
                            fmt_num(m.tp_at.at(0.05)), fmt_num(mean_of(pos))});
        for (const auto& pt : roc_curve(pos, neg))
          roc_rows.push_back({s, f.attack, score, format_double(pt.threshold),
                              format_double(pt.fpr), format_double(pt.tpr)});
        if (std::string(score) == "z" && f.attack_kind == "scrub" && scrub_name == "none") {
          scrub_name = f.attack;
          scrub_z = mean_of(pos);
        }
      }
    }
    scatter_rows.push_back({s, scrub_name, fmt_num(scrub_z, 6), spoof_name,
                            fmt_num(spoof_fpr, 6)});
  }

  const fs::path out = run_dir / "report";
  const std::map<std::string, std::string> meta{{"config_hash", hash}, {"kind", "report"}};
  const std::vector<std::string> det_cols{"scheme_id", "attack", "score", "n_pos", "n_neg",
                                          "auroc", "tp@0.01", "tp@0.05", "mean_score"};
  const std::vector<std::string> spoof_cols{"scheme_id", "attack", "score", "n",
                                            "fpr@0.001", "fpr@0.01", "mean_score"};
  const std::vector<std::string> scatter_cols{"scheme_id", "scrub_attack", "scrub_mean_z",
                                              "spoof_attack", "spoof_fpr@0.01"};
  std::vector<fs::path> written{out / "detection.csv", out / "spoofing.csv",
                                out / "roc_points.csv", out / "scrub_spoof.csv",
                                out / "summary.txt"};
  write_csv(written[0], meta, det_cols, det_rows);
  write_csv(written[1], meta, spoof_cols, spoof_rows);
  write_csv(written[2], meta,
            {"scheme_id", "attack", "score", "threshold", "fpr", "tpr"}, roc_rows);
  write_csv(written[3], meta, scatter_cols, scatter_rows);

  std::ostringstream txt;
  txt << "# schema_version=" << kSchemaVersion << " config_hash=" << hash << " kind=report\n\n";
  txt << "Detection (positives vs null corpus)\n\n" << text_table(det_cols, det_rows) << "\n";
  txt << "Spoofing (fraction of spoofed texts flagged)\n\n"
      << text_table(spoof_cols, spoof_rows) << "\n";
  txt << "Scrub vs spoof\n\n" << text_table(scatter_cols, scatter_rows);
  const fs::path qdir = run_dir / "quality";
  if (fs::is_directory(qdir)) {
    std::vector<fs::path> qs;
    for (const auto& e : fs::directory_iterator(qdir)) qs.push_back(e.path());
    std::sort(qs.begin(), qs.end());
    std::vector<std::vector<std::string>> qrows;
    std::vector<std::string> qcols;
    for (const auto& q : qs) {
      const CsvTable t = read_csv(q);
      qcols = t.columns;
      qrows.insert(qrows.end(), t.rows.begin(), t.rows.end());
    }
    if (!qrows.empty()) txt << "\nText quality\n\n" << text_table(qcols, qrows);
  }
  for (const auto& n : notes) txt << "\nnote: " << n;
  write_text(written[4], txt.str());
  return written;
}

RunManifest run_pipeline(const ExperimentConfig& cfg, unsigned workers) {
  cfg.validate();
  const fs::path root = cfg.output_dir;
  const std::string hash = config_hash(cfg);
  RunManifest manifest;
  manifest.config_hash = hash;
  auto stage = [&](const std::string& name, auto&& body) {
    const auto t0 = Clock::now();
    std::vector<fs::path> files;
    body(files);
    StageRecord st{name, {}, seconds_since(t0)};
    for (const auto& f : files) st.files.push_back(rel(f, root));
    manifest.stages.push_back(st);
  };

  std::error_code ec;
  fs::remove(root / "manifest.json", ec);
  ToyModel model = build_toy_model(ModelParams{});  // replaced below
  std::map<std::string, Dataset> wm, null;
  std::vector<std::pair<fs::path, Dataset>> datasets;

  stage("generate", [&](std::vector<fs::path>& files) {
    write_text(root / "config.json", config_to_json(cfg, false) + "\n");
    files.push_back(root / "config.json");
    model = build_toy_model(seeded_model_params(cfg));
    files.push_back(root / "model.bin");
    save_model(files.back(), model, hash);
    for (const auto& spec : cfg.schemes) {
      const std::string id = sanitize(spec.scheme_id());
      wm[id] = watermarked_corpus(model, spec, cfg, hash, workers);
      null[id] = null_corpus(model, spec, cfg, hash, workers);
      for (const auto* kind : {"wm", "null"}) {
        const Dataset& d = std::string(kind) == "wm" ? wm[id] : null[id];
        files.push_back(root / "data" / (id + "." + kind + ".jsonl"));
        write_dataset(files.back(), d);
        datasets.emplace_back(files.back(), d);
      }
    }
  });

  stage("attack", [&](std::vector<fs::path>& files) {
    std::map<std::uint32_t, std::vector<TokenSequence>> base_cache;
    for (const auto& spec : cfg.schemes) {
      const std::string id = sanitize(spec.scheme_id());
      for (const auto& a : cfg.attacks) {
        const json p = json::parse(a.params);
        const std::uint64_t seed = child_seed(cfg.master_seed, "attack/" + a.name + "/" + id, 0);
        Dataset out;
        try {
          if (a.kind == "scrub") {
            out = scrub_dataset(wm[id], a.name, p, spec.vocab_size, seed, workers);
          } else if (a.kind == "copypaste") {
            out = copypaste_dataset(wm[id], null[id], a.name, p, seed, workers);
          } else {
            const SpoofParams sp = spoof_params(p, spec);
            const auto train = p.value("train_sequences", 2000u);
            ExperimentConfig tc = cfg;
            tc.sequences = train;
            tc.master_seed = child_seed(cfg.master_seed, "spoof-train", 0);
            const Dataset wtrain = watermarked_corpus(model, spec, tc, hash, workers);
            auto& base = base_cache[train];
            if (base.empty()) {
              ExperimentConfig bc = tc;
              bc.master_seed = child_seed(cfg.master_seed, "spoof-base", 0);
              base = as_sequences(null_corpus(model, spec, bc, hash, workers));
            }
            const SpoofModel sm = spoof_learn(as_sequences(wtrain), base, model.vocab_size(),
                                              sp.attacker_h, sp.ratio_threshold, sp.pseudo_count);
            out = spoof_dataset(sm, model, spec, wm[id].header, a.name, p, sp, cfg.sequences,
                                cfg.prompt_len, cfg.new_tokens, cfg.master_seed, seed, workers);
          }
        } catch (const json::exception& e) {
          throw ValidationError("config.attacks." + a.name + ".params: wrong type: " + e.what());
        }
        files.push_back(root / "data" / (id + "." + sanitize(a.name) + ".jsonl"));
        write_dataset(files.back(), out);
        datasets.emplace_back(files.back(), std::move(out));
      }
    }
  });

  stage("detect", [&](std::vector<fs::path>& files) {
    for (const auto& [path, d] : datasets) {
      const SchemeSpec spec = scheme_from_json(d.header.scheme_json);
      files.push_back(root / "detect" / (path.stem().string() + ".csv"));
      write_detection(files.back(), d, spec, path.filename().string(), cfg.winmax_min_len,
                      cfg.dedup, workers);
    }
  });

  stage("calibrate", [&](std::vector<fs::path>& files) {
    for (const auto& spec : cfg.schemes) {
      const std::string id = sanitize(spec.scheme_id());
      files.push_back(root / "calibrate" / (id + ".csv"));
      write_calibration(files.back(), read_csv(root / "detect" / (id + ".null.csv")), cfg.fprs);
    }
  });

  stage("quality", [&](std::vector<fs::path>& files) {
    for (const auto& spec : cfg.schemes) {
      const std::string id = sanitize(spec.scheme_id());
      std::vector<std::vector<std::string>> rows;
      for (const auto* kind : {"wm", "null"}) {
        const Dataset& d = std::string(kind) == "wm" ? wm[id] : null[id];
        double ppl = 0.0, div = 0.0;
        for (const auto& r : d.records) {
          ppl += toy_perplexity(model, r.tokens, r.prompt_len);
          div += log_diversity(std::span<const TokenId>(r.tokens).subspan(r.prompt_len));
        }
        const double n = static_cast<double>(d.records.size());
        rows.push_back({id, kind, std::to_string(d.records.size()), fmt_num(ppl / n),
                        fmt_num(div / n)});
      }
      files.push_back(root / "quality" / (id + ".csv"));
      write_csv(files.back(), {{"config_hash", hash}, {"kind", "quality"}},
                {"scheme_id", "corpus", "n", "mean_perplexity", "mean_log_diversity"}, rows);
    }
  });

  stage("report", [&](std::vector<fs::path>& files) { files = cmd_report(root); });

  write_text(root / "manifest.json", manifest.to_json());
  return manifest;
}

}  // namespace seekmark
