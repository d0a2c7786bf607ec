#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "seqgauge/hmm.hpp"
#include "seqgauge/util.hpp"

namespace seqgauge {

enum class TraceKind { kOpcode, kApiCall };

inline std::string to_string(TraceKind k) {
  return k == TraceKind::kOpcode ? "opcode" : "api";
}

inline TraceKind parse_trace_kind(std::string_view s) {
  if (s == "opcode") return TraceKind::kOpcode;
  if (s == "api") return TraceKind::kApiCall;
  throw std::invalid_argument("unknown trace kind '" + std::string(s) +
                              "' (expected opcode|api)");
}

// Extracted token sequence for one sample in one channel.
struct RawTrace {
  std::string sample_id;
  Channel channel = Channel::kStatic;
  TraceKind kind = TraceKind::kOpcode;
  std::vector<std::string> tokens;
  SampleLabel label;
};

// Bidirectional symbol-name <-> index map, frozen at training time so scoring
// can never grow it.
class Vocabulary {
 public:
  // Returns the index of name, inserting it if new. Throws once frozen.
  int add(const std::string& name) {
    if (frozen_)
      throw std::logic_error("Vocabulary: insertion into frozen vocabulary");
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    int idx = static_cast<int>(names_.size());
    names_.push_back(name);
    index_.emplace(name, idx);
    return idx;
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int idx) const { return names_.at(idx); }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Order-sensitive content digest; written into model bundles so a model is
  // never scored against the wrong vocabulary.
  std::string digest() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const std::string& n : names_) {
      h = fnv1a64(n, h);
      h = fnv1a64("\n", h);
    }
    return to_hex(h);
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  bool frozen_ = false;
};

// Distinct tokens of the input traces in first-appearance order, frozen.
inline Vocabulary build_vocabulary(std::span<const RawTrace> traces) {
  Vocabulary vocab;
  for (const RawTrace& t : traces)
    for (const std::string& tok : t.tokens) vocab.add(tok);
  if (vocab.size() == 0)
    throw std::invalid_argument("build_vocabulary: no tokens in input traces");
  vocab.freeze();
  return vocab;
}

inline Vocabulary build_vocabulary(std::span<const RawTrace* const> traces) {
  Vocabulary vocab;
  for (const RawTrace* t : traces)
    for (const std::string& tok : t->tokens) vocab.add(tok);
  if (vocab.size() == 0)
    throw std::invalid_argument("build_vocabulary: no tokens in input traces");
  vocab.freeze();
  return vocab;
}

enum class UnknownSymbolPolicy { kOmitUnknown, kErrorOnUnknown };

inline std::string to_string(UnknownSymbolPolicy p) {
  return p == UnknownSymbolPolicy::kOmitUnknown ? "omit" : "error";
}

inline UnknownSymbolPolicy parse_unknown_policy(std::string_view s) {
  if (s == "omit") return UnknownSymbolPolicy::kOmitUnknown;
  if (s == "error") return UnknownSymbolPolicy::kErrorOnUnknown;
  throw std::invalid_argument("unknown symbol policy '" + std::string(s) +
                              "' (expected omit|error)");
}

// Every token of a trace was unknown (or the trace was empty), so there is
// nothing to score.
class DegenerateTraceError : public std::runtime_error {
 public:
  explicit DegenerateTraceError(const std::string& sample_id)
      : std::runtime_error("trace for sample '" + sample_id +
                           "' is degenerate: no tokens survive encoding"),
        sample_id_(sample_id) {}
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

class UnknownSymbolError : public std::runtime_error {
 public:
  UnknownSymbolError(const std::string& token, size_t position,
                     const std::string& sample_id)
      : std::runtime_error("unknown token '" + token + "' at position " +
                           std::to_string(position) + " in sample '" +
                           sample_id + "'") {}
};

struct EncodedTrace {
  SymbolSequence sequence;
  int omitted = 0;
};

// Encodes a trace against a frozen vocabulary. Under kOmitUnknown, tokens
// outside the vocabulary are dropped and counted (the scoring-time policy for
// symbols that did not appear in the training set); under kErrorOnUnknown the
// first such token aborts.
inline EncodedTrace encode(const RawTrace& trace, const Vocabulary& vocab,
                           UnknownSymbolPolicy policy) {
  if (!vocab.frozen())
    throw std::logic_error("encode: vocabulary must be frozen");
  EncodedTrace out;
  out.sequence.channel = trace.channel;
  out.sequence.sample_id = trace.sample_id;
  out.sequence.label = trace.label;
  out.sequence.symbols.reserve(trace.tokens.size());
  for (size_t i = 0; i < trace.tokens.size(); ++i) {
    if (auto idx = vocab.find(trace.tokens[i])) {
      out.sequence.symbols.push_back(*idx);
    } else if (policy == UnknownSymbolPolicy::kErrorOnUnknown) {
      throw UnknownSymbolError(trace.tokens[i], i, trace.sample_id);
    } else {
      ++out.omitted;
    }
  }
  if (out.sequence.symbols.empty()) throw DegenerateTraceError(trace.sample_id);
  return out;
}

// Maps a symbol sequence back to its token strings.
inline std::vector<std::string> decode(const SymbolSequence& seq,
                                       const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  tokens.reserve(seq.symbols.size());
  for (int s : seq.symbols) tokens.push_back(vocab.name(s));
  return tokens;
}

// ---------------------------------------------------------------------------
// Trace file format: a header line
//   #seqgauge-trace v1 kind=<opcode|api> channel=<static|dynamic>
//       sample=<id> label=<family|benign>
// followed by one token per line. Sample ids and family names must not
// contain whitespace.

inline std::string label_field(const SampleLabel& label) {
  return label.is_benign() ? "benign" : label.family;
}

inline SampleLabel parse_label_field(std::string_view s) {
  if (s == "benign") return SampleLabel::benign();
  return SampleLabel::malware(std::string(s));
}

inline void write_trace(std::ostream& out, const RawTrace& trace) {
  out << "#seqgauge-trace v1 kind=" << to_string(trace.kind)
      << " channel=" << to_string(trace.channel)
      << " sample=" << trace.sample_id << " label=" << label_field(trace.label)
      << '\n';
  for (const std::string& tok : trace.tokens) out << tok << '\n';
}

inline void write_trace_file(const std::string& path, const RawTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_trace(out, trace);
}

inline RawTrace read_trace(std::istream& in, const std::string& origin) {
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("empty trace file: " + origin);
  auto fields = split_ws(header);
  if (fields.size() < 2 || fields[0] != "#seqgauge-trace" || fields[1] != "v1")
    throw std::runtime_error("bad trace header in " + origin);
  RawTrace trace;
  bool have_kind = false, have_channel = false, have_sample = false,
       have_label = false;
  for (size_t i = 2; i < fields.size(); ++i) {
    auto eq = fields[i].find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("bad trace header field in " + origin);
    std::string_view key = fields[i].substr(0, eq);
    std::string_view value = fields[i].substr(eq + 1);
    if (key == "kind") {
      trace.kind = parse_trace_kind(value);
      have_kind = true;
    } else if (key == "channel") {
      trace.channel = parse_channel(value);
      have_channel = true;
    } else if (key == "sample") {
      trace.sample_id = std::string(value);
      have_sample = true;
    } else if (key == "label") {
      trace.label = parse_label_field(value);
      have_label = true;
    }
  }
  if (!have_kind || !have_channel || !have_sample || !have_label)
    throw std::runtime_error("incomplete trace header in " + origin);
  std::string line;
  while (std::getline(in, line)) {
    std::string_view tok = trim(line);
    if (tok.empty() || tok[0] == '#') continue;
    trace.tokens.emplace_back(tok);
  }
  return trace;
}

inline RawTrace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_trace(in, path);
}

// ---------------------------------------------------------------------------
// Corpus manifest: JSON listing families, labels and per-sample trace file
// paths per channel, relative to the manifest's directory.

struct SampleEntry {
  std::string id;
  std::optional<std::string> static_path;
  std::optional<std::string> dynamic_path;

  const std::optional<std::string>& path(Channel c) const {
    return c == Channel::kStatic ? static_path : dynamic_path;
  }
};

struct FamilyEntry {
  std::string name;
  std::vector<SampleEntry> samples;
};

struct CorpusManifest {
  TraceKind kind = TraceKind::kOpcode;
  std::vector<FamilyEntry> families;
  std::vector<SampleEntry> benign;
};

namespace detail {

inline nlohmann::ordered_json sample_to_json(const SampleEntry& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  if (s.static_path) j["static"] = *s.static_path;
  if (s.dynamic_path) j["dynamic"] = *s.dynamic_path;
  return j;
}

inline SampleEntry sample_from_json(const nlohmann::json& j) {
  SampleEntry s;
  s.id = j.at("id").get<std::string>();
  if (j.contains("static")) s.static_path = j["static"].get<std::string>();
  if (j.contains("dynamic")) s.dynamic_path = j["dynamic"].get<std::string>();
  return s;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const CorpusManifest& m) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(m.kind);
  j["families"] = nlohmann::ordered_json::array();
  for (const FamilyEntry& f : m.families) {
    nlohmann::ordered_json jf;
    jf["name"] = f.name;
    jf["samples"] = nlohmann::ordered_json::array();
    for (const SampleEntry& s : f.samples)
      jf["samples"].push_back(detail::sample_to_json(s));
    j["families"].push_back(std::move(jf));
  }
  j["benign"] = nlohmann::ordered_json::array();
  for (const SampleEntry& s : m.benign)
    j["benign"].push_back(detail::sample_to_json(s));
  return j;
}

inline CorpusManifest manifest_from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.kind = parse_trace_kind(j.at("kind").get<std::string>());
  for (const auto& jf : j.at("families")) {
    FamilyEntry f;
    f.name = jf.at("name").get<std::string>();
    for (const auto& js : jf.at("samples"))
      f.samples.push_back(detail::sample_from_json(js));
    m.families.push_back(std::move(f));
  }
  for (const auto& js : j.at("benign"))
    m.benign.push_back(detail::sample_from_json(js));
  return m;
}

inline void save_manifest(const std::string& path, const CorpusManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_json(m).dump(2) << '\n';
}

inline CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j);
}

// A fully loaded corpus: the manifest plus every referenced trace.
class Corpus {
 public:
  Corpus() = default;
  Corpus(CorpusManifest manifest, std::vector<RawTrace> traces)
      : manifest_(std::move(manifest)) {
    for (RawTrace& t : traces) {
      auto key = std::make_pair(t.sample_id, t.channel == Channel::kStatic);
      traces_.emplace(std::move(key), std::move(t));
    }
  }

  const CorpusManifest& manifest() const { return manifest_; }

  const RawTrace* find(const std::string& sample_id, Channel channel) const {
    auto it = traces_.find({sample_id, channel == Channel::kStatic});
    return it == traces_.end() ? nullptr : &it->second;
  }

  std::vector<std::string> family_names() const {
    std::vector<std::string> names;
    for (const FamilyEntry& f : manifest_.families) names.push_back(f.name);
    return names;
  }

  const FamilyEntry* family(const std::string& name) const {
    for (const FamilyEntry& f : manifest_.families)
      if (f.name == name) return &f;
    return nullptr;
  }

  std::vector<std::string> family_sample_ids(const std::string& name) const {
    const FamilyEntry* f = family(name);
    if (!f) throw std::invalid_argument("unknown family '" + name + "'");
    std::vector<std::string> ids;
    for (const SampleEntry& s : f->samples) ids.push_back(s.id);
    return ids;
  }

  std::vector<const RawTrace*> family_traces(const std::string& name,
                                             Channel channel) const {
    const FamilyEntry* f = family(name);
    if (!f) throw std::invalid_argument("unknown family '" + name + "'");
    std::vector<const RawTrace*> out;
    for (const SampleEntry& s : f->samples)
      if (const RawTrace* t = find(s.id, channel)) out.push_back(t);
    return out;
  }

  std::vector<const RawTrace*> benign_traces(Channel channel) const {
    std::vector<const RawTrace*> out;
    for (const SampleEntry& s : manifest_.benign)
      if (const RawTrace* t = find(s.id, channel)) out.push_back(t);
    return out;
  }

 private:
  CorpusManifest manifest_;
  // key: (sample_id, is_static)
  std::map<std::pair<std::string, bool>, RawTrace> traces_;
};

// Reads the manifest at `path` and every trace file it references.
inline Corpus load_corpus(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  CorpusManifest manifest = load_manifest(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  std::vector<RawTrace> traces;
  auto load_sample = [&](const SampleEntry& s, const SampleLabel& label) {
    for (Channel c : {Channel::kStatic, Channel::kDynamic}) {
      if (!s.path(c)) continue;
      RawTrace t = read_trace_file((base / *s.path(c)).string());
      if (t.sample_id != s.id)
        throw std::runtime_error("trace file " + *s.path(c) +
                                 " carries sample id '" + t.sample_id +
                                 "' but the manifest says '" + s.id + "'");
      if (!(t.label == label))
        throw std::runtime_error("trace file " + *s.path(c) +
                                 " label does not match the manifest");
      traces.push_back(std::move(t));
    }
  };
  for (const FamilyEntry& f : manifest.families)
    for (const SampleEntry& s : f.samples)
      load_sample(s, SampleLabel::malware(f.name));
  for (const SampleEntry& s : manifest.benign)
    load_sample(s, SampleLabel::benign());
  return Corpus(std::move(manifest), std::move(traces));
}

// Number of distinct tokens across a set of traces (the per-channel
// distinct-symbol statistic reported alongside experiment results).
inline int distinct_token_count(std::span<const RawTrace* const> traces) {
  std::unordered_set<std::string_view> seen;
  for (const RawTrace* t : traces)
    for (const std::string& tok : t->tokens) seen.insert(tok);
  return static_cast<int>(seen.size());
}

}  // namespace seqgauge
