#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqgauge/corpus.hpp"
#include "seqgauge/hmm.hpp"
#include "seqgauge/rng.hpp"
#include "seqgauge/util.hpp"

namespace seqgauge {

// Seeded random model whose emission mass can be concentrated on a symbol
// block [focus_lo, focus_hi), leaving the rest as a thin uniform-ish tail.
// Concentrating different families on different blocks (or the same block
// with different transition structure) controls how separable they are.
struct PlantedModelSpec {
  int n_states = 2;
  int n_symbols = 0;
  int focus_lo = -1;  // negative: no focus block, fully random rows
  int focus_hi = -1;
  double focus_weight = 0.9;
  double self_transition = -1.0;  // negative: random transition rows
  uint64_t seed = 0;
};

inline HmmModel make_planted_model(const PlantedModelSpec& spec) {
  if (spec.n_states < 1 || spec.n_symbols < 1)
    throw std::invalid_argument("make_planted_model: bad dimensions");
  const bool focused = spec.focus_lo >= 0;
  if (focused &&
      !(0 <= spec.focus_lo && spec.focus_lo < spec.focus_hi &&
        spec.focus_hi <= spec.n_symbols && spec.focus_weight > 0.0 &&
        spec.focus_weight <= 1.0))
    throw std::invalid_argument("make_planted_model: bad focus block");

  Rng rng(spec.seed);
  HmmModel m;
  m.n_states = spec.n_states;
  m.n_symbols = spec.n_symbols;
  m.initial.assign(spec.n_states, 1.0 / spec.n_states);
  m.transition = Matrix(spec.n_states, spec.n_states);
  m.emission = Matrix(spec.n_states, spec.n_symbols);

  for (int i = 0; i < spec.n_states; ++i) {
    auto row = m.transition.row(i);
    if (spec.self_transition >= 0.0 && spec.n_states > 1) {
      double rest = (1.0 - spec.self_transition) / (spec.n_states - 1);
      for (int j = 0; j < spec.n_states; ++j)
        row[j] = j == i ? spec.self_transition : rest;
    } else {
      for (double& x : row) x = 0.2 + rng.uniform01();
      normalize(row);
    }
  }
  for (int i = 0; i < spec.n_states; ++i) {
    auto row = m.emission.row(i);
    if (focused) {
      double in_mass = 0.0, out_mass = 0.0;
      for (int k = 0; k < spec.n_symbols; ++k) {
        row[k] = 0.2 + rng.uniform01();
        if (k >= spec.focus_lo && k < spec.focus_hi)
          in_mass += row[k];
        else
          out_mass += row[k];
      }
      for (int k = 0; k < spec.n_symbols; ++k) {
        if (k >= spec.focus_lo && k < spec.focus_hi)
          row[k] *= spec.focus_weight / in_mass;
        else
          row[k] *= out_mass > 0.0 ? (1.0 - spec.focus_weight) / out_mass : 0.0;
      }
      normalize(row);
    } else {
      for (double& x : row) x = 0.2 + rng.uniform01();
      normalize(row);
    }
  }
  return m;
}

// One synthetic family: samples are drawn from a planted dynamic-channel
// model; the static channel is derived from the dynamic one by per-symbol
// redraws into a family-specific static-only symbol range plus structural
// prologue/epilogue padding, mirroring that disassembly covers the whole
// binary while a trace covers one execution path.
struct SyntheticFamilySpec {
  std::string family_name;
  HmmModel dynamic_model;
  int static_vocab_size = 0;
  int dynamic_vocab_size = 0;
  double channel_divergence = 0.0;  // P(static symbol redrawn as static-only)
  int min_length = 0;
  int max_length = 0;
  int prologue_tokens = 0;
  int epilogue_tokens = 0;
  int sample_count = 0;
  uint64_t seed = 0;
  TraceKind kind = TraceKind::kOpcode;
  bool benign = false;

  void validate() const {
    if (family_name.empty())
      throw std::invalid_argument("synthetic family: empty name");
    dynamic_model.validate();
    if (dynamic_vocab_size != dynamic_model.n_symbols)
      throw std::invalid_argument(
          "synthetic family: dynamic vocabulary size does not match the "
          "planted model");
    if (static_vocab_size < dynamic_vocab_size)
      throw std::invalid_argument(
          "synthetic family: static vocabulary must contain the dynamic one");
    if (channel_divergence < 0.0 || channel_divergence > 1.0)
      throw std::invalid_argument(
          "synthetic family: channel_divergence outside [0,1]");
    if ((channel_divergence > 0.0 || prologue_tokens > 0 ||
         epilogue_tokens > 0) &&
        static_vocab_size <= dynamic_vocab_size)
      throw std::invalid_argument(
          "synthetic family: divergence or padding requires static-only "
          "symbols (static vocabulary larger than dynamic)");
    if (min_length < 1 || max_length < min_length)
      throw std::invalid_argument("synthetic family: bad length range");
    if (prologue_tokens < 0 || epilogue_tokens < 0)
      throw std::invalid_argument("synthetic family: negative padding");
    if (sample_count < 1)
      throw std::invalid_argument("synthetic family: sample_count must be >= 1");
  }
};

struct PairedTraces {
  RawTrace static_trace;
  RawTrace dynamic_trace;
};

namespace detail {

inline std::string symbol_token(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "op%03d", index);
  return buf;
}

// Family-specific distribution over the static-only symbol range
// [dynamic_vocab_size, static_vocab_size).
inline std::vector<double> static_only_weights(const SyntheticFamilySpec& spec) {
  int width = spec.static_vocab_size - spec.dynamic_vocab_size;
  std::vector<double> w(static_cast<size_t>(std::max(width, 0)));
  Rng rng(derive_seed(spec.seed, spec.family_name + "/static-dist"));
  for (double& x : w) x = 0.1 + rng.uniform01();
  return w;
}

}  // namespace detail

// Deterministic under (spec, seed): each sample draws from its own derived
// sub-seed, so corpora are reproducible and order-independent.
inline std::vector<PairedTraces> generate_family(const SyntheticFamilySpec& spec) {
  spec.validate();
  std::vector<double> static_only = detail::static_only_weights(spec);
  const int dyn = spec.dynamic_vocab_size;
  SampleLabel label = spec.benign ? SampleLabel::benign()
                                  : SampleLabel::malware(spec.family_name);

  std::vector<PairedTraces> out;
  out.reserve(spec.sample_count);
  for (int s = 0; s < spec.sample_count; ++s) {
    Rng rng(derive_seed(spec.seed, spec.family_name + "/sample", s));
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "_%03d", s);
    std::string sample_id = spec.family_name + idbuf;

    int length = spec.min_length +
                 rng.uniform_int(spec.max_length - spec.min_length + 1);
    std::vector<int> dynamic_symbols =
        detail::sample_symbols(spec.dynamic_model, length, rng);

    auto static_only_symbol = [&] { return dyn + rng.categorical(static_only); };
    std::vector<int> static_symbols;
    static_symbols.reserve(length + spec.prologue_tokens + spec.epilogue_tokens);
    for (int t = 0; t < spec.prologue_tokens; ++t)
      static_symbols.push_back(static_only_symbol());
    for (int sym : dynamic_symbols) {
      if (spec.channel_divergence > 0.0 &&
          rng.uniform01() < spec.channel_divergence)
        static_symbols.push_back(static_only_symbol());
      else
        static_symbols.push_back(sym);
    }
    for (int t = 0; t < spec.epilogue_tokens; ++t)
      static_symbols.push_back(static_only_symbol());

    PairedTraces pair;
    pair.dynamic_trace.sample_id = sample_id;
    pair.dynamic_trace.channel = Channel::kDynamic;
    pair.dynamic_trace.kind = spec.kind;
    pair.dynamic_trace.label = label;
    for (int sym : dynamic_symbols)
      pair.dynamic_trace.tokens.push_back(detail::symbol_token(sym));

    pair.static_trace.sample_id = sample_id;
    pair.static_trace.channel = Channel::kStatic;
    pair.static_trace.kind = spec.kind;
    pair.static_trace.label = label;
    for (int sym : static_symbols)
      pair.static_trace.tokens.push_back(detail::symbol_token(sym));

    out.push_back(std::move(pair));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Whole-corpus generation spec (the `gen` CLI subcommand input).

struct GenFamilyConfig {
  std::string name;
  int samples = 0;
  int n_states = 2;
  int focus_lo = -1;
  int focus_hi = -1;
  double focus_weight = 0.9;
  double self_transition = -1.0;
  double divergence = 0.0;
  int min_length = 0;
  int max_length = 0;
  int prologue = 0;
  int epilogue = 0;
  bool benign = false;
};

struct GenSpec {
  uint64_t seed = 0;
  TraceKind kind = TraceKind::kOpcode;
  int static_vocab_size = 0;
  int dynamic_vocab_size = 0;
  std::vector<GenFamilyConfig> families;  // benign entries carry benign=true
};

inline SyntheticFamilySpec family_spec_from_config(const GenSpec& spec,
                                                   const GenFamilyConfig& f) {
  PlantedModelSpec model_spec;
  model_spec.n_states = f.n_states;
  model_spec.n_symbols = spec.dynamic_vocab_size;
  model_spec.focus_lo = f.focus_lo;
  model_spec.focus_hi = f.focus_hi;
  model_spec.focus_weight = f.focus_weight;
  model_spec.self_transition = f.self_transition;
  model_spec.seed = derive_seed(spec.seed, f.name + "/model");

  SyntheticFamilySpec fam;
  fam.family_name = f.name;
  fam.dynamic_model = make_planted_model(model_spec);
  fam.static_vocab_size = spec.static_vocab_size;
  fam.dynamic_vocab_size = spec.dynamic_vocab_size;
  fam.channel_divergence = f.divergence;
  fam.min_length = f.min_length;
  fam.max_length = f.max_length;
  fam.prologue_tokens = f.prologue;
  fam.epilogue_tokens = f.epilogue;
  fam.sample_count = f.samples;
  fam.seed = derive_seed(spec.seed, f.name + "/samples");
  fam.kind = spec.kind;
  fam.benign = f.benign;
  return fam;
}

inline GenFamilyConfig gen_family_from_json(const nlohmann::json& j) {
  GenFamilyConfig f;
  f.name = j.at("name").get<std::string>();
  f.samples = j.at("samples").get<int>();
  f.n_states = j.value("n_states", 2);
  if (j.contains("focus")) {
    f.focus_lo = j["focus"].at(0).get<int>();
    f.focus_hi = j["focus"].at(1).get<int>();
  }
  f.focus_weight = j.value("focus_weight", 0.9);
  f.self_transition = j.value("self_transition", -1.0);
  f.divergence = j.value("divergence", 0.0);
  const auto& len = j.at("length");
  f.min_length = len.at(0).get<int>();
  f.max_length = len.at(1).get<int>();
  f.prologue = j.value("prologue", 0);
  f.epilogue = j.value("epilogue", 0);
  return f;
}

inline GenSpec gen_spec_from_json(const nlohmann::json& j) {
  GenSpec spec;
  spec.seed = j.value("seed", uint64_t{0});
  spec.kind = parse_trace_kind(j.value("kind", std::string("opcode")));
  spec.static_vocab_size = j.at("static_vocab_size").get<int>();
  spec.dynamic_vocab_size = j.at("dynamic_vocab_size").get<int>();
  for (const auto& jf : j.at("families"))
    spec.families.push_back(gen_family_from_json(jf));
  if (j.contains("benign")) {
    GenFamilyConfig b = gen_family_from_json(j["benign"]);
    if (b.name.empty()) b.name = "benign";
    b.benign = true;
    spec.families.push_back(std::move(b));
  }
  return spec;
}

inline GenSpec load_gen_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  return gen_spec_from_json(j);
}

// Generates every family and writes manifest + trace files under out_dir.
// Returns the manifest. Byte-identical across reruns with the same spec.
inline CorpusManifest write_corpus(const GenSpec& spec,
                                   const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "traces");
  CorpusManifest manifest;
  manifest.kind = spec.kind;
  for (const GenFamilyConfig& f : spec.families) {
    SyntheticFamilySpec fam = family_spec_from_config(spec, f);
    std::vector<PairedTraces> pairs = generate_family(fam);
    FamilyEntry entry;
    entry.name = f.name;
    for (const PairedTraces& p : pairs) {
      SampleEntry s;
      s.id = p.static_trace.sample_id;
      s.static_path = "traces/" + s.id + "_static.trace";
      s.dynamic_path = "traces/" + s.id + "_dynamic.trace";
      write_trace_file((fs::path(out_dir) / *s.static_path).string(),
                       p.static_trace);
      write_trace_file((fs::path(out_dir) / *s.dynamic_path).string(),
                       p.dynamic_trace);
      entry.samples.push_back(std::move(s));
    }
    if (f.benign)
      for (SampleEntry& s : entry.samples) manifest.benign.push_back(std::move(s));
    else
      manifest.families.push_back(std::move(entry));
  }
  save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace seqgauge
