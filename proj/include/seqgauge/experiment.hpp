#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "seqgauge/corpus.hpp"
#include "seqgauge/eval.hpp"
#include "seqgauge/hmm.hpp"
#include "seqgauge/model_io.hpp"
#include "seqgauge/rng.hpp"
#include "seqgauge/util.hpp"

namespace seqgauge {

// Assignment of every sample to one of k near-equal folds.
struct FoldPlan {
  int k = 0;
  uint64_t seed = 0;
  std::vector<std::string> shuffled_ids;
  std::unordered_map<std::string, int> assignments;

  int fold_of(const std::string& id) const {
    auto it = assignments.find(id);
    if (it == assignments.end())
      throw std::invalid_argument("fold_of: unknown sample '" + id + "'");
    return it->second;
  }

  std::vector<std::string> members(int fold) const {
    std::vector<std::string> out;
    for (size_t i = 0; i < shuffled_ids.size(); ++i)
      if (static_cast<int>(i) % k == fold) out.push_back(shuffled_ids[i]);
    return out;
  }

  std::vector<int> sizes() const {
    std::vector<int> out(k, 0);
    for (size_t i = 0; i < shuffled_ids.size(); ++i) ++out[i % k];
    return out;
  }
};

// Seeded shuffle then round-robin assignment; fold sizes differ by at most
// one, with any remainder spread one sample per fold.
inline FoldPlan make_folds(std::vector<std::string> sample_ids, int k,
                           uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
  if (static_cast<int>(sample_ids.size()) < k)
    throw std::invalid_argument("make_folds: need at least k samples");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.shuffled_ids = std::move(sample_ids);
  Rng rng(seed);
  rng.shuffle(plan.shuffled_ids);
  for (size_t i = 0; i < plan.shuffled_ids.size(); ++i)
    plan.assignments[plan.shuffled_ids[i]] = static_cast<int>(i) % k;
  return plan;
}

// A (train-channel, score-channel) combination. The four cases of the
// experiment matrix, in the order the result tables use.
struct Regime {
  Channel train_channel = Channel::kDynamic;
  Channel score_channel = Channel::kDynamic;

  bool matched() const { return train_channel == score_channel; }
  std::string name() const {
    return to_string(train_channel) + "/" + to_string(score_channel);
  }
  bool operator==(const Regime&) const = default;
};

inline std::vector<Regime> all_regimes() {
  return {{Channel::kDynamic, Channel::kDynamic},
          {Channel::kStatic, Channel::kStatic},
          {Channel::kDynamic, Channel::kStatic},
          {Channel::kStatic, Channel::kDynamic}};
}

inline Regime parse_regime(std::string_view s) {
  auto slash = s.find('/');
  if (slash == std::string_view::npos)
    throw std::invalid_argument("bad regime '" + std::string(s) +
                                "' (expected train/score, e.g. dynamic/static)");
  return {parse_channel(s.substr(0, slash)), parse_channel(s.substr(slash + 1))};
}

enum class BenignPooling {
  kAveragePerSample,  // one pooled score per benign sample: mean over folds
  kPoolAll            // every (fold, benign) score pooled individually
};

inline std::string to_string(BenignPooling p) {
  return p == BenignPooling::kAveragePerSample ? "average" : "pool-all";
}

inline BenignPooling parse_benign_pooling(std::string_view s) {
  if (s == "average") return BenignPooling::kAveragePerSample;
  if (s == "pool-all") return BenignPooling::kPoolAll;
  throw std::invalid_argument("unknown benign pooling '" + std::string(s) +
                              "' (expected average|pool-all)");
}

struct HmmSettings {
  int n_states = 2;
  int restarts = 1;
  int max_iters = 200;
  double tol = 1e-4;
};

struct ExperimentConfig {
  int k = 5;
  HmmSettings hmm;
  std::vector<Regime> regimes = all_regimes();
  uint64_t seed = 0;
  UnknownSymbolPolicy unknown_policy = UnknownSymbolPolicy::kOmitUnknown;
  BenignPooling benign_pooling = BenignPooling::kAveragePerSample;
  std::vector<long long> imbalance_factors = {1, 10, 100, 1000};
  int jobs = 1;
  std::vector<std::string> families;  // empty: every family in the manifest

  std::string digest() const {
    std::ostringstream os;
    os << "k=" << k << ";N=" << hmm.n_states << ";restarts=" << hmm.restarts
       << ";max_iters=" << hmm.max_iters << ";tol=" << fmt_double(hmm.tol)
       << ";seed=" << seed << ";policy=" << to_string(unknown_policy)
       << ";pooling=" << to_string(benign_pooling);
    return to_hex(fnv1a64(os.str()));
  }
};

// Provenance of one fold: exactly which samples trained the model and which
// were held out, so leakage is checkable after the fact.
struct FoldRecord {
  int fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::string vocabulary_digest;
  int vocabulary_size = 0;
  uint64_t train_seed = 0;
  double final_log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct RegimeReport {
  std::string family;
  Regime regime;
  std::vector<LabeledScore> positive_scores;  // pooled, one per malware sample
  std::vector<LabeledScore> negative_scores;  // pooled benign scores
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  int distinct_static_symbols = 0;
  int distinct_dynamic_symbols = 0;
  std::vector<FoldRecord> folds;
  int degenerate_positives = 0;  // held-out malware excluded by encoding
  int degenerate_negatives = 0;  // (fold, benign) scores excluded by encoding
  std::string config_digest;
  std::vector<ModelBundle> fold_models;  // retained only when requested

  ScoreSet pooled() const {
    ScoreSet s;
    for (const LabeledScore& p : positive_scores) s.positives.push_back(p.score);
    for (const LabeledScore& n : negative_scores) s.negatives.push_back(n.score);
    return s;
  }
};

namespace detail {

inline void check_no_leak(const FoldRecord& fold) {
  std::unordered_set<std::string> train(fold.train_ids.begin(),
                                        fold.train_ids.end());
  for (const std::string& id : fold.test_ids)
    if (train.contains(id))
      throw std::logic_error("cross-validation leak: sample '" + id +
                             "' appears in both train and test of fold " +
                             std::to_string(fold.fold_index));
}

}  // namespace detail

// One cell of the matrix: five-fold cross-validation of one family under one
// (train-channel, score-channel) regime. Per fold, the vocabulary is rebuilt
// from the training folds' train-channel traces only; the fold model scores
// the held-out malware and the whole benign set in the score channel, with
// unknown symbols handled by the configured policy. Malware scores pool
// across folds (each sample scored exactly once, by the model that never saw
// it); benign scores are averaged per benign sample across the fold models
// unless pool-all is selected.
inline RegimeReport run_family_regime(const Corpus& corpus,
                                      const std::string& family, Regime regime,
                                      const ExperimentConfig& config,
                                      bool keep_models = false) {
  RegimeReport report;
  report.family = family;
  report.regime = regime;
  report.config_digest = config.digest();

  const FamilyEntry* fam = corpus.family(family);
  if (!fam) throw std::invalid_argument("unknown family '" + family + "'");
  for (const SampleEntry& s : fam->samples)
    for (Channel c : {regime.train_channel, regime.score_channel})
      if (!corpus.find(s.id, c))
        throw std::runtime_error("family '" + family + "' sample '" + s.id +
                                 "' has no " + to_string(c) + " trace");
  std::vector<const RawTrace*> benign =
      corpus.benign_traces(regime.score_channel);
  if (benign.empty())
    throw std::runtime_error("no benign traces in the " +
                             to_string(regime.score_channel) + " channel");

  report.distinct_static_symbols =
      distinct_token_count(corpus.family_traces(family, Channel::kStatic));
  report.distinct_dynamic_symbols =
      distinct_token_count(corpus.family_traces(family, Channel::kDynamic));

  std::vector<std::string> ids = corpus.family_sample_ids(family);
  FoldPlan plan = make_folds(
      ids, config.k, derive_seed(config.seed, family + "|" + regime.name()));

  // benign_scores[b] collects one score per fold model for benign sample b
  std::vector<std::vector<double>> benign_scores(benign.size());

  for (int fold = 0; fold < config.k; ++fold) {
    FoldRecord record;
    record.fold_index = fold;
    for (const std::string& id : ids)
      (plan.fold_of(id) == fold ? record.test_ids : record.train_ids)
          .push_back(id);
    detail::check_no_leak(record);

    std::vector<const RawTrace*> train_traces;
    for (const std::string& id : record.train_ids)
      train_traces.push_back(corpus.find(id, regime.train_channel));
    Vocabulary vocab = build_vocabulary(train_traces);
    record.vocabulary_digest = vocab.digest();
    record.vocabulary_size = vocab.size();

    std::vector<SymbolSequence> train_seqs;
    train_seqs.reserve(train_traces.size());
    for (const RawTrace* t : train_traces)
      train_seqs.push_back(encode(*t, vocab, config.unknown_policy).sequence);

    TrainConfig tc;
    tc.max_iters = config.hmm.max_iters;
    tc.tol = config.hmm.tol;
    tc.restarts = config.hmm.restarts;
    tc.seed = derive_seed(config.seed, family + "|" + regime.name() + "|train",
                          static_cast<uint64_t>(fold));
    record.train_seed = tc.seed;
    TrainingOutcome outcome = train_with_restarts(
        train_seqs, config.hmm.n_states, vocab.size(), tc);
    record.final_log_likelihood = outcome.log_likelihood_trace.back();
    record.iterations = outcome.iterations;
    record.converged = outcome.converged;

    if (keep_models) {
      ModelBundle bundle;
      bundle.model = outcome.model;
      bundle.vocabulary_digest = vocab.digest();
      bundle.channel = regime.train_channel;
      bundle.family = family;
      bundle.seed = outcome.seed;
      report.fold_models.push_back(std::move(bundle));
    }

    for (const std::string& id : record.test_ids) {
      const RawTrace* trace = corpus.find(id, regime.score_channel);
      try {
        EncodedTrace enc = encode(*trace, vocab, config.unknown_policy);
        report.positive_scores.push_back(
            {id, family, score(outcome.model, enc.sequence)});
      } catch (const DegenerateTraceError&) {
        ++report.degenerate_positives;
      }
    }
    for (size_t b = 0; b < benign.size(); ++b) {
      try {
        EncodedTrace enc = encode(*benign[b], vocab, config.unknown_policy);
        benign_scores[b].push_back(score(outcome.model, enc.sequence));
      } catch (const DegenerateTraceError&) {
        ++report.degenerate_negatives;
      }
    }
    report.folds.push_back(std::move(record));
  }

  for (size_t b = 0; b < benign.size(); ++b) {
    const std::string& id = benign[b]->sample_id;
    if (benign_scores[b].empty()) continue;
    if (config.benign_pooling == BenignPooling::kAveragePerSample) {
      double mean = 0.0;
      for (double s : benign_scores[b]) mean += s;
      mean /= static_cast<double>(benign_scores[b].size());
      report.negative_scores.push_back({id, "benign", mean});
    } else {
      for (double s : benign_scores[b])
        report.negative_scores.push_back({id, "benign", s});
    }
  }

  ScoreSet pooled = report.pooled();
  report.auc_roc = roc_curve(pooled).auc;
  report.auc_pr = pr_curve(pooled).auc;
  return report;
}

struct CellFailure {
  std::string family;
  Regime regime;
  std::string message;
};

struct MatrixResult {
  std::vector<RegimeReport> reports;
  std::vector<CellFailure> failures;
};

// Every requested family x regime cell. Cells are independent jobs and may
// run on a small thread pool; results land in fixed slots so the report is
// deterministic regardless of scheduling. A failed cell is recorded and the
// rest of the matrix continues.
inline MatrixResult run_matrix(const Corpus& corpus,
                               const ExperimentConfig& config,
                               bool keep_models = false) {
  std::vector<std::string> families =
      config.families.empty() ? corpus.family_names() : config.families;
  const std::vector<Regime>& regimes = config.regimes;

  struct Cell {
    std::string family;
    Regime regime;
    std::optional<RegimeReport> report;
    std::string error;
  };
  std::vector<Cell> cells;
  for (const std::string& fam : families)
    for (const Regime& regime : regimes)
      cells.push_back({fam, regime, std::nullopt, {}});

  auto run_cell = [&](Cell& cell) {
    try {
      cell.report = run_family_regime(corpus, cell.family, cell.regime, config,
                                      keep_models);
    } catch (const std::exception& ex) {
      cell.error = ex.what();
    }
  };

  int jobs = std::max(1, config.jobs);
  if (jobs == 1 || cells.size() <= 1) {
    for (Cell& cell : cells) run_cell(cell);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t i = next.fetch_add(1); i < cells.size();
           i = next.fetch_add(1))
        run_cell(cells[i]);
    };
    std::vector<std::thread> pool;
    int n_threads = std::min<int>(jobs, static_cast<int>(cells.size()));
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  MatrixResult result;
  for (Cell& cell : cells) {
    if (cell.report)
      result.reports.push_back(std::move(*cell.report));
    else
      result.failures.push_back({cell.family, cell.regime, cell.error});
  }
  return result;
}

struct ImbalanceRow {
  std::string family;
  Regime regime;
  long long factor = 1;
  double auc_pr = 0.0;
  double auc_roc = 0.0;
};

// The benign-duplication sweep applied to every cell's pooled scores: the
// line-graph data for AUC-PR against the expansion factor (log-scale grid),
// with the provably constant AUC-ROC alongside.
inline std::vector<ImbalanceRow> imbalance_report(
    std::span<const RegimeReport> reports, std::span<const long long> factors) {
  std::vector<ImbalanceRow> rows;
  for (const RegimeReport& report : reports) {
    ScoreSet pooled = report.pooled();
    for (const ImbalancePoint& pt : imbalance_sweep(pooled, factors))
      rows.push_back(
          {report.family, report.regime, pt.factor, pt.auc_pr, pt.auc_roc});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment config JSON.

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.k = j.value("k", 5);
  if (j.contains("hmm")) {
    const auto& h = j["hmm"];
    c.hmm.n_states = h.value("n_states", 2);
    c.hmm.restarts = h.value("restarts", 1);
    c.hmm.max_iters = h.value("max_iters", 200);
    c.hmm.tol = h.value("tol", 1e-4);
  }
  if (j.contains("regimes")) {
    c.regimes.clear();
    for (const auto& r : j["regimes"])
      c.regimes.push_back(parse_regime(r.get<std::string>()));
  }
  c.seed = j.value("seed", uint64_t{0});
  if (j.contains("unknown_symbol_policy"))
    c.unknown_policy =
        parse_unknown_policy(j["unknown_symbol_policy"].get<std::string>());
  if (j.contains("benign_pooling"))
    c.benign_pooling =
        parse_benign_pooling(j["benign_pooling"].get<std::string>());
  if (j.contains("imbalance_factors")) {
    c.imbalance_factors.clear();
    for (const auto& f : j["imbalance_factors"])
      c.imbalance_factors.push_back(f.get<long long>());
  }
  c.jobs = j.value("jobs", 1);
  if (j.contains("families"))
    for (const auto& f : j["families"])
      c.families.push_back(f.get<std::string>());
  return c;
}

// {config, manifest path} as stored in an experiment config file.
struct ExperimentFile {
  std::string corpus_manifest;  // resolved against the config file directory
  ExperimentConfig config;
};

inline ExperimentFile load_experiment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  ExperimentFile f;
  f.config = experiment_config_from_json(j);
  std::filesystem::path manifest = j.at("corpus").get<std::string>();
  if (manifest.is_relative())
    manifest = std::filesystem::path(path).parent_path() / manifest;
  f.corpus_manifest = manifest.string();
  return f;
}

// ---------------------------------------------------------------------------
// Report emission. JSON carries everything; CSV tables mirror the result
// tables (rows = families, columns = the four regimes); curve CSVs carry the
// plot data per cell.

inline nlohmann::ordered_json report_to_json(const MatrixResult& result,
                                             const ExperimentConfig& config,
                                             std::span<const ImbalanceRow> imbalance) {
  nlohmann::ordered_json j;
  j["config"] = {
      {"k", config.k},
      {"hmm",
       {{"n_states", config.hmm.n_states},
        {"restarts", config.hmm.restarts},
        {"max_iters", config.hmm.max_iters},
        {"tol", config.hmm.tol}}},
      {"seed", config.seed},
      {"unknown_symbol_policy", to_string(config.unknown_policy)},
      {"benign_pooling", to_string(config.benign_pooling)},
      {"digest", config.digest()},
  };
  j["cells"] = nlohmann::ordered_json::array();
  for (const RegimeReport& r : result.reports) {
    nlohmann::ordered_json cell;
    cell["family"] = r.family;
    cell["regime"] = r.regime.name();
    cell["auc_roc"] = r.auc_roc;
    cell["auc_pr"] = r.auc_pr;
    cell["positives"] = r.positive_scores.size();
    cell["negatives"] = r.negative_scores.size();
    cell["degenerate_positives"] = r.degenerate_positives;
    cell["degenerate_negatives"] = r.degenerate_negatives;
    cell["distinct_symbols"] = {{"static", r.distinct_static_symbols},
                                {"dynamic", r.distinct_dynamic_symbols}};
    cell["folds"] = nlohmann::ordered_json::array();
    for (const FoldRecord& f : r.folds) {
      nlohmann::ordered_json jf;
      jf["fold"] = f.fold_index;
      jf["train_ids"] = f.train_ids;
      jf["test_ids"] = f.test_ids;
      jf["vocabulary_digest"] = f.vocabulary_digest;
      jf["vocabulary_size"] = f.vocabulary_size;
      jf["train_seed"] = f.train_seed;
      jf["final_log_likelihood"] = f.final_log_likelihood;
      jf["iterations"] = f.iterations;
      jf["converged"] = f.converged;
      cell["folds"].push_back(std::move(jf));
    }
    j["cells"].push_back(std::move(cell));
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const CellFailure& f : result.failures)
    j["failures"].push_back({{"family", f.family},
                             {"regime", f.regime.name()},
                             {"error", f.message}});
  j["imbalance"] = nlohmann::ordered_json::array();
  for (const ImbalanceRow& row : imbalance)
    j["imbalance"].push_back({{"family", row.family},
                              {"regime", row.regime.name()},
                              {"factor", row.factor},
                              {"auc_pr", row.auc_pr},
                              {"auc_roc", row.auc_roc}});
  return j;
}

inline const RegimeReport* find_report(std::span<const RegimeReport> reports,
                                       const std::string& family,
                                       const Regime& regime) {
  for (const RegimeReport& r : reports)
    if (r.family == family && r.regime == regime) return &r;
  return nullptr;
}

// One row per family, one column per regime, 4 decimal places as in the
// reference tables. Missing cells print as empty fields.
inline void write_auc_table_csv(std::ostream& out,
                                const MatrixResult& result,
                                std::span<const Regime> regimes,
                                bool roc) {
  out << "family";
  for (const Regime& r : regimes) out << ',' << r.name();
  out << '\n';
  std::vector<std::string> families;
  for (const RegimeReport& r : result.reports)
    if (std::find(families.begin(), families.end(), r.family) ==
        families.end())
      families.push_back(r.family);
  for (const CellFailure& f : result.failures)
    if (std::find(families.begin(), families.end(), f.family) ==
        families.end())
      families.push_back(f.family);
  for (const std::string& fam : families) {
    out << fam;
    for (const Regime& regime : regimes) {
      out << ',';
      if (const RegimeReport* r = find_report(result.reports, fam, regime))
        out << fmt_fixed(roc ? r->auc_roc : r->auc_pr, 4);
    }
    out << '\n';
  }
}

inline void write_imbalance_csv(std::ostream& out,
                                std::span<const ImbalanceRow> rows) {
  out << "family,regime,factor,auc_pr,auc_roc\n";
  for (const ImbalanceRow& r : rows)
    out << r.family << ',' << r.regime.name() << ',' << r.factor << ','
        << fmt_double(r.auc_pr) << ',' << fmt_double(r.auc_roc) << '\n';
}

inline void write_distinct_symbols_csv(std::ostream& out,
                                       const MatrixResult& result) {
  out << "family,channel,distinct_symbols\n";
  std::vector<std::string> seen;
  for (const RegimeReport& r : result.reports) {
    if (std::find(seen.begin(), seen.end(), r.family) != seen.end()) continue;
    seen.push_back(r.family);
    out << r.family << ",static," << r.distinct_static_symbols << '\n';
    out << r.family << ",dynamic," << r.distinct_dynamic_symbols << '\n';
  }
}

// Writes report.json, the two AUC tables, imbalance and distinct-symbol
// CSVs, and per-cell score and curve CSVs under out_dir.
inline void write_report_files(const std::string& out_dir,
                               const MatrixResult& result,
                               const ExperimentConfig& config,
                               std::span<const ImbalanceRow> imbalance,
                               bool save_models = false) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "curves");
  fs::create_directories(fs::path(out_dir) / "scores");
  if (save_models) fs::create_directories(fs::path(out_dir) / "models");

  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out)
      throw std::runtime_error("cannot open '" + p.string() + "' for writing");
    return out;
  };

  {
    auto out = open(fs::path(out_dir) / "report.json");
    out << report_to_json(result, config, imbalance).dump(2) << '\n';
  }
  {
    auto out = open(fs::path(out_dir) / "auc_roc_table.csv");
    write_auc_table_csv(out, result, config.regimes, /*roc=*/true);
  }
  {
    auto out = open(fs::path(out_dir) / "auc_pr_table.csv");
    write_auc_table_csv(out, result, config.regimes, /*roc=*/false);
  }
  {
    auto out = open(fs::path(out_dir) / "imbalance.csv");
    write_imbalance_csv(out, imbalance);
  }
  {
    auto out = open(fs::path(out_dir) / "distinct_symbols.csv");
    write_distinct_symbols_csv(out, result);
  }
  for (const RegimeReport& r : result.reports) {
    std::string stem = r.family + "_" + to_string(r.regime.train_channel) +
                       "_" + to_string(r.regime.score_channel);
    {
      auto out = open(fs::path(out_dir) / "scores" / (stem + ".csv"));
      std::vector<LabeledScore> rows = r.positive_scores;
      rows.insert(rows.end(), r.negative_scores.begin(),
                  r.negative_scores.end());
      write_scores_csv(out, rows);
    }
    ScoreSet pooled = r.pooled();
    {
      auto out = open(fs::path(out_dir) / "curves" / (stem + "_roc.csv"));
      write_curve_csv(out, roc_curve(pooled), 1, r.config_digest);
    }
    {
      auto out = open(fs::path(out_dir) / "curves" / (stem + "_pr.csv"));
      write_curve_csv(out, pr_curve(pooled), 1, r.config_digest);
    }
    if (save_models) {
      for (size_t i = 0; i < r.fold_models.size(); ++i)
        save_model((fs::path(out_dir) / "models" /
                    (stem + "_fold" + std::to_string(i) + ".json"))
                       .string(),
                   r.fold_models[i]);
    }
  }
}

}  // namespace seqgauge
