// seqgauge: train HMMs on per-channel symbol traces, score them under the
// four train/score channel regimes with k-fold cross-validation, and emit
// ROC/PR curves, AUC tables and benign-imbalance sweeps as plot-ready CSV.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqgauge/corpus.hpp"
#include "seqgauge/eval.hpp"
#include "seqgauge/experiment.hpp"
#include "seqgauge/extract.hpp"
#include "seqgauge/synth.hpp"

namespace fs = std::filesystem;
using namespace seqgauge;

namespace {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

LogLevel g_log_level = LogLevel::kWarn;

LogLevel parse_log_level(const std::string& s) {
  if (s == "debug") return LogLevel::kDebug;
  if (s == "info") return LogLevel::kInfo;
  if (s == "warn") return LogLevel::kWarn;
  if (s == "error") return LogLevel::kError;
  throw CLI::ValidationError("--log-level",
                             "expected debug|info|warn|error, got '" + s + "'");
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"debug", "info", "warn", "error"};
  if (level >= g_log_level)
    std::cerr << "seqgauge: " << names[static_cast<int>(level)] << ": " << msg
              << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct ExtractOptions {
  std::string kind = "opcode";
  std::string channel = "static";
  std::string input;
  std::string output;
  std::string sample_id;
  std::string label = "benign";
};

int extract_one(const ExtractOptions& opt, const std::string& in_path,
                const std::string& out_path, const std::string& sample_id) {
  std::string text = read_file(in_path);
  ExtractResult result = opt.kind == "opcode" ? extract_opcodes(text)
                                              : extract_api_calls(text);
  log(LogLevel::kInfo, in_path + ": " + std::to_string(result.tokens.size()) +
                           " tokens, " +
                           std::to_string(result.diagnostics.skipped) + " of " +
                           std::to_string(result.diagnostics.scanned) +
                           " entries skipped");
  if (result.tokens.empty()) {
    log(LogLevel::kError, in_path + ": no tokens extracted");
    return 2;
  }
  RawTrace trace;
  trace.sample_id = sample_id;
  trace.channel = parse_channel(opt.channel);
  trace.kind = parse_trace_kind(opt.kind);
  trace.tokens = std::move(result.tokens);
  trace.label = parse_label_field(opt.label);
  write_trace_file(out_path, trace);
  return 0;
}

int cmd_extract(const ExtractOptions& opt) {
  if (fs::is_directory(opt.input)) {
    fs::create_directories(opt.output);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(opt.input))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    int ok = 0;
    for (const fs::path& f : files) {
      std::string stem = f.stem().string();
      std::string out = (fs::path(opt.output) / (stem + ".trace")).string();
      if (extract_one(opt, f.string(), out, stem) == 0) ++ok;
    }
    log(LogLevel::kInfo, std::to_string(ok) + " of " +
                             std::to_string(files.size()) +
                             " files extracted");
    if (ok == 0) {
      std::cerr << "seqgauge: error: no tokens extracted\n";
      return 2;
    }
    return 0;
  }
  std::string sample_id =
      opt.sample_id.empty() ? fs::path(opt.input).stem().string()
                            : opt.sample_id;
  int rc = extract_one(opt, opt.input, opt.output, sample_id);
  if (rc != 0) std::cerr << "seqgauge: error: no tokens extracted\n";
  return rc;
}

void require_readable(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir,
            std::optional<uint64_t> seed_override) {
  require_readable(spec_path);
  GenSpec spec = load_gen_spec(spec_path);
  if (seed_override) spec.seed = *seed_override;
  CorpusManifest manifest = write_corpus(spec, out_dir);
  size_t total = manifest.benign.size();
  for (const FamilyEntry& f : manifest.families) total += f.samples.size();
  std::cout << "wrote " << manifest.families.size() << " families, "
            << manifest.benign.size() << " benign samples (" << total
            << " samples, 2 channels) to " << out_dir << '\n';
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<uint64_t> seed_override,
            std::optional<int> jobs_override,
            const std::string& regimes_override,
            const std::string& imbalance_override, bool save_models) {
  require_readable(config_path);
  ExperimentFile file = load_experiment_file(config_path);
  ExperimentConfig config = file.config;
  if (seed_override) config.seed = *seed_override;
  if (jobs_override) config.jobs = *jobs_override;
  if (!regimes_override.empty()) {
    config.regimes.clear();
    for (auto r : split_on(regimes_override, ','))
      config.regimes.push_back(parse_regime(trim(r)));
  }
  if (!imbalance_override.empty()) {
    config.imbalance_factors.clear();
    for (auto f : split_on(imbalance_override, ','))
      config.imbalance_factors.push_back(std::stoll(std::string(trim(f))));
  }

  log(LogLevel::kInfo, "loading corpus " + file.corpus_manifest);
  Corpus corpus = load_corpus(file.corpus_manifest);
  log(LogLevel::kInfo, "running matrix (seed " + std::to_string(config.seed) +
                           ", jobs " + std::to_string(config.jobs) + ")");
  MatrixResult result = run_matrix(corpus, config, save_models);
  std::vector<ImbalanceRow> imbalance =
      imbalance_report(result.reports, config.imbalance_factors);
  write_report_files(out_dir, result, config, imbalance, save_models);

  for (const RegimeReport& r : result.reports)
    std::cout << r.family << ' ' << r.regime.name()
              << " auc_roc=" << fmt_fixed(r.auc_roc, 4)
              << " auc_pr=" << fmt_fixed(r.auc_pr, 4) << '\n';
  for (const CellFailure& f : result.failures)
    log(LogLevel::kError,
        "cell " + f.family + " " + f.regime.name() + " failed: " + f.message);
  std::cout << "report written to " << out_dir << '\n';
  if (result.reports.empty() && !result.failures.empty()) return 1;
  return 0;
}

int cmd_curves(const std::string& scores_path, const std::string& kind,
               long long expand, const std::string& out_path) {
  std::ifstream in(scores_path);
  if (!in) throw std::invalid_argument("cannot open '" + scores_path + "'");
  std::vector<LabeledScore> rows = read_scores_csv(in);
  ScoreSet scores = score_set_from_labeled(rows);
  scores = expand_benign(scores, expand);
  Curve curve = parse_curve_kind(kind) == CurveKind::kRoc ? roc_curve(scores)
                                                          : pr_curve(scores);
  if (out_path.empty() || out_path == "-") {
    write_curve_csv(std::cout, curve, expand);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out)
      throw std::runtime_error("cannot open '" + out_path + "' for writing");
    write_curve_csv(out, curve, expand);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HMM channel-regime scoring pipeline"};
  app.require_subcommand(1);

  std::string log_level = "warn";
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  app.add_option("--log-level", log_level, "debug|info|warn|error");
  app.add_option("--seed", seed, "override the seed of the spec/config file");
  app.add_option("--jobs", jobs, "worker threads for the experiment runner");

  ExtractOptions ex;
  auto* extract =
      app.add_subcommand("extract", "extract a token trace from raw text");
  extract->add_option("--kind", ex.kind, "opcode|api")
      ->check(CLI::IsMember({"opcode", "api"}));
  extract->add_option("--channel", ex.channel, "static|dynamic")
      ->check(CLI::IsMember({"static", "dynamic"}));
  extract->add_option("--in", ex.input, "input file or directory")->required();
  extract->add_option("--out", ex.output, "output trace file or directory")
      ->required();
  extract->add_option("--sample-id", ex.sample_id,
                      "sample id (default: input stem)");
  extract->add_option("--label", ex.label, "family name or 'benign'");

  std::string gen_spec_path, gen_out;
  auto* gen = app.add_subcommand("gen", "generate a synthetic paired corpus");
  gen->add_option("--spec", gen_spec_path, "generation spec JSON")->required();
  gen->add_option("--out", gen_out, "corpus output directory")->required();

  std::string run_config, run_out, run_regimes, run_imbalance;
  bool run_save_models = false;
  auto* run = app.add_subcommand("run", "run the regime experiment matrix");
  run->add_option("--config", run_config, "experiment config JSON")->required();
  run->add_option("--out", run_out, "report output directory")->required();
  run->add_option("--regimes", run_regimes,
                  "comma list, e.g. dynamic/dynamic,static/static");
  run->add_option("--imbalance", run_imbalance,
                  "comma list of benign expansion factors");
  run->add_flag("--save-models", run_save_models,
                "write per-fold model JSON files");

  std::string curves_scores, curves_kind = "roc", curves_out;
  long long curves_expand = 1;
  auto* curves =
      app.add_subcommand("curves", "build a ROC or PR curve from a score CSV");
  curves->add_option("--scores", curves_scores, "score CSV path")->required();
  curves->add_option("--kind", curves_kind, "roc|pr")
      ->check(CLI::IsMember({"roc", "pr"}));
  curves->add_option("--expand", curves_expand,
                     "benign duplication factor (default 1)");
  curves->add_option("--out", curves_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (const char* env = std::getenv("SEQGAUGE_LOG"))
      g_log_level = parse_log_level(env);
    else
      g_log_level = parse_log_level(log_level);

    if (extract->parsed()) return cmd_extract(ex);
    if (gen->parsed()) return cmd_gen(gen_spec_path, gen_out, seed);
    if (run->parsed())
      return cmd_run(run_config, run_out, seed, jobs, run_regimes,
                     run_imbalance, run_save_models);
    if (curves->parsed())
      return cmd_curves(curves_scores, curves_kind, curves_expand, curves_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "seqgauge: error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "seqgauge: error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "seqgauge: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "seqgauge: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
