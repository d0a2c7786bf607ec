#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqgauge/matrix.hpp"
#include "seqgauge/rng.hpp"

namespace seqgauge {

enum class Channel { kStatic, kDynamic };

inline std::string to_string(Channel c) {
  return c == Channel::kStatic ? "static" : "dynamic";
}

inline Channel parse_channel(std::string_view s) {
  if (s == "static") return Channel::kStatic;
  if (s == "dynamic") return Channel::kDynamic;
  throw std::invalid_argument("unknown channel '" + std::string(s) +
                              "' (expected static|dynamic)");
}

// Malware family tag, or benign when the family name is empty.
struct SampleLabel {
  std::string family;

  bool is_benign() const { return family.empty(); }
  static SampleLabel benign() { return {}; }
  static SampleLabel malware(std::string family_name) {
    return {std::move(family_name)};
  }
  bool operator==(const SampleLabel&) const = default;
};

// Observation sequence of vocabulary indices, tagged with its provenance.
struct SymbolSequence {
  std::vector<int> symbols;
  Channel channel = Channel::kDynamic;
  std::string sample_id;
  SampleLabel label;
};

// lambda = (A, B, pi): N states, M observation symbols, row-stochastic
// transition (N x N) and emission (N x M) matrices, initial distribution pi.
struct HmmModel {
  int n_states = 0;
  int n_symbols = 0;
  std::vector<double> initial;
  Matrix transition;
  Matrix emission;

  bool operator==(const HmmModel&) const = default;

  void validate() const {
    constexpr double kTol = 1e-9;
    if (n_states < 1 || n_symbols < 1)
      throw std::invalid_argument("HmmModel: n_states and n_symbols must be >= 1");
    if (static_cast<int>(initial.size()) != n_states ||
        transition.rows() != n_states || transition.cols() != n_states ||
        emission.rows() != n_states || emission.cols() != n_symbols)
      throw std::invalid_argument("HmmModel: dimension mismatch");
    double s = 0.0;
    for (double p : initial) {
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("HmmModel: initial entry outside [0,1]");
      s += p;
    }
    if (std::fabs(s - 1.0) > kTol)
      throw std::invalid_argument("HmmModel: initial distribution not normalized");
    if (!rows_stochastic(transition, kTol))
      throw std::invalid_argument("HmmModel: transition matrix not row-stochastic");
    if (!rows_stochastic(emission, kTol))
      throw std::invalid_argument("HmmModel: emission matrix not row-stochastic");
  }
};

struct TrainingOutcome {
  HmmModel model;
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
  uint64_t seed = 0;
};

struct TrainConfig {
  int max_iters = 200;
  double tol = 1e-4;
  uint64_t seed = 0;
  // Emission probabilities are floored at this value after each update so a
  // trained model never assigns exact zero to an in-vocabulary symbol, which
  // would send held-out log-likelihoods to -inf.
  double emission_floor = 1e-10;
  int restarts = 1;
};

namespace detail {

inline void check_sequence(const HmmModel& model, const SymbolSequence& seq) {
  if (seq.symbols.empty())
    throw std::invalid_argument("empty observation sequence" +
                                (seq.sample_id.empty()
                                     ? std::string()
                                     : " for sample '" + seq.sample_id + "'"));
  for (size_t t = 0; t < seq.symbols.size(); ++t) {
    int s = seq.symbols[t];
    if (s < 0 || s >= model.n_symbols)
      throw std::invalid_argument(
          "symbol " + std::to_string(s) + " at position " + std::to_string(t) +
          " is outside the model range [0, " + std::to_string(model.n_symbols) +
          ")" +
          (seq.sample_id.empty() ? std::string()
                                 : " in sample '" + seq.sample_id + "'"));
  }
}

}  // namespace detail

// Scaled forward trellis. alpha(t, i) holds the per-step-normalized forward
// probability; step_sums[t] is the pre-normalization column sum, so
// log P(O|lambda) = sum_t log(step_sums[t]).
struct ForwardResult {
  Matrix alpha;
  std::vector<double> step_sums;
  double log_likelihood = 0.0;
};

inline ForwardResult forward_pass(const HmmModel& model,
                                  const SymbolSequence& seq) {
  detail::check_sequence(model, seq);
  const int n = model.n_states;
  const int tlen = static_cast<int>(seq.symbols.size());
  ForwardResult out;
  out.alpha = Matrix(tlen, n);
  out.step_sums.resize(tlen);
  double log_p = 0.0;
  for (int t = 0; t < tlen; ++t) {
    const int obs = seq.symbols[t];
    double s = 0.0;
    if (t == 0) {
      for (int i = 0; i < n; ++i) {
        double v = model.initial[i] * model.emission(i, obs);
        out.alpha(0, i) = v;
        s += v;
      }
    } else {
      for (int j = 0; j < n; ++j) {
        double v = 0.0;
        for (int i = 0; i < n; ++i)
          v += out.alpha(t - 1, i) * model.transition(i, j);
        v *= model.emission(j, obs);
        out.alpha(t, j) = v;
        s += v;
      }
    }
    out.step_sums[t] = s;
    if (s > 0.0) {
      for (int i = 0; i < n; ++i) out.alpha(t, i) /= s;
      log_p += std::log(s);
    } else {
      // The sequence has zero probability under this model; leave the rest of
      // the trellis at zero and report -inf.
      log_p = -std::numeric_limits<double>::infinity();
      for (int u = t; u < tlen; ++u) out.step_sums[u] = 0.0;
      break;
    }
  }
  out.log_likelihood = log_p;
  return out;
}

// Natural log of P(O|lambda), computed with per-step scaling so long
// sequences do not underflow. Returns -inf for impossible sequences.
inline double forward_log_likelihood(const HmmModel& model,
                                     const SymbolSequence& seq) {
  return forward_pass(model, seq).log_likelihood;
}

// Log-likelihood per observation (LLPO). Scores of sequences with different
// lengths are comparable under this normalization; higher means more similar
// to the training family.
inline double score(const HmmModel& model, const SymbolSequence& seq) {
  return forward_log_likelihood(model, seq) /
         static_cast<double>(seq.symbols.size());
}

// Backward pass under the forward pass's scaling constants:
// beta_hat(t, i) = beta(t, i) / prod_{u>t} step_sums[u].
// With that choice sum_i alpha_hat(t,i) * beta_hat(t,i) == 1 at every t, so
// forward and backward reconstruct the same total log-likelihood.
inline Matrix backward_pass(const HmmModel& model, const SymbolSequence& seq,
                            const std::vector<double>& step_sums) {
  detail::check_sequence(model, seq);
  const int n = model.n_states;
  const int tlen = static_cast<int>(seq.symbols.size());
  if (static_cast<int>(step_sums.size()) != tlen)
    throw std::invalid_argument("backward_pass: scale vector length mismatch");
  Matrix beta(tlen, n);
  for (int i = 0; i < n; ++i) beta(tlen - 1, i) = 1.0;
  for (int t = tlen - 2; t >= 0; --t) {
    const int obs_next = seq.symbols[t + 1];
    const double s = step_sums[t + 1];
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      for (int j = 0; j < n; ++j)
        v += model.transition(i, j) * model.emission(j, obs_next) *
             beta(t + 1, j);
      beta(t, i) = s > 0.0 ? v / s : 0.0;
    }
  }
  return beta;
}

inline Matrix backward_pass(const HmmModel& model, const SymbolSequence& seq) {
  return backward_pass(model, seq, forward_pass(model, seq).step_sums);
}

// Problem 2 solved by posterior (gamma) decoding: at each step the state with
// the highest posterior probability, ties broken toward the lower index. This
// maximizes the expected number of individually correct states, as opposed to
// a max-path dynamic program.
inline std::vector<int> posterior_decode(const HmmModel& model,
                                         const SymbolSequence& seq) {
  ForwardResult fwd = forward_pass(model, seq);
  if (!std::isfinite(fwd.log_likelihood))
    throw std::invalid_argument(
        "posterior_decode: sequence has zero probability under the model");
  Matrix beta = backward_pass(model, seq, fwd.step_sums);
  const int n = model.n_states;
  const int tlen = static_cast<int>(seq.symbols.size());
  std::vector<int> states(tlen);
  for (int t = 0; t < tlen; ++t) {
    int best = 0;
    double best_p = fwd.alpha(t, 0) * beta(t, 0);
    for (int i = 1; i < n; ++i) {
      double p = fwd.alpha(t, i) * beta(t, i);
      if (p > best_p) {
        best_p = p;
        best = i;
      }
    }
    states[t] = best;
  }
  return states;
}

namespace detail {

// Uniform rows with a small seeded relative perturbation, renormalized.
// The perturbation is +-5% of the uniform mass: large enough to break EM's
// symmetry, small enough to stay strictly positive for any row width.
inline HmmModel initial_model(int n_states, int n_symbols, Rng& rng) {
  auto perturbed_row = [&](std::span<double> row) {
    const double base = 1.0 / static_cast<double>(row.size());
    for (double& x : row) x = base * (1.0 + rng.uniform(-0.05, 0.05));
    normalize(row);
  };
  HmmModel m;
  m.n_states = n_states;
  m.n_symbols = n_symbols;
  m.initial.resize(n_states);
  m.transition = Matrix(n_states, n_states);
  m.emission = Matrix(n_states, n_symbols);
  perturbed_row(m.initial);
  for (int i = 0; i < n_states; ++i) perturbed_row(m.transition.row(i));
  for (int i = 0; i < n_states; ++i) perturbed_row(m.emission.row(i));
  return m;
}

struct BaumWelchStats {
  std::vector<double> pi_acc;
  Matrix a_num;
  std::vector<double> a_den;
  Matrix b_num;
  std::vector<double> b_den;
  double total_log_likelihood = 0.0;

  BaumWelchStats(int n, int m)
      : pi_acc(n, 0.0), a_num(n, n), a_den(n, 0.0), b_num(n, m), b_den(n, 0.0) {}
};

// One E-step over every sequence: expected-count accumulation with no
// cross-sequence transitions.
inline BaumWelchStats accumulate_stats(const HmmModel& model,
                                       std::span<const SymbolSequence> seqs) {
  const int n = model.n_states;
  BaumWelchStats st(n, model.n_symbols);
  std::vector<double> gamma(n);
  for (const SymbolSequence& seq : seqs) {
    ForwardResult fwd = forward_pass(model, seq);
    st.total_log_likelihood += fwd.log_likelihood;
    if (!std::isfinite(fwd.log_likelihood)) continue;
    Matrix beta = backward_pass(model, seq, fwd.step_sums);
    const int tlen = static_cast<int>(seq.symbols.size());
    for (int t = 0; t < tlen; ++t) {
      double norm = 0.0;
      for (int i = 0; i < n; ++i) {
        gamma[i] = fwd.alpha(t, i) * beta(t, i);
        norm += gamma[i];
      }
      if (norm > 0.0)
        for (int i = 0; i < n; ++i) gamma[i] /= norm;
      const int obs = seq.symbols[t];
      for (int i = 0; i < n; ++i) {
        st.b_num(i, obs) += gamma[i];
        st.b_den[i] += gamma[i];
        if (t == 0) st.pi_acc[i] += gamma[i];
        if (t + 1 < tlen) st.a_den[i] += gamma[i];
      }
      if (t + 1 < tlen) {
        const int obs_next = seq.symbols[t + 1];
        const double s_next = fwd.step_sums[t + 1];
        if (s_next > 0.0) {
          for (int i = 0; i < n; ++i) {
            const double ai = fwd.alpha(t, i);
            if (ai == 0.0) continue;
            for (int j = 0; j < n; ++j) {
              st.a_num(i, j) += ai * model.transition(i, j) *
                                model.emission(j, obs_next) * beta(t + 1, j) /
                                s_next;
            }
          }
        }
      }
    }
  }
  return st;
}

inline void apply_m_step(HmmModel& model, const BaumWelchStats& st,
                         size_t n_sequences, double emission_floor) {
  const int n = model.n_states;
  const int m = model.n_symbols;
  for (int i = 0; i < n; ++i)
    model.initial[i] = st.pi_acc[i] / static_cast<double>(n_sequences);
  normalize(model.initial);
  for (int i = 0; i < n; ++i) {
    auto row = model.transition.row(i);
    if (st.a_den[i] > 0.0) {
      for (int j = 0; j < n; ++j) row[j] = st.a_num(i, j) / st.a_den[i];
    } else {
      for (int j = 0; j < n; ++j) row[j] = 1.0 / n;
    }
    normalize(row);
  }
  for (int i = 0; i < n; ++i) {
    auto row = model.emission.row(i);
    if (st.b_den[i] > 0.0) {
      for (int k = 0; k < m; ++k)
        row[k] = std::max(st.b_num(i, k) / st.b_den[i], emission_floor);
    } else {
      for (int k = 0; k < m; ++k) row[k] = 1.0 / m;
    }
    normalize(row);
  }
}

}  // namespace detail

// Problem 3: fit lambda = (A, B, pi) to the training sequences by
// expectation-maximization (Baum-Welch), accumulating per-sequence statistics
// so multiple sequences never induce artificial cross-sequence transitions.
//
// Each iteration evaluates the total log-likelihood of the data under the
// current model (one trace entry per iteration) and stops once the
// improvement falls below config.tol or max_iters is reached. The returned
// model is always the one that produced the final trace entry.
inline TrainingOutcome baum_welch_train(std::span<const SymbolSequence> seqs,
                                        int n_states, int n_symbols,
                                        const TrainConfig& config = {}) {
  if (seqs.empty())
    throw std::invalid_argument("baum_welch_train: empty training set");
  if (n_states < 1 || n_symbols < 1)
    throw std::invalid_argument(
        "baum_welch_train: n_states and n_symbols must be >= 1");
  if (config.max_iters < 1)
    throw std::invalid_argument("baum_welch_train: max_iters must be >= 1");

  Rng rng(config.seed);
  HmmModel model = detail::initial_model(n_states, n_symbols, rng);
  for (const SymbolSequence& seq : seqs) detail::check_sequence(model, seq);

  TrainingOutcome out;
  out.seed = config.seed;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.max_iters; ++it) {
    detail::BaumWelchStats st = detail::accumulate_stats(model, seqs);
    out.log_likelihood_trace.push_back(st.total_log_likelihood);
    if (it > 0 && st.total_log_likelihood - prev_ll < config.tol) {
      out.converged = true;
      break;
    }
    prev_ll = st.total_log_likelihood;
    if (it + 1 < config.max_iters)
      detail::apply_m_step(model, st, seqs.size(), config.emission_floor);
  }
  out.iterations = static_cast<int>(out.log_likelihood_trace.size());
  out.model = std::move(model);
  return out;
}

// Baum-Welch is a hill climb; rerun it from config.restarts seeded starting
// points (seed, seed+1, ...) and keep the outcome with the best final
// log-likelihood.
inline TrainingOutcome train_with_restarts(std::span<const SymbolSequence> seqs,
                                           int n_states, int n_symbols,
                                           const TrainConfig& config = {}) {
  if (config.restarts < 1)
    throw std::invalid_argument("train_with_restarts: restarts must be >= 1");
  std::optional<TrainingOutcome> best;
  for (int r = 0; r < config.restarts; ++r) {
    TrainConfig c = config;
    c.seed = config.seed + static_cast<uint64_t>(r);
    TrainingOutcome outcome = baum_welch_train(seqs, n_states, n_symbols, c);
    if (!best || outcome.log_likelihood_trace.back() >
                     best->log_likelihood_trace.back())
      best = std::move(outcome);
  }
  return *best;
}

namespace detail {

inline std::vector<int> sample_symbols(const HmmModel& model, int length,
                                       Rng& rng) {
  std::vector<int> symbols(length);
  int state = rng.categorical(model.initial);
  for (int t = 0; t < length; ++t) {
    symbols[t] = rng.categorical(model.emission.row(state));
    if (t + 1 < length) state = rng.categorical(model.transition.row(state));
  }
  return symbols;
}

}  // namespace detail

// Simulates the hidden chain and its emissions. Deterministic given the seed.
inline SymbolSequence sample_sequence(const HmmModel& model, int length,
                                      uint64_t seed) {
  if (length < 1)
    throw std::invalid_argument("sample_sequence: length must be >= 1");
  model.validate();
  Rng rng(seed);
  SymbolSequence seq;
  seq.symbols = detail::sample_symbols(model, length, rng);
  return seq;
}

}  // namespace seqgauge
