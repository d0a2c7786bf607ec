#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "seqgauge/hmm.hpp"
#include "seqgauge/util.hpp"

using namespace seqgauge;

namespace {

SymbolSequence seq_of(std::vector<int> symbols) {
  SymbolSequence s;
  s.symbols = std::move(symbols);
  return s;
}

// pi=[1,0], A=[[0,1],[1,0]], B=I: emits 0,1,0,1,... with probability 1.
HmmModel alternating_chain() {
  HmmModel m;
  m.n_states = 2;
  m.n_symbols = 2;
  m.initial = {1.0, 0.0};
  m.transition = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  m.emission = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  return m;
}

HmmModel single_state_uniform() {
  HmmModel m;
  m.n_states = 1;
  m.n_symbols = 2;
  m.initial = {1.0};
  m.transition = Matrix::from_rows({{1.0}});
  m.emission = Matrix::from_rows({{0.5, 0.5}});
  return m;
}

}  // namespace

TEST_CASE("forward log-likelihood, single state uniform emission") {
  auto ll = forward_log_likelihood(single_state_uniform(), seq_of({0, 1, 0, 1}));
  REQUIRE_THAT(ll, Catch::Matchers::WithinAbs(4.0 * std::log(0.5), 1e-12));
}

TEST_CASE("forward log-likelihood, deterministic alternating chain") {
  auto ll = forward_log_likelihood(alternating_chain(), seq_of({0, 1, 0}));
  REQUIRE(ll == 0.0);
}

TEST_CASE("forward matches brute-force path enumeration") {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + trial % 3, m = 2 + trial % 3, t = 1 + trial % 6;
    HmmModel model = oracle::random_model(n, m, gen);
    auto obs = oracle::random_observations(t, m, gen);
    double expected = oracle::path_enumeration_log_likelihood(model, obs);
    double got = forward_log_likelihood(model, seq_of(obs));
    REQUIRE_THAT(got, Catch::Matchers::WithinAbs(expected, 1e-9));
  }
}

TEST_CASE("forward validates its inputs") {
  HmmModel m = single_state_uniform();
  REQUIRE_THROWS_AS(forward_log_likelihood(m, seq_of({})),
                    std::invalid_argument);
  SymbolSequence bad = seq_of({0, 5, 0});
  bad.sample_id = "sample-x";
  REQUIRE_THROWS_WITH(
      forward_log_likelihood(m, bad),
      Catch::Matchers::ContainsSubstring("position 1") &&
          Catch::Matchers::ContainsSubstring("symbol 5") &&
          Catch::Matchers::ContainsSubstring("sample-x"));
}

TEST_CASE("impossible sequence scores -inf rather than throwing") {
  auto ll = forward_log_likelihood(alternating_chain(), seq_of({0, 0}));
  REQUIRE(std::isinf(ll));
  REQUIRE(ll < 0);
}

TEST_CASE("score is length-normalized log-likelihood") {
  REQUIRE_THAT(score(single_state_uniform(), seq_of({0, 1, 0, 1})),
               Catch::Matchers::WithinAbs(std::log(0.5), 1e-12));
  REQUIRE(score(alternating_chain(), seq_of({0, 1, 0})) == 0.0);

  std::mt19937 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    HmmModel model = oracle::random_model(2, 3, gen);
    auto obs = oracle::random_observations(1 + trial, 3, gen);
    SymbolSequence seq = seq_of(obs);
    REQUIRE(score(model, seq) ==
            forward_log_likelihood(model, seq) / double(obs.size()));
  }
}

TEST_CASE("backward entries are all one for a single-state model") {
  Matrix beta = backward_pass(single_state_uniform(), seq_of({0, 1, 1, 0}));
  for (int t = 0; t < beta.rows(); ++t) REQUIRE(beta(t, 0) == 1.0);
}

TEST_CASE("forward/backward agree on the total log-likelihood at every step") {
  std::mt19937 gen(13);
  for (int trial = 0; trial < 25; ++trial) {
    HmmModel model = oracle::random_model(2, 3, gen);
    auto obs = oracle::random_observations(5, 3, gen);
    SymbolSequence seq = seq_of(obs);
    ForwardResult fwd = forward_pass(model, seq);
    Matrix beta = backward_pass(model, seq, fwd.step_sums);
    double log_scale = 0.0;
    for (double s : fwd.step_sums) log_scale += std::log(s);
    for (int t = 0; t < int(obs.size()); ++t) {
      double joint = 0.0;
      for (int i = 0; i < model.n_states; ++i)
        joint += fwd.alpha(t, i) * beta(t, i);
      REQUIRE_THAT(log_scale + std::log(joint),
                   Catch::Matchers::WithinAbs(fwd.log_likelihood, 1e-9));
    }
  }
}

TEST_CASE("backward recovers exact log-probability on the deterministic chain") {
  SymbolSequence seq = seq_of({0, 1, 0});
  HmmModel m = alternating_chain();
  ForwardResult fwd = forward_pass(m, seq);
  Matrix beta = backward_pass(m, seq, fwd.step_sums);
  double joint = 0.0;
  for (int i = 0; i < m.n_states; ++i) joint += fwd.alpha(0, i) * beta(0, i);
  REQUIRE_THAT(std::log(joint), Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE(fwd.log_likelihood == 0.0);
}

TEST_CASE("posterior decoding follows the deterministic chain") {
  auto states = posterior_decode(alternating_chain(), seq_of({0, 1, 0}));
  REQUIRE(states == std::vector<int>{0, 1, 0});
}

TEST_CASE("posterior decoding of a single-state model is all zeros") {
  auto states = posterior_decode(single_state_uniform(), seq_of({0, 1, 1}));
  REQUIRE(states == std::vector<int>(3, 0));
}

TEST_CASE("posterior decoding matches path-enumeration posteriors") {
  std::mt19937 gen(17);
  for (int trial = 0; trial < 50; ++trial) {
    HmmModel model = oracle::random_model(2, 2, gen);
    auto obs = oracle::random_observations(4, 2, gen);
    REQUIRE(posterior_decode(model, seq_of(obs)) ==
            oracle::path_enumeration_decode(model, obs));
  }
}

TEST_CASE("posterior ties break toward the lower state index") {
  // Identical rows everywhere: the two states are indistinguishable, so every
  // posterior is an exact tie.
  HmmModel m;
  m.n_states = 2;
  m.n_symbols = 2;
  m.initial = {0.5, 0.5};
  m.transition = Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  m.emission = Matrix::from_rows({{0.3, 0.7}, {0.3, 0.7}});
  auto states = posterior_decode(m, seq_of({0, 1, 1, 0}));
  REQUIRE(states == std::vector<int>(4, 0));
}

TEST_CASE("single-state Baum-Welch recovers empirical symbol frequencies") {
  std::vector<SymbolSequence> seqs = {seq_of({0, 1, 1, 2}),
                                      seq_of({2, 2, 1, 1, 1, 0})};
  // counts: 0 x2, 1 x5, 2 x3 over 10 symbols
  TrainingOutcome out = baum_welch_train(seqs, 1, 3, {.seed = 5});
  REQUIRE_THAT(out.model.emission(0, 0), Catch::Matchers::WithinAbs(0.2, 1e-6));
  REQUIRE_THAT(out.model.emission(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-6));
  REQUIRE_THAT(out.model.emission(0, 2), Catch::Matchers::WithinAbs(0.3, 1e-6));
  REQUIRE(out.converged);
}

TEST_CASE("Baum-Welch log-likelihood trace is non-decreasing") {
  std::mt19937 gen(23);
  for (int trial = 0; trial < 50; ++trial) {
    HmmModel source = oracle::random_model(2, 4, gen);
    std::vector<SymbolSequence> seqs;
    for (int s = 0; s < 3; ++s)
      seqs.push_back(seq_of(oracle::random_observations(20, 4, gen)));
    TrainingOutcome out =
        baum_welch_train(seqs, 2, 4, {.max_iters = 30, .seed = uint64_t(trial)});
    for (size_t i = 1; i < out.log_likelihood_trace.size(); ++i)
      REQUIRE(out.log_likelihood_trace[i] >=
              out.log_likelihood_trace[i - 1] - 1e-8);
  }
}

TEST_CASE("training preserves row-stochasticity") {
  std::mt19937 gen(29);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<SymbolSequence> seqs;
    for (int s = 0; s < 4; ++s)
      seqs.push_back(seq_of(oracle::random_observations(15, 3, gen)));
    TrainingOutcome out =
        baum_welch_train(seqs, 3, 3, {.max_iters = 25, .seed = uint64_t(trial)});
    REQUIRE_NOTHROW(out.model.validate());
  }
}

TEST_CASE("Baum-Welch rejects bad inputs") {
  std::vector<SymbolSequence> empty;
  REQUIRE_THROWS_AS(baum_welch_train(empty, 2, 2, {}), std::invalid_argument);
  std::vector<SymbolSequence> seqs = {seq_of({0, 3})};
  REQUIRE_THROWS_AS(baum_welch_train(seqs, 2, 2, {}), std::invalid_argument);
  seqs = {seq_of({0, 1})};
  REQUIRE_THROWS_AS(baum_welch_train(seqs, 0, 2, {}), std::invalid_argument);
  REQUIRE_THROWS_AS(baum_welch_train(seqs, 2, 0, {}), std::invalid_argument);
}

TEST_CASE("models trained on a planted family separate it from another") {
  // Two planted models with disjoint high-probability emissions; training on
  // samples of one must give held-out samples of that model a strictly higher
  // LLPO than samples of the other, for every seed.
  auto make_source = [](bool first) {
    HmmModel m;
    m.n_states = 2;
    m.n_symbols = 6;
    m.initial = {0.6, 0.4};
    m.transition = Matrix::from_rows({{0.7, 0.3}, {0.4, 0.6}});
    if (first)
      m.emission = Matrix::from_rows(
          {{0.45, 0.45, 0.04, 0.02, 0.02, 0.02},
           {0.45, 0.04, 0.45, 0.02, 0.02, 0.02}});
    else
      m.emission = Matrix::from_rows(
          {{0.02, 0.02, 0.02, 0.45, 0.45, 0.04},
           {0.02, 0.02, 0.04, 0.45, 0.02, 0.45}});
    return m;
  };
  HmmModel own = make_source(true);
  HmmModel other = make_source(false);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<SymbolSequence> train;
    for (int i = 0; i < 20; ++i)
      train.push_back(sample_sequence(own, 60, derive_seed(seed, "train", i)));
    TrainingOutcome out = baum_welch_train(
        train, 2, 6, {.max_iters = 60, .seed = seed});
    SymbolSequence held_own =
        sample_sequence(own, 60, derive_seed(seed, "held-own"));
    SymbolSequence held_other =
        sample_sequence(other, 60, derive_seed(seed, "held-other"));
    REQUIRE(score(out.model, held_own) > score(out.model, held_other));
  }
}

TEST_CASE("training is deterministic given the seed") {
  std::mt19937 gen(31);
  std::vector<SymbolSequence> seqs;
  for (int s = 0; s < 3; ++s)
    seqs.push_back(seq_of(oracle::random_observations(25, 3, gen)));
  TrainingOutcome a = baum_welch_train(seqs, 2, 3, {.max_iters = 40, .seed = 9});
  TrainingOutcome b = baum_welch_train(seqs, 2, 3, {.max_iters = 40, .seed = 9});
  REQUIRE(a.model == b.model);
  REQUIRE(a.log_likelihood_trace == b.log_likelihood_trace);
  REQUIRE(a.iterations == b.iterations);
  REQUIRE(a.converged == b.converged);
}

TEST_CASE("restarts=1 is exactly a single Baum-Welch run") {
  std::mt19937 gen(37);
  std::vector<SymbolSequence> seqs;
  for (int s = 0; s < 3; ++s)
    seqs.push_back(seq_of(oracle::random_observations(20, 3, gen)));
  TrainConfig cfg{.max_iters = 30, .seed = 4, .restarts = 1};
  TrainingOutcome a = train_with_restarts(seqs, 2, 3, cfg);
  TrainingOutcome b = baum_welch_train(seqs, 2, 3, cfg);
  REQUIRE(a.model == b.model);
  REQUIRE(a.log_likelihood_trace == b.log_likelihood_trace);
}

TEST_CASE("restarts return the best of the individual runs") {
  std::mt19937 gen(41);
  std::vector<SymbolSequence> seqs;
  for (int s = 0; s < 4; ++s)
    seqs.push_back(seq_of(oracle::random_observations(30, 4, gen)));
  TrainConfig cfg{.max_iters = 25, .seed = 100, .restarts = 5};
  TrainingOutcome best = train_with_restarts(seqs, 2, 4, cfg);
  for (int r = 0; r < 5; ++r) {
    TrainConfig single = cfg;
    single.seed = cfg.seed + uint64_t(r);
    single.restarts = 1;
    TrainingOutcome one = baum_welch_train(seqs, 2, 4, single);
    REQUIRE(best.log_likelihood_trace.back() >=
            one.log_likelihood_trace.back());
  }
}

TEST_CASE("restarts do not hurt planted-model recovery") {
  // Recovery: the trained model explains held-out data nearly as well as the
  // planted model itself. The restart rate must be at least the single-run
  // rate over the same ten seeds.
  HmmModel source;
  source.n_states = 2;
  source.n_symbols = 5;
  source.initial = {0.5, 0.5};
  source.transition = Matrix::from_rows({{0.85, 0.15}, {0.2, 0.8}});
  source.emission = Matrix::from_rows(
      {{0.6, 0.3, 0.05, 0.03, 0.02}, {0.02, 0.03, 0.05, 0.3, 0.6}});

  auto recovery = [&](int restarts) {
    int recovered = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      std::vector<SymbolSequence> train;
      for (int i = 0; i < 25; ++i)
        train.push_back(
            sample_sequence(source, 60, derive_seed(seed, "rec-train", i)));
      std::vector<SymbolSequence> held;
      for (int i = 0; i < 10; ++i)
        held.push_back(
            sample_sequence(source, 60, derive_seed(seed, "rec-held", i)));
      TrainingOutcome out = train_with_restarts(
          train, 2, 5,
          {.max_iters = 50, .seed = seed * 1000, .restarts = restarts});
      double trained = 0.0, truth = 0.0;
      for (const auto& h : held) {
        trained += score(out.model, h);
        truth += score(source, h);
      }
      trained /= held.size();
      truth /= held.size();
      if (trained >= truth - 0.05) ++recovered;
    }
    return recovered;
  };
  REQUIRE(recovery(5) >= recovery(1));
}

TEST_CASE("training on planted samples reaches the planted model's held-out LLPO") {
  HmmModel source;
  source.n_states = 2;
  source.n_symbols = 4;
  source.initial = {0.5, 0.5};
  source.transition = Matrix::from_rows({{0.8, 0.2}, {0.25, 0.75}});
  source.emission =
      Matrix::from_rows({{0.55, 0.35, 0.05, 0.05}, {0.05, 0.05, 0.35, 0.55}});
  std::vector<SymbolSequence> train;
  for (int i = 0; i < 200; ++i)
    train.push_back(sample_sequence(source, 100, derive_seed(77, "rt", i)));
  std::vector<SymbolSequence> held;
  for (int i = 0; i < 40; ++i)
    held.push_back(sample_sequence(source, 100, derive_seed(78, "rt-held", i)));
  TrainingOutcome out = train_with_restarts(
      train, 2, 4, {.max_iters = 300, .seed = 3, .restarts = 3});
  double trained = 0.0, truth = 0.0;
  for (const auto& h : held) {
    trained += score(out.model, h);
    truth += score(source, h);
  }
  trained /= held.size();
  truth /= held.size();
  REQUIRE(trained >= truth - 0.05);
}

TEST_CASE("sample_sequence follows degenerate models exactly") {
  auto seq = sample_sequence(alternating_chain(), 4, 123);
  REQUIRE(seq.symbols == std::vector<int>{0, 1, 0, 1});

  HmmModel constant;
  constant.n_states = 1;
  constant.n_symbols = 2;
  constant.initial = {1.0};
  constant.transition = Matrix::from_rows({{1.0}});
  constant.emission = Matrix::from_rows({{1.0, 0.0}});
  REQUIRE(sample_sequence(constant, 6, 9).symbols == std::vector<int>(6, 0));
}

TEST_CASE("sample_sequence is deterministic and rejects bad lengths") {
  std::mt19937 gen(43);
  HmmModel m = oracle::random_model(2, 3, gen);
  REQUIRE(sample_sequence(m, 50, 7).symbols == sample_sequence(m, 50, 7).symbols);
  REQUIRE_THROWS_AS(sample_sequence(m, 0, 7), std::invalid_argument);
}

TEST_CASE("sampled symbol frequencies converge to the emission row") {
  HmmModel m;
  m.n_states = 1;
  m.n_symbols = 2;
  m.initial = {1.0};
  m.transition = Matrix::from_rows({{1.0}});
  m.emission = Matrix::from_rows({{0.3, 0.7}});
  auto seq = sample_sequence(m, 100000, 2024);
  double ones = 0;
  for (int s : seq.symbols) ones += s;
  REQUIRE_THAT(ones / 100000.0, Catch::Matchers::WithinAbs(0.7, 0.01));
}
