#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "seqgauge/hmm.hpp"

namespace seqgauge {

// A trained model plus the provenance needed to score with it later: which
// vocabulary it was trained against, which channel, which family, which seed.
struct ModelBundle {
  HmmModel model;
  std::string vocabulary_digest;
  Channel channel = Channel::kDynamic;
  std::string family;
  uint64_t seed = 0;
};

inline nlohmann::ordered_json to_json(const ModelBundle& b) {
  nlohmann::ordered_json j;
  j["n_states"] = b.model.n_states;
  j["n_symbols"] = b.model.n_symbols;
  j["initial"] = b.model.initial;
  auto rows_of = [](const Matrix& m) {
    std::vector<std::vector<double>> rows;
    rows.reserve(m.rows());
    for (int r = 0; r < m.rows(); ++r)
      rows.emplace_back(m.row(r).begin(), m.row(r).end());
    return rows;
  };
  j["transition"] = rows_of(b.model.transition);
  j["emission"] = rows_of(b.model.emission);
  j["vocabulary_digest"] = b.vocabulary_digest;
  j["channel"] = to_string(b.channel);
  j["family"] = b.family;
  j["seed"] = b.seed;
  return j;
}

inline ModelBundle model_bundle_from_json(const nlohmann::json& j) {
  ModelBundle b;
  b.model.n_states = j.at("n_states").get<int>();
  b.model.n_symbols = j.at("n_symbols").get<int>();
  b.model.initial = j.at("initial").get<std::vector<double>>();
  auto matrix_of = [](const nlohmann::json& rows, int expect_cols) {
    Matrix m(static_cast<int>(rows.size()), expect_cols);
    for (int r = 0; r < m.rows(); ++r) {
      const auto& row = rows.at(r);
      if (static_cast<int>(row.size()) != expect_cols)
        throw std::invalid_argument("model json: ragged matrix row");
      for (int c = 0; c < expect_cols; ++c) m(r, c) = row.at(c).get<double>();
    }
    return m;
  };
  b.model.transition = matrix_of(j.at("transition"), b.model.n_states);
  b.model.emission = matrix_of(j.at("emission"), b.model.n_symbols);
  b.vocabulary_digest = j.at("vocabulary_digest").get<std::string>();
  b.channel = parse_channel(j.at("channel").get<std::string>());
  b.family = j.at("family").get<std::string>();
  b.seed = j.at("seed").get<uint64_t>();
  b.model.validate();
  return b;
}

inline void save_model(const std::string& path, const ModelBundle& b) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_json(b).dump(2) << '\n';
}

inline ModelBundle load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  return model_bundle_from_json(j);
}

}  // namespace seqgauge
