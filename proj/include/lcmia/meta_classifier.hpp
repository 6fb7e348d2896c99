#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcmia/corpus.hpp"
#include "lcmia/error.hpp"
#include "lcmia/prompt.hpp"

namespace lcmia {

inline constexpr std::array<std::size_t, 5> kMetaSplitCounts{2, 4, 6, 8, 10};
inline constexpr std::size_t kFeatureCount = kMetaSplitCounts.size() * 3;

// Public ordering contract: split count ascending, then (loss, bert, bleu).
inline const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (auto k : kMetaSplitCounts)
      for (const char* m : {"loss", "bert", "bleu"}) v.push_back("k" + std::to_string(k) + "." + m);
    return v;
  }();
  return names;
}

inline std::string feature_order_checksum() {
  std::string blob;
  for (const auto& n : feature_names()) blob += n + "\n";
  return sha256_hex(blob);
}

struct MembershipFeatureVector {
  std::array<double, kFeatureCount> values{};
  std::string sample_id;
  std::optional<Membership> label;

  void validate() const {
    for (double v : values)
      if (!std::isfinite(v)) throw ValidationError("feature vector of '" + sample_id + "' has a non-finite value");
  }
};

struct Normalizer {
  std::array<double, kFeatureCount> means{};
  std::array<double, kFeatureCount> stddevs{};
};

// Per-dimension mean and population stddev; zero-variance dimensions get
// stddev 1.
inline Normalizer fit_normalizer(std::span<const MembershipFeatureVector> reference) {
  if (reference.empty()) throw ValidationError("cannot fit a normalizer on an empty reference set");
  Normalizer n;
  const double count = static_cast<double>(reference.size());
  for (const auto& f : reference)
    for (std::size_t j = 0; j < kFeatureCount; ++j) n.means[j] += f.values[j];
  for (auto& m : n.means) m /= count;
  for (const auto& f : reference)
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      double d = f.values[j] - n.means[j];
      n.stddevs[j] += d * d;
    }
  for (auto& s : n.stddevs) {
    s = std::sqrt(s / count);
    if (!(s > 1e-12)) s = 1.0;
  }
  return n;
}

struct TrainingHyper {
  double lr = 0.1;
  int epochs = 500;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct TrainingMeta {
  int epochs_run = 0;
  double final_loss = 0;
  TrainingHyper hyper;
  std::vector<double> loss_history;  // loss before each update, then final; not persisted
};

struct MetaModel {
  std::array<double, kFeatureCount> weights{};
  double bias = 0;
  Normalizer normalizer;
  TrainingMeta training;

  std::array<double, kFeatureCount> zscore(std::span<const double> x) const {
    if (x.size() != kFeatureCount)
      throw ValidationError("meta-classifier expects " + std::to_string(kFeatureCount) +
                            " features, got " + std::to_string(x.size()));
    std::array<double, kFeatureCount> z{};
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      z[j] = (x[j] - normalizer.means[j]) / normalizer.stddevs[j];
    return z;
  }
};

namespace detail {

inline double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + exp(s)) without overflow.
inline double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

}  // namespace detail

inline double predict(const MetaModel& model, std::span<const double> features) {
  auto z = model.zscore(features);
  double s = model.bias;
  for (std::size_t j = 0; j < kFeatureCount; ++j) s += model.weights[j] * z[j];
  return detail::sigmoid(s);
}

inline double predict(const MetaModel& model, const MembershipFeatureVector& f) {
  return predict(model, f.values);
}

// Full-batch gradient descent on L2-regularised binary cross-entropy over
// z-scored features. Weights start at zero, so the run is deterministic.
inline MetaModel train(std::span<const MembershipFeatureVector> reference,
                       const TrainingHyper& hyper = {}) {
  std::size_t pos = 0;
  for (const auto& f : reference) {
    if (!f.label) throw ValidationError("training vector '" + f.sample_id + "' has no label");
    f.validate();
    pos += *f.label == Membership::Member;
  }
  if (pos == 0 || pos == reference.size())
    throw ValidationError("meta-classifier training needs both classes in the reference set");

  MetaModel m;
  m.normalizer = fit_normalizer(reference);
  m.training.hyper = hyper;
  const std::size_t n = reference.size();
  std::vector<std::array<double, kFeatureCount>> z(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = m.zscore(reference[i].values);
    y[i] = *reference[i].label == Membership::Member ? 1.0 : 0.0;
  }

  auto loss_and_grad = [&](std::array<double, kFeatureCount>* gw, double* gb) {
    double loss = 0;
    if (gw) gw->fill(0.0);
    if (gb) *gb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = m.bias;
      for (std::size_t j = 0; j < kFeatureCount; ++j) s += m.weights[j] * z[i][j];
      loss += detail::softplus(s) - y[i] * s;
      if (gw) {
        double r = detail::sigmoid(s) - y[i];
        for (std::size_t j = 0; j < kFeatureCount; ++j) (*gw)[j] += r * z[i][j];
        *gb += r;
      }
    }
    loss /= static_cast<double>(n);
    double wsq = 0;
    for (double w : m.weights) wsq += w * w;
    loss += 0.5 * hyper.l2 * wsq;
    if (gw) {
      for (std::size_t j = 0; j < kFeatureCount; ++j)
        (*gw)[j] = (*gw)[j] / static_cast<double>(n) + hyper.l2 * m.weights[j];
      *gb /= static_cast<double>(n);
    }
    return loss;
  };

  std::array<double, kFeatureCount> gw{};
  double gb = 0;
  for (int e = 0; e < hyper.epochs; ++e) {
    m.training.loss_history.push_back(loss_and_grad(&gw, &gb));
    for (std::size_t j = 0; j < kFeatureCount; ++j) m.weights[j] -= hyper.lr * gw[j];
    m.bias -= hyper.lr * gb;
    ++m.training.epochs_run;
  }
  m.training.final_loss = loss_and_grad(nullptr, nullptr);
  m.training.loss_history.push_back(m.training.final_loss);
  return m;
}

inline nlohmann::json to_json(const MetaModel& m) {
  return {
      {"format", "lcmia-meta-model"},
      {"version", 1},
      {"feature_order", feature_names()},
      {"ordering_checksum", feature_order_checksum()},
      {"weights", m.weights},
      {"bias", m.bias},
      {"feature_means", m.normalizer.means},
      {"feature_stddevs", m.normalizer.stddevs},
      {"training",
       {{"epochs_run", m.training.epochs_run},
        {"final_loss", m.training.final_loss},
        {"lr", m.training.hyper.lr},
        {"epochs", m.training.hyper.epochs},
        {"l2", m.training.hyper.l2},
        {"seed", m.training.hyper.seed},
        {"architecture", "linear+sigmoid"}}},
  };
}

inline MetaModel meta_model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lcmia-meta-model") throw ParseError("not a meta-model file", 0);
  if (j.at("ordering_checksum").get<std::string>() != feature_order_checksum())
    throw ValidationError("meta-model feature ordering checksum mismatch; retrain the model");
  MetaModel m;
  m.weights = j.at("weights").get<std::array<double, kFeatureCount>>();
  m.bias = j.at("bias").get<double>();
  m.normalizer.means = j.at("feature_means").get<std::array<double, kFeatureCount>>();
  m.normalizer.stddevs = j.at("feature_stddevs").get<std::array<double, kFeatureCount>>();
  const auto& t = j.at("training");
  m.training.epochs_run = t.at("epochs_run").get<int>();
  m.training.final_loss = t.at("final_loss").get<double>();
  m.training.hyper = {t.at("lr").get<double>(), t.at("epochs").get<int>(), t.at("l2").get<double>(),
                      t.at("seed").get<std::uint64_t>()};
  for (double s : m.normalizer.stddevs)
    if (!(s > 0)) throw ValidationError("meta-model has a non-positive stddev");
  return m;
}

inline void save_meta_model(const std::filesystem::path& path, const MetaModel& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline MetaModel load_meta_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open meta-model " + path.string());
  return meta_model_from_json(nlohmann::json::parse(in));
}

inline nlohmann::json to_json(const MembershipFeatureVector& f) {
  nlohmann::json j{{"sample_id", f.sample_id}, {"values", f.values}};
  if (f.label) j["label"] = to_string(*f.label);
  return j;
}

inline MembershipFeatureVector feature_vector_from_json(const nlohmann::json& j) {
  MembershipFeatureVector f;
  f.sample_id = j.at("sample_id").get<std::string>();
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != kFeatureCount)
    throw ValidationError("feature vector of '" + f.sample_id + "' has " +
                          std::to_string(values.size()) + " values");
  std::copy(values.begin(), values.end(), f.values.begin());
  if (j.contains("label")) f.label = membership_from_string(j["label"].get<std::string>());
  f.validate();
  return f;
}

}  // namespace lcmia
