#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "lcmia/corpus.hpp"
#include "lcmia/error.hpp"
#include "lcmia/scoring.hpp"

namespace lcmia {

struct LabeledScore {
  double value = 0;
  Membership label = Membership::NonMember;
};

struct LabeledVerdict {
  Membership predicted = Membership::NonMember;
  Membership actual = Membership::NonMember;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const noexcept { return tp + fp + fn + tn; }

  void add(Membership predicted, Membership actual) {
    bool p = predicted == Membership::Member, a = actual == Membership::Member;
    (p ? (a ? tp : fp) : (a ? fn : tn))++;
  }
};

enum class CalibrationObjective { Accuracy, F1 };

inline std::string_view to_string(CalibrationObjective o) {
  return o == CalibrationObjective::Accuracy ? "accuracy" : "f1";
}

inline Membership classify(double value, double threshold, Direction direction) {
  bool member = direction == Direction::LowerIsMember ? value <= threshold : value >= threshold;
  return member ? Membership::Member : Membership::NonMember;
}

inline Membership classify(const AttackScore& score, double threshold, Direction direction) {
  if (direction != direction_of(score.kind))
    throw ValidationError(std::string(to_string(score.kind)) + " scores are " +
                          std::string(to_string(direction_of(score.kind))) + ", not " +
                          std::string(to_string(direction)));
  return classify(score.value, threshold, direction);
}

namespace detail {

inline double f1_of(const ConfusionCounts& c) {
  double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * c.tp / denom;
}

inline double objective(const ConfusionCounts& c, CalibrationObjective o) {
  return o == CalibrationObjective::Accuracy
             ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total())
             : f1_of(c);
}

}  // namespace detail

struct Calibration {
  double threshold = 0;
  double objective_value = 0;  // fraction in [0,1] on the reference scores
  CalibrationObjective objective = CalibrationObjective::Accuracy;
};

// Scans midpoints between consecutive distinct scores plus the extreme score
// that labels everything Member; keeps the best objective, ties going to the
// smaller threshold.
inline Calibration calibrate_threshold(std::span<const LabeledScore> scores, Direction direction,
                                       CalibrationObjective objective = CalibrationObjective::Accuracy) {
  bool has_member = false, has_nonmember = false;
  for (const auto& s : scores) (s.label == Membership::Member ? has_member : has_nonmember) = true;
  if (!has_member || !has_nonmember)
    throw ValidationError("threshold calibration needs both members and non-members");

  std::vector<double> distinct;
  for (const auto& s : scores) distinct.push_back(s.value);
  std::ranges::sort(distinct);
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> candidates;
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i)
    candidates.push_back(distinct[i] + (distinct[i + 1] - distinct[i]) / 2);
  candidates.push_back(direction == Direction::LowerIsMember ? distinct.back() : distinct.front());
  std::ranges::sort(candidates);

  // members_below[i] = members among the i smallest scores.
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  std::ranges::sort(sorted, {}, &LabeledScore::value);
  std::vector<std::size_t> members_below(sorted.size() + 1, 0);
  for (std::size_t i = 0; i < sorted.size(); ++i)
    members_below[i + 1] = members_below[i] + (sorted[i].label == Membership::Member);
  const std::size_t n = sorted.size(), members = members_below[n];

  Calibration best{candidates.front(), -1.0, objective};
  for (double t : candidates) {
    // Predicted members form a contiguous block of the sorted scores.
    std::size_t lo = 0, hi = n;
    if (direction == Direction::LowerIsMember)
      hi = static_cast<std::size_t>(std::ranges::upper_bound(sorted, t, {}, &LabeledScore::value) - sorted.begin());
    else
      lo = static_cast<std::size_t>(std::ranges::lower_bound(sorted, t, {}, &LabeledScore::value) - sorted.begin());
    ConfusionCounts c;
    c.tp = members_below[hi] - members_below[lo];
    c.fp = (hi - lo) - c.tp;
    c.fn = members - c.tp;
    c.tn = n - c.tp - c.fp - c.fn;
    double v = detail::objective(c, objective);
    if (v > best.objective_value) best = {t, v, objective};
  }
  return best;
}

struct MetricsReport {
  ConfusionCounts counts;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;  // percentages
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
  std::string attack;
  std::string preset;
  std::optional<double> threshold;
  nlohmann::json metadata = nlohmann::json::object();
};

inline MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("cannot compute metrics on zero samples");
  MetricsReport r;
  r.counts = c;
  r.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp == 0) r.precision_undefined = true;
  else r.precision = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn == 0) r.recall_undefined = true;
  else r.recall = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall == 0) r.f1_undefined = true;
  else r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline MetricsReport compute_metrics(std::span<const LabeledVerdict> verdicts) {
  ConfusionCounts c;
  for (const auto& v : verdicts) c.add(v.predicted, v.actual);
  return metrics_from_counts(c);
}

inline nlohmann::json to_json(const MetricsReport& r) {
  auto pct = [](double v) { return std::round(v * 100.0) / 100.0; };
  nlohmann::json j{
      {"attack", r.attack},
      {"preset", r.preset},
      {"accuracy", pct(r.accuracy)},
      {"precision", pct(r.precision)},
      {"recall", pct(r.recall)},
      {"f1", pct(r.f1)},
      {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
      {"undefined", {{"precision", r.precision_undefined}, {"recall", r.recall_undefined}, {"f1", r.f1_undefined}}},
      {"metadata", r.metadata},
  };
  if (r.threshold) j["threshold"] = *r.threshold;
  return j;
}

// Mann-Whitney AUC, oriented so that 1.0 means members score "more member".
inline double roc_auc(std::span<const LabeledScore> scores, Direction direction) {
  std::vector<double> pos, neg;
  for (const auto& s : scores) {
    double v = direction == Direction::HigherIsMember ? s.value : -s.value;
    (s.label == Membership::Member ? pos : neg).push_back(v);
  }
  if (pos.empty() || neg.empty()) throw ValidationError("AUC needs both classes");
  std::ranges::sort(neg);
  double wins = 0;
  for (double p : pos) {
    auto lo = std::ranges::lower_bound(neg, p), hi = std::ranges::upper_bound(neg, p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

struct DensityTable {
  std::vector<double> edges;  // bins + 1
  std::vector<double> member;
  std::vector<double> nonmember;

  std::size_t bins() const noexcept { return member.size(); }

  double overlap() const {
    double o = 0;
    for (std::size_t i = 0; i < bins(); ++i) o += std::min(member[i], nonmember[i]);
    return o;
  }

  // Columns: bin, raw edges, min-max normalised edges, per-class frequency.
  std::string to_csv() const {
    std::string out = "bin,lo,hi,norm_lo,norm_hi,member,nonmember\n";
    double lo = edges.front(), span = edges.back() - edges.front();
    auto norm = [&](double e) { return span > 0 ? (e - lo) / span : 0.0; };
    for (std::size_t i = 0; i < bins(); ++i)
      out += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", i, edges[i], edges[i + 1],
                         norm(edges[i]), norm(edges[i + 1]), member[i], nonmember[i]);
    return out;
  }
};

inline DensityTable export_density(std::span<const LabeledScore> scores, std::size_t bins) {
  if (bins < 2) throw ValidationError("density export needs at least 2 bins");
  if (scores.empty()) throw ValidationError("density export needs at least one score");
  auto [mn, mx] = std::ranges::minmax(scores, {}, &LabeledScore::value);
  double lo = mn.value, hi = mx.value, width = (hi - lo) / static_cast<double>(bins);
  DensityTable t;
  for (std::size_t i = 0; i <= bins; ++i) t.edges.push_back(lo + width * static_cast<double>(i));
  t.edges.back() = hi;
  t.member.assign(bins, 0.0);
  t.nonmember.assign(bins, 0.0);
  std::size_t n_member = 0, n_nonmember = 0;
  for (const auto& s : scores) {
    std::size_t b = width > 0 ? static_cast<std::size_t>((s.value - lo) / width) : 0;
    b = std::min(b, bins - 1);
    if (s.label == Membership::Member) {
      t.member[b] += 1;
      ++n_member;
    } else {
      t.nonmember[b] += 1;
      ++n_nonmember;
    }
  }
  for (auto& v : t.member) v = n_member ? v / static_cast<double>(n_member) : 0.0;
  for (auto& v : t.nonmember) v = n_nonmember ? v / static_cast<double>(n_nonmember) : 0.0;
  return t;
}

}  // namespace lcmia
