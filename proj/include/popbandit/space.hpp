#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace popbandit {

using Rng = std::mt19937_64;

/// One label per categorical dimension.
using Assignment = std::vector<std::string>;

struct ContinuousParam {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;

  [[nodiscard]] bool valid() const {
    return std::isfinite(lower) && std::isfinite(upper) && lower < upper;
  }
  [[nodiscard]] bool contains(double v) const { return v >= lower && v <= upper; }
  [[nodiscard]] double to_unit(double v) const { return (v - lower) / (upper - lower); }
  [[nodiscard]] double from_unit(double u) const { return lower + u * (upper - lower); }
};

struct CategoricalParam {
  std::string name;
  std::vector<std::string> choices;

  [[nodiscard]] bool valid() const {
    if (choices.size() < 2) return false;
    auto sorted = choices;
    std::sort(sorted.begin(), sorted.end());
    return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
  }

  /// Position of `label` in choices, or -1.
  [[nodiscard]] int index_of(const std::string& label) const {
    auto it = std::find(choices.begin(), choices.end(), label);
    return it == choices.end() ? -1 : static_cast<int>(it - choices.begin());
  }
};

struct Config {
  std::vector<double> x;
  Assignment h;

  friend bool operator==(const Config&, const Config&) = default;
};

/// Mixed continuous/categorical box. Categorical dims form the bandit arm set
/// through their Cartesian product (first dim most significant).
class SearchSpace {
 public:
  std::vector<ContinuousParam> continuous;
  std::vector<CategoricalParam> categorical;
  /// Optional category-dependent continuous subspaces.
  std::map<Assignment, std::vector<ContinuousParam>> per_category_continuous;

  SearchSpace() = default;
  SearchSpace(std::vector<ContinuousParam> cont, std::vector<CategoricalParam> cat)
      : continuous(std::move(cont)), categorical(std::move(cat)) {
    validate();
  }

  void validate() const {
    if (continuous.empty() && categorical.empty() && per_category_continuous.empty())
      throw std::invalid_argument("search space has no parameters");
    for (const auto& p : continuous)
      if (!p.valid()) throw std::invalid_argument("continuous param '" + p.name + "' needs finite lower < upper");
    for (const auto& p : categorical)
      if (!p.valid())
        throw std::invalid_argument("categorical param '" + p.name + "' needs >= 2 distinct choices");
    for (const auto& [h, dims] : per_category_continuous) {
      if (!valid_assignment(h)) throw std::invalid_argument("per-category key is not a valid assignment");
      for (const auto& p : dims)
        if (!p.valid()) throw std::invalid_argument("continuous param '" + p.name + "' needs finite lower < upper");
    }
  }

  [[nodiscard]] bool valid_assignment(const Assignment& h) const {
    if (h.size() != categorical.size()) return false;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (categorical[i].index_of(h[i]) < 0) return false;
    return true;
  }

  /// Continuous dims active under assignment `h`.
  [[nodiscard]] const std::vector<ContinuousParam>& continuous_for(const Assignment& h) const {
    auto it = per_category_continuous.find(h);
    return it == per_category_continuous.end() ? continuous : it->second;
  }

  /// True when every assignment shares one continuous list.
  [[nodiscard]] bool shared_continuous() const { return per_category_continuous.empty(); }

  [[nodiscard]] std::size_t max_continuous_dims() const {
    std::size_t d = continuous.size();
    for (const auto& [h, dims] : per_category_continuous) d = std::max(d, dims.size());
    return d;
  }

  [[nodiscard]] int n_arms() const {
    int n = 1;
    for (const auto& p : categorical) n *= static_cast<int>(p.choices.size());
    return n;
  }

  [[nodiscard]] Assignment arm_assignment(int arm) const {
    Assignment h(categorical.size());
    for (std::size_t i = categorical.size(); i-- > 0;) {
      const int c = static_cast<int>(categorical[i].choices.size());
      h[i] = categorical[i].choices[static_cast<std::size_t>(arm % c)];
      arm /= c;
    }
    return h;
  }

  [[nodiscard]] int arm_index(const Assignment& h) const {
    if (!valid_assignment(h)) throw std::invalid_argument("assignment not in search space");
    int arm = 0;
    for (std::size_t i = 0; i < categorical.size(); ++i)
      arm = arm * static_cast<int>(categorical[i].choices.size()) + categorical[i].index_of(h[i]);
    return arm;
  }

  /// Integer codes for `h`, one per categorical dim.
  [[nodiscard]] std::vector<int> encode(const Assignment& h) const {
    std::vector<int> codes(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) codes[i] = categorical.at(i).index_of(h[i]);
    return codes;
  }

  [[nodiscard]] Assignment sample_assignment(Rng& rng) const {
    Assignment h;
    h.reserve(categorical.size());
    for (const auto& p : categorical) {
      std::uniform_int_distribution<std::size_t> pick(0, p.choices.size() - 1);
      h.push_back(p.choices[pick(rng)]);
    }
    return h;
  }

  [[nodiscard]] std::vector<double> sample_continuous(const Assignment& h, Rng& rng) const {
    std::vector<double> x;
    for (const auto& p : continuous_for(h)) {
      std::uniform_real_distribution<double> u(p.lower, p.upper);
      x.push_back(u(rng));
    }
    return x;
  }

  static SearchSpace from_json(const nlohmann::json& j);
};

inline std::vector<ContinuousParam> continuous_from_json(const nlohmann::json& arr) {
  std::vector<ContinuousParam> out;
  for (const auto& c : arr)
    out.push_back({c.at("name").get<std::string>(), c.at("lower").get<double>(), c.at("upper").get<double>()});
  return out;
}

/// {"continuous":[{"name","lower","upper"}...],"categorical":[{"name","choices":[...]}...]}
/// plus an optional "per_category":[{"h":[...],"continuous":[...]}...].
inline SearchSpace SearchSpace::from_json(const nlohmann::json& j) {
  SearchSpace s;
  if (j.contains("continuous")) s.continuous = continuous_from_json(j.at("continuous"));
  if (j.contains("categorical"))
    for (const auto& c : j.at("categorical"))
      s.categorical.push_back({c.at("name").get<std::string>(), c.at("choices").get<std::vector<std::string>>()});
  if (j.contains("per_category"))
    for (const auto& e : j.at("per_category"))
      s.per_category_continuous[e.at("h").get<Assignment>()] = continuous_from_json(e.at("continuous"));
  s.validate();
  return s;
}

inline bool validate_config(const SearchSpace& space, const Config& config) {
  if (!space.valid_assignment(config.h)) return false;
  const auto& dims = space.continuous_for(config.h);
  if (dims.size() != config.x.size()) return false;
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (!std::isfinite(config.x[i]) || !dims[i].contains(config.x[i])) return false;
  return true;
}

struct Observation {
  int round = 0;
  int agent = 0;
  Config config;
  double raw_score = 0.0;
  double reward = 0.0;
};

/// Append-only, round-ordered observation log with running reward extrema.
class Dataset {
 public:
  void append(Observation obs) {
    if (!obs_.empty() && obs.round < obs_.back().round)
      throw std::invalid_argument("observation rounds must be non-decreasing");
    if (obs_.empty()) {
      reward_min_ = reward_max_ = obs.reward;
    } else {
      reward_min_ = std::min(reward_min_, obs.reward);
      reward_max_ = std::max(reward_max_, obs.reward);
    }
    obs_.push_back(std::move(obs));
  }

  [[nodiscard]] const std::vector<Observation>& observations() const { return obs_; }
  [[nodiscard]] std::size_t size() const { return obs_.size(); }
  [[nodiscard]] bool empty() const { return obs_.empty(); }
  [[nodiscard]] double reward_min() const { return reward_min_; }
  [[nodiscard]] double reward_max() const { return reward_max_; }
  [[nodiscard]] const Observation& operator[](std::size_t i) const { return obs_[i]; }

 private:
  std::vector<Observation> obs_;
  double reward_min_ = 0.0;
  double reward_max_ = 0.0;
};

inline Dataset filter_by_category(const Dataset& data, const Assignment& h) {
  Dataset out;
  for (const auto& o : data.observations())
    if (o.config.h == h) out.append(o);
  return out;
}

/// Min-max rescale of rewards into [0,1]; a degenerate range maps to 0.5.
inline std::vector<double> normalize_rewards(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("normalize_rewards: empty dataset");
  const double lo = data.reward_min();
  const double range = data.reward_max() - lo;
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& o : data.observations())
    out.push_back(range > 0.0 ? std::clamp((o.reward - lo) / range, 0.0, 1.0) : 0.5);
  return out;
}

}  // namespace popbandit
