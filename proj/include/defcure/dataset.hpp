// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "defcure/numeric.hpp"

namespace defcure {

/// Right-censored survival data with a design matrix whose first column is
/// the intercept. Immutable once constructed.
class SurvivalDataset {
 public:
  SurvivalDataset() = default;

  /// `covariates` is row-major, `time.size()` rows by `names.size()` columns.
  SurvivalDataset(std::vector<double> time, std::vector<int> event, std::vector<double> covariates,
                  std::vector<std::string> names)
      : time_(std::move(time)),
        event_(std::move(event)),
        covariates_(std::move(covariates)),
        names_(std::move(names)) {
    validate();
  }

  std::size_t size() const { return time_.size(); }
  std::size_t width() const { return names_.size(); }
  bool empty() const { return time_.empty(); }

  double time(std::size_t i) const { return time_[i]; }
  int event(std::size_t i) const { return event_[i]; }
  std::span<const double> row(std::size_t i) const {
    return {covariates_.data() + i * width(), width()};
  }
  const std::vector<double>& times() const { return time_; }
  const std::vector<int>& events() const { return event_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  std::size_t event_count() const {
    return static_cast<std::size_t>(std::count(event_.begin(), event_.end(), 1));
  }

  /// Copy without the given zero-based rows.
  SurvivalDataset without(std::span<const std::size_t> rows) const {
    std::vector<bool> drop(size(), false);
    for (std::size_t r : rows) {
      if (r >= size()) throw ValidationError("excluded row " + std::to_string(r + 1) + " out of range");
      drop[r] = true;
    }
    std::vector<double> t, x;
    std::vector<int> d;
    for (std::size_t i = 0; i < size(); ++i) {
      if (drop[i]) continue;
      t.push_back(time_[i]);
      d.push_back(event_[i]);
      const auto r = row(i);
      x.insert(x.end(), r.begin(), r.end());
    }
    return {std::move(t), std::move(d), std::move(x), names_};
  }

  /// Rows of `a` followed by rows of `b`; both must share the covariate layout.
  static SurvivalDataset concat(const SurvivalDataset& a, const SurvivalDataset& b) {
    if (a.names_ != b.names_) throw ValidationError("cannot concatenate datasets with different covariates");
    auto t = a.time_;
    t.insert(t.end(), b.time_.begin(), b.time_.end());
    auto d = a.event_;
    d.insert(d.end(), b.event_.begin(), b.event_.end());
    auto x = a.covariates_;
    x.insert(x.end(), b.covariates_.begin(), b.covariates_.end());
    return {std::move(t), std::move(d), std::move(x), a.names_};
  }

 private:
  void validate() const {
    if (names_.empty()) throw ValidationError("dataset needs at least the intercept column");
    if (event_.size() != time_.size() || covariates_.size() != time_.size() * width())
      throw ValidationError("dataset columns have inconsistent lengths");
    for (std::size_t i = 0; i < size(); ++i) {
      const std::string where = " (row " + std::to_string(i + 1) + ")";
      if (!(time_[i] > 0.0) || !std::isfinite(time_[i]))
        throw ValidationError("time must be positive and finite" + where);
      if (event_[i] != 0 && event_[i] != 1) throw ValidationError("event must be 0 or 1" + where);
      const auto r = row(i);
      if (r[0] != 1.0) throw ValidationError("first covariate column must be the intercept" + where);
      for (double v : r)
        if (!std::isfinite(v)) throw ValidationError("non-finite covariate" + where);
    }
  }

  std::vector<double> time_;
  std::vector<int> event_;
  std::vector<double> covariates_;
  std::vector<std::string> names_;
};

}  // namespace defcure
