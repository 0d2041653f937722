#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tailrisk/error.hpp"

namespace tailrisk {

/// Tail probability level theta, strictly inside (0, 1).
class ProbabilityLevel {
 public:
  explicit ProbabilityLevel(double theta) : theta_(theta) {
    if (!(theta > 0.0 && theta < 1.0)) {
      throw InputError("probability level must lie in (0,1), got " + std::to_string(theta));
    }
  }

  double value() const noexcept { return theta_; }

 private:
  double theta_;
};

/// Univariate return observations with optional ISO dates.
class ReturnSeries {
 public:
  explicit ReturnSeries(std::vector<double> values, std::vector<std::string> dates = {})
      : values_(std::move(values)), dates_(std::move(dates)) {
    if (values_.empty()) throw InputError("return series is empty");
    for (double v : values_) {
      if (!std::isfinite(v)) throw InputError("return series contains a non-finite value");
    }
    if (!dates_.empty()) {
      if (dates_.size() != values_.size()) throw InputError("dates and values differ in length");
      for (std::size_t i = 1; i < dates_.size(); ++i) {
        if (!(dates_[i - 1] < dates_[i])) {
          throw InputError("timestamps must be strictly increasing (at row " + std::to_string(i) + ")");
        }
      }
    }
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<std::string>& dates() const noexcept { return dates_; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > values_.size()) throw InputError("slice out of bounds");
    return std::span<const double>(values_).subspan(begin, end - begin);
  }

 private:
  std::vector<double> values_;
  std::vector<std::string> dates_;
};

/// Paired VaR and ES predictions aligned with the observations they describe.
struct ForecastPath {
  std::vector<double> q;
  std::vector<double> e;
  double theta = 0.05;

  std::size_t size() const noexcept { return q.size(); }

  /// Times where the ES forecast sits above the VaR forecast (e_t > q_t).
  std::size_t crossings() const noexcept {
    std::size_t n = 0;
    for (std::size_t t = 0; t < q.size() && t < e.size(); ++t) n += e[t] > q[t] ? 1 : 0;
    return n;
  }
};

/// Half-open index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct Fold {
  IndexRange train;
  IndexRange test;
};

struct FoldPlan {
  std::vector<Fold> folds;
  std::size_t window = 0;
  std::size_t train_len = 0;
  std::size_t stride = 0;
};

enum class LossVariant { Both, BarreraOnly, PattonOnly };

inline const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::Both: return "BOTH";
    case LossVariant::BarreraOnly: return "BARRERA_ONLY";
    case LossVariant::PattonOnly: return "PATTON_ONLY";
  }
  return "BOTH";
}

inline LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "BOTH") return LossVariant::Both;
  if (s == "BARRERA_ONLY") return LossVariant::BarreraOnly;
  if (s == "PATTON_ONLY") return LossVariant::PattonOnly;
  throw InputError("unknown loss variant: " + s);
}

/// Knobs shared by every fit. Unset penalty weights resolve to 10 / T at fit time.
struct EstimationConfig {
  int n_starts = 100;
  int n_keep = 3;
  int n_chained = 6;
  std::optional<double> lambda_r;
  std::optional<double> lambda_q;
  std::optional<double> lambda_e;
  double prefix_fraction = 0.10;
  std::uint64_t seed = 42;
  int max_iter = 400;
  double tol = 1e-8;
  LossVariant loss_variant = LossVariant::Both;
  bool no_cross = false;
  /// Fraction of multistart candidates drawn uniform in [-1,1]; the rest are standard normal.
  double uniform_share = 0.5;
  double bound = 50.0;
  /// CAESar steps 2-3 treat non-stationary lag dynamics as infeasible.
  bool require_stationary = true;
  bool parallel = true;

  void validate() const {
    if (n_starts < 1) throw InputError("n_starts must be >= 1");
    if (n_keep < 1 || n_keep > n_starts) throw InputError("n_keep must lie in [1, n_starts]");
    if (n_chained < 1) throw InputError("n_chained must be >= 1");
    for (const auto& l : {lambda_r, lambda_q, lambda_e}) {
      if (l && !(*l >= 0.0)) throw InputError("penalty weights must be nonnegative");
    }
    if (!(prefix_fraction > 0.0 && prefix_fraction <= 1.0)) throw InputError("prefix_fraction must lie in (0,1]");
    if (max_iter < 1) throw InputError("max_iter must be >= 1");
    if (!(tol > 0.0)) throw InputError("tol must be positive");
    if (!(uniform_share >= 0.0 && uniform_share <= 1.0)) throw InputError("uniform_share must lie in [0,1]");
    if (!(bound > 0.0)) throw InputError("bound must be positive");
  }

  double resolved_lambda(const std::optional<double>& l, std::size_t train_len) const {
    return l ? *l : 10.0 / static_cast<double>(train_len);
  }
};

enum class ReturnMode { Log, Pct };

inline ReturnSeries returns_from_prices(std::span<const double> prices, ReturnMode mode,
                                        std::vector<std::string> dates = {}) {
  if (prices.size() < 2) throw InputError("need at least 2 prices");
  for (double p : prices) {
    if (!(p > 0.0) || !std::isfinite(p)) throw DomainError("prices must be positive and finite");
  }
  std::vector<double> r(prices.size() - 1);
  for (std::size_t t = 1; t < prices.size(); ++t) {
    r[t - 1] = mode == ReturnMode::Log ? std::log(prices[t] / prices[t - 1]) : prices[t] / prices[t - 1] - 1.0;
  }
  if (!dates.empty()) {
    if (dates.size() != prices.size()) throw InputError("dates and prices differ in length");
    dates.erase(dates.begin());
  }
  return ReturnSeries(std::move(r), std::move(dates));
}

/// Rolling contiguous train+test windows shifted by a fixed stride.
inline FoldPlan make_block_folds(std::size_t length, std::size_t window, std::size_t train_len, std::size_t stride) {
  if (stride < 1) throw InputError("stride must be >= 1");
  if (train_len < 1 || train_len >= window) throw InputError("need 0 < train_len < window");
  if (window > length) throw InputError("window longer than the series");
  FoldPlan plan{{}, window, train_len, stride};
  const std::size_t n = (length - window) / stride + 1;
  plan.folds.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = k * stride;
    plan.folds.push_back({{start, start + train_len}, {start + train_len, start + window}});
  }
  return plan;
}

struct EmpiricalTail {
  double q0 = 0.0;
  double e0 = 0.0;
  bool fallback = false;
};

/// Lower-order-statistic quantile (index ceil(theta n), clamped to [1, n]) and the
/// mean of the prefix values at or below it.
inline EmpiricalTail empirical_var_es(std::span<const double> prefix, double theta) {
  if (prefix.empty()) throw InputError("empirical_var_es: empty prefix");
  ProbabilityLevel level(theta);
  std::vector<double> sorted(prefix.begin(), prefix.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(level.value() * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  EmpiricalTail out;
  out.q0 = sorted[k - 1];
  double sum = 0.0;
  std::size_t cnt = 0;
  for (double v : sorted) {
    if (v <= out.q0) {
      sum += v;
      ++cnt;
    }
  }
  if (cnt == 0) {
    out.e0 = sorted.front();
    out.fallback = true;
  } else {
    out.e0 = sum / static_cast<double>(cnt);
  }
  return out;
}

/// Length of the estimation prefix used to seed the filters.
inline std::size_t prefix_length(std::size_t train_len, double fraction) {
  auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(train_len) - 1e-9));
  return std::clamp<std::size_t>(n, 1, train_len);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_double(const std::string& field, std::size_t line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw InputError("line " + std::to_string(line) + ": cannot parse number '" + field + "'");
  }
  return v;
}

}  // namespace detail

enum class CsvColumn { Price, Return };

struct CsvSeries {
  std::vector<std::string> dates;
  std::vector<double> values;
  CsvColumn column = CsvColumn::Return;
};

/// Reads `date,price` or `date,return` (or `t,y,...`) with a header row. Columns past
/// the second are ignored; a `t` or `index` first column is not kept as dates.
inline CsvSeries read_csv_columns(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("csv: empty input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  const auto comma = line.find(',');
  if (comma == std::string::npos) throw InputError("csv: header must have two columns");
  std::string first = detail::trim(line.substr(0, comma));
  std::string col = detail::trim(line.substr(comma + 1, line.find(',', comma + 1) - comma - 1));
  std::transform(first.begin(), first.end(), first.begin(), [](unsigned char c) { return std::tolower(c); });
  const bool keep_dates = first != "t" && first != "index";
  std::transform(col.begin(), col.end(), col.begin(), [](unsigned char c) { return std::tolower(c); });
  CsvSeries out;
  if (col == "price" || col == "close" || col == "adj_close") {
    out.column = CsvColumn::Price;
  } else if (col == "return" || col == "returns" || col == "y") {
    out.column = CsvColumn::Return;
  } else {
    throw InputError("csv: second header column must be 'price' or 'return', got '" + col + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto c = line.find(',');
    if (c == std::string::npos) throw InputError("csv: line " + std::to_string(lineno) + " has one column");
    if (keep_dates) out.dates.push_back(detail::trim(line.substr(0, c)));
    const auto end = line.find(',', c + 1);
    out.values.push_back(detail::parse_double(detail::trim(line.substr(c + 1, end - c - 1)), lineno));
  }
  return out;
}

inline ReturnSeries read_series_csv(const std::string& path, ReturnMode mode = ReturnMode::Log) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  CsvSeries cols = read_csv_columns(in);
  if (cols.column == CsvColumn::Price) return returns_from_prices(cols.values, mode, std::move(cols.dates));
  return ReturnSeries(std::move(cols.values), std::move(cols.dates));
}

/// Runs fn(i) for i in [0, n), optionally on a worker pool. Results must be written
/// to per-index slots so serial and parallel runs agree exactly.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, bool parallel = true) {
  unsigned workers = parallel ? std::max(1u, std::thread::hardware_concurrency()) : 1u;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace tailrisk
