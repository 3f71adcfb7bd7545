#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ebsched {

// Per-step electricity prices ($/kWh) indexed by global time step from `origin`.
class PriceSeries {
 public:
  PriceSeries() = default;
  PriceSeries(std::vector<double> per_step, int steps_per_hour, std::string origin,
              int steps_per_day = 0);

  // Zero-order-hold expansion of hourly prices.
  static PriceSeries from_hourly(std::span<const double> hourly, int dt_minutes,
                                 std::string origin = {});

  std::size_t size() const { return prices_.size(); }
  bool empty() const { return prices_.empty(); }
  int steps_per_hour() const { return steps_per_hour_; }
  int steps_per_day() const { return steps_per_day_; }
  int num_days() const;
  const std::string& origin() const { return origin_; }
  std::span<const double> per_step_prices() const { return prices_; }

  // Price at step t; steps past the end hold the final price.
  double at(std::int64_t t) const;

  // (P_{t-w_p}, ..., P_t), oldest first. With pad_warmup, indices before the
  // origin repeat the first price; otherwise they raise std::out_of_range.
  std::vector<double> window(std::int64_t t, int w_p, bool pad_warmup = true) const;

  // Hourly values recovered by sampling each hour's first step.
  std::vector<double> downsample_hourly() const;

  double min_price() const;
  double max_price() const;

 private:
  std::vector<double> prices_;
  int steps_per_hour_ = 1;
  int steps_per_day_ = 24;
  std::string origin_;
};

// Parses a `timestamp,price_usd_per_kwh` file (or a directory of them, merged in
// file-name order). Rejects gaps, duplicates and out-of-order rows.
PriceSeries load_prices(const std::filesystem::path& path, int dt_minutes);

// Writes hourly rows in the same format `load_prices` reads.
void write_hourly_prices(const std::filesystem::path& path, const std::string& start_date,
                         std::span<const double> hourly);

// Splits at a day boundary into (train, test). Both halves must be non-empty.
std::pair<PriceSeries, PriceSeries> split_train_test(const PriceSeries& series, int boundary_day);

// Seeded synthetic hourly trace: a daily shape with an evening peak between
// 17:00 and 18:00 plus day-level and hour-level noise.
std::vector<double> synthetic_hourly_prices(int num_days, std::uint64_t seed,
                                            double peak_price = 0.03921);

}  // namespace ebsched
