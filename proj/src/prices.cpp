#include "ebsched/prices.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "ebsched/errors.hpp"

namespace ebsched {

namespace {

// Hours since 1970-01-01T00:00, parsed from "YYYY-MM-DD[T| ]HH[:MM[:SS]][Z]".
std::int64_t parse_hour_stamp(const std::string& text, const std::string& where) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d%n", &y, &mo, &d, &sep, &h, &consumed) < 5 ||
      (sep != 'T' && sep != ' ')) {
    throw DataError(where + ": bad timestamp '" + text + "'");
  }
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == ':') {
    if (std::sscanf(rest.c_str(), ":%2d", &mi) != 1) throw DataError(where + ": bad minutes in '" + text + "'");
    rest = rest.substr(3);
    if (!rest.empty() && rest[0] == ':') {
      if (std::sscanf(rest.c_str(), ":%2d", &s) != 1) throw DataError(where + ": bad seconds in '" + text + "'");
      rest = rest.substr(3);
    }
  }
  if (!rest.empty() && rest != "Z") throw DataError(where + ": trailing text in timestamp '" + text + "'");
  if (mi != 0 || s != 0) throw DataError(where + ": timestamp '" + text + "' is not on an hour boundary");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23) throw DataError(where + ": invalid date/time '" + text + "'");
  return static_cast<std::int64_t>(sys_days{ymd}.time_since_epoch().count()) * 24 + h;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

struct HourRow {
  std::int64_t hour;
  double price;
  std::string stamp;
  std::string where;
};

void read_rows(const std::filesystem::path& file, std::vector<HourRow>& rows) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open price file " + file.string());
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = file.string() + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (line != "timestamp,price_usd_per_kwh") {
        throw DataError(where + ": expected header 'timestamp,price_usd_per_kwh'");
      }
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw DataError(where + ": expected two comma-separated fields");
    }
    const std::string stamp = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));
    double price = 0.0;
    try {
      std::size_t used = 0;
      price = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(where + ": bad price '" + value + "'");
    }
    if (!std::isfinite(price)) throw DataError(where + ": non-finite price");
    rows.push_back({parse_hour_stamp(stamp, where), price, stamp, where});
  }
  if (!header_seen) throw DataError(file.string() + ": empty price file");
}

}  // namespace

PriceSeries::PriceSeries(std::vector<double> per_step, int steps_per_hour, std::string origin,
                         int steps_per_day)
    : prices_(std::move(per_step)),
      steps_per_hour_(steps_per_hour),
      steps_per_day_(steps_per_day > 0 ? steps_per_day : 24 * steps_per_hour),
      origin_(std::move(origin)) {
  if (steps_per_hour_ <= 0) throw ContractViolation("steps_per_hour must be positive");
  for (std::size_t i = 0; i < prices_.size(); ++i) {
    if (!std::isfinite(prices_[i])) throw DataError("non-finite price at step " + std::to_string(i));
  }
}

PriceSeries PriceSeries::from_hourly(std::span<const double> hourly, int dt_minutes,
                                     std::string origin) {
  if (dt_minutes <= 0 || 60 % dt_minutes != 0) {
    throw ConfigError("dt_minutes must divide 60, got " + std::to_string(dt_minutes));
  }
  const int per_hour = 60 / dt_minutes;
  std::vector<double> steps;
  steps.reserve(hourly.size() * static_cast<std::size_t>(per_hour));
  for (double p : hourly) steps.insert(steps.end(), static_cast<std::size_t>(per_hour), p);
  return PriceSeries(std::move(steps), per_hour, std::move(origin));
}

int PriceSeries::num_days() const {
  return static_cast<int>(prices_.size() / static_cast<std::size_t>(steps_per_day_));
}

double PriceSeries::at(std::int64_t t) const {
  if (prices_.empty()) throw ContractViolation("price series is empty");
  if (t < 0) throw std::out_of_range("price index " + std::to_string(t) + " before origin");
  const auto last = static_cast<std::int64_t>(prices_.size()) - 1;
  return prices_[static_cast<std::size_t>(std::min(t, last))];
}

std::vector<double> PriceSeries::window(std::int64_t t, int w_p, bool pad_warmup) const {
  if (w_p < 0) throw ContractViolation("w_p must be non-negative");
  if (!pad_warmup && t < w_p) {
    throw std::out_of_range("window at step " + std::to_string(t) + " needs " +
                            std::to_string(w_p) + " warm-up steps");
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(w_p) + 1);
  for (std::int64_t i = t - w_p; i <= t; ++i) out.push_back(at(std::max<std::int64_t>(i, 0)));
  return out;
}

std::vector<double> PriceSeries::downsample_hourly() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < prices_.size(); i += static_cast<std::size_t>(steps_per_hour_)) {
    out.push_back(prices_[i]);
  }
  return out;
}

double PriceSeries::min_price() const {
  return prices_.empty() ? 0.0 : *std::min_element(prices_.begin(), prices_.end());
}

double PriceSeries::max_price() const {
  return prices_.empty() ? 0.0 : *std::max_element(prices_.begin(), prices_.end());
}

PriceSeries load_prices(const std::filesystem::path& path, int dt_minutes) {
  std::vector<HourRow> rows;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .csv price files in " + path.string());
    for (const auto& f : files) read_rows(f, rows);
  } else {
    if (!std::filesystem::exists(path)) throw DataError("price file not found: " + path.string());
    read_rows(path, rows);
  }
  if (rows.empty()) throw DataError(path.string() + ": no price rows");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto delta = rows[i].hour - rows[i - 1].hour;
    if (delta == 0) throw DataError(rows[i].where + ": duplicate timestamp " + rows[i].stamp);
    if (delta < 0) throw DataError(rows[i].where + ": timestamp " + rows[i].stamp + " is out of order");
    if (delta > 1) throw DataError(rows[i].where + ": missing hour(s) before " + rows[i].stamp);
  }
  std::vector<double> hourly;
  hourly.reserve(rows.size());
  for (const auto& r : rows) hourly.push_back(r.price);
  return PriceSeries::from_hourly(hourly, dt_minutes, rows.front().stamp);
}

void write_hourly_prices(const std::filesystem::path& path, const std::string& start_date,
                         std::span<const double> hourly) {
  using namespace std::chrono;
  int y = 0, m = 0, d = 0;
  if (std::sscanf(start_date.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3) {
    throw ConfigError("start date must be YYYY-MM-DD, got '" + start_date + "'");
  }
  const sys_days start{year_month_day{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp,price_usd_per_kwh\n";
  for (std::size_t i = 0; i < hourly.size(); ++i) {
    const year_month_day ymd{start + days{static_cast<int>(i / 24)}};
    out << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
        << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day())
        << 'T' << std::setw(2) << (i % 24) << ":00:00," << std::setprecision(6) << std::fixed
        << hourly[i] << '\n';
  }
}

std::pair<PriceSeries, PriceSeries> split_train_test(const PriceSeries& series, int boundary_day) {
  const int days = series.num_days();
  if (boundary_day <= 0 || boundary_day >= days) {
    throw std::out_of_range("split boundary day " + std::to_string(boundary_day) +
                            " outside (0, " + std::to_string(days) + ")");
  }
  const auto cut = static_cast<std::size_t>(boundary_day) * static_cast<std::size_t>(series.steps_per_day());
  const auto all = series.per_step_prices();
  std::vector<double> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<double> test(all.begin() + static_cast<std::ptrdiff_t>(cut), all.end());
  return {PriceSeries(std::move(train), series.steps_per_hour(), series.origin(), series.steps_per_day()),
          PriceSeries(std::move(test), series.steps_per_hour(), series.origin() + "+" + std::to_string(boundary_day) + "d",
                      series.steps_per_day())};
}

std::vector<double> synthetic_hourly_prices(int num_days, std::uint64_t seed, double peak_price) {
  // Relative daily shape; hour 17 is the maximum and scales to peak_price.
  static constexpr std::array<double, 24> kShape = {
      0.46, 0.44, 0.43, 0.43, 0.45, 0.52, 0.62, 0.74, 0.78, 0.70, 0.64, 0.60,
      0.58, 0.55, 0.46, 0.42, 0.60, 1.00, 0.86, 0.64, 0.58, 0.54, 0.50, 0.48};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> day_noise(0.0, 0.06);
  std::normal_distribution<double> hour_noise(0.0, 0.03);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(num_days) * 24);
  for (int d = 0; d < num_days; ++d) {
    const double level = std::clamp(1.0 + day_noise(rng), 0.85, 1.0);
    for (int h = 0; h < 24; ++h) {
      double rel = kShape[static_cast<std::size_t>(h)] * level;
      if (h != 17) rel = std::min(rel * (1.0 + hour_noise(rng)), 0.92 * level);
      out.push_back(std::round(peak_price * rel * 1e5) / 1e5);
    }
  }
  return out;
}

}  // namespace ebsched
