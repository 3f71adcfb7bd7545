#include "ebsched/run_config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "ebsched/errors.hpp"

#ifndef EBSCHED_VERSION
#define EBSCHED_VERSION "0.1.0"
#endif

namespace ebsched {

namespace {

std::vector<int> to_ints(const std::vector<double>& v, const std::string& where) {
  std::vector<int> out;
  for (double x : v) {
    if (std::abs(x - std::round(x)) > 1e-12) throw ConfigError(where + ": expected whole numbers");
    out.push_back(static_cast<int>(std::lround(x)));
  }
  return out;
}

std::vector<std::pair<int, int>> parse_windows(const std::string& text, const std::string& where) {
  std::vector<std::pair<int, int>> out;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) throw ConfigError(where + ": expected HH:MM-HH:MM, got '" + item + "'");
    out.emplace_back(parse_clock(item.substr(0, dash)), parse_clock(item.substr(dash + 1)));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double x) {
  std::ostringstream o;
  o << std::setprecision(17) << x;
  return o.str();
}

}  // namespace

RunConfig parse_run_config(const KeyValueFile& kv, const std::filesystem::path& base_dir) {
  RunConfig rc;
  rc.source = kv.source();

  ScheduleConfig& sc = rc.schedule;
  sc.dt_minutes = kv.get_int("dt_minutes", sc.dt_minutes);
  sc.first_departure_min = parse_clock(kv.get_string("first_departure", format_clock(sc.first_departure_min)));
  if (kv.has("last_departure")) sc.last_departure_min = parse_clock(kv.get_string("last_departure", "24:00"));
  sc.headway_minutes = kv.get_int("headway_minutes", sc.headway_minutes);
  sc.bus_offset_minutes = kv.get_int("bus_offset_minutes", 0);
  if (kv.has("rush_windows")) sc.rush_windows = parse_windows(kv.get_string("rush_windows", ""), kv.where("rush_windows"));
  sc.travel_mean_rush = kv.get_double("travel_mean_rush", sc.travel_mean_rush);
  sc.travel_mean_offpeak = kv.get_double("travel_mean_offpeak", sc.travel_mean_offpeak);
  sc.travel_std = kv.get_double("travel_std", sc.travel_std);

  EnvConfig& ec = rc.env;
  ec.dt_hours = sc.dt_minutes / 60.0;
  ec.e_min_kwh = kv.get_double("e_min_kwh", ec.e_min_kwh);
  ec.e_max_kwh = kv.get_double("e_max_kwh", ec.e_max_kwh);
  ec.c_max_kw = kv.get_double("c_max_kw", ec.c_max_kw);
  ec.d_max_kw = kv.get_double("d_max_kw", ec.d_max_kw);
  ec.c_end = kv.get_double("c_end", ec.c_end);
  ec.w_p = kv.get_int("w_p", ec.w_p);
  ec.initial_soc_kwh = kv.get_double("initial_soc_kwh", ec.e_max_kwh);
  ec.action_levels_kw = make_action_grid(ec.d_max_kw, ec.c_max_kw, kv.get_int("action_levels", 5));
  ec.clip_actions = kv.get_bool("clip_actions", true);
  ec.option_grid_kwh = make_option_grid(ec.e_min_kwh, ec.e_max_kwh, kv.get_double("option_step_kwh", 10.0));
  ec.hazard_mode = parse_hazard_mode(kv.get_string("hazard_mode", "exact_hazard"));
  rc.trip_energy_fraction = kv.get_double("trip_energy_fraction", rc.trip_energy_fraction);
  if (!(rc.trip_energy_fraction > 0.0)) throw ConfigError(kv.where("trip_energy_fraction") + ": must be positive");
  const double calibrated =
      -rc.trip_energy_fraction * (ec.e_max_kwh - ec.e_min_kwh) / (sc.travel_mean_offpeak / 60.0);
  ec.discharge.kind = DischargeProfile::Kind::TruncatedNormal;
  ec.discharge.mean_kw = kv.get_double("discharge_mean_kw", calibrated);
  ec.discharge.std_kw = kv.get_double("discharge_std_kw", 0.1 * std::abs(ec.discharge.mean_kw));
  ec.discharge.rush_multiplier = kv.get_double("rush_discharge_multiplier", 1.0);
  ec.floor_clip_discharge = kv.get_bool("floor_clip_discharge", false);

  const std::string prices = kv.require_string("price_file");
  rc.price_file = std::filesystem::path(prices).is_absolute() ? std::filesystem::path(prices) : base_dir / prices;
  rc.split_day = kv.get_int("split_day", rc.split_day);
  rc.test_episodes = kv.get_int("test_episodes", rc.test_episodes);

  TrainConfig& tc = rc.train;
  tc.episodes = kv.get_int("episodes", tc.episodes);
  tc.phase_threshold = kv.get_int("phase_threshold", tc.phase_threshold);
  tc.eps_start = kv.get_double("eps_start", tc.eps_start);
  tc.eps_end = kv.get_double("eps_end", tc.eps_end);
  tc.eps_anneal_fraction = kv.get_double("eps_anneal_fraction", tc.eps_anneal_fraction);
  tc.batch_high = kv.get_int("batch_high", tc.batch_high);
  tc.batch_low = kv.get_int("batch_low", tc.batch_low);
  tc.lr_high = kv.get_double("lr_high", tc.lr_high);
  tc.lr_low = kv.get_double("lr_low", tc.lr_low);
  tc.lr_ddqn_low = kv.get_double("lr_ddqn_low", tc.lr_ddqn_low);
  if (kv.has("hidden")) tc.hidden = to_ints(kv.get_doubles("hidden", {}), kv.where("hidden"));
  tc.hidden_ddqn_low = tc.hidden;
  if (kv.has("hidden_ddqn_low")) {
    tc.hidden_ddqn_low = to_ints(kv.get_doubles("hidden_ddqn_low", {}), kv.where("hidden_ddqn_low"));
  }
  tc.kappa = kv.get_double("kappa", tc.kappa);
  tc.kappa_prime = kv.get_double("kappa_prime", tc.kappa_prime);
  tc.sync_every = kv.get_int("sync_every", tc.sync_every);
  tc.low_capacity = static_cast<std::size_t>(kv.get_int("low_capacity", static_cast<int>(tc.low_capacity)));
  tc.high_capacity = static_cast<std::size_t>(kv.get_int("high_capacity", static_cast<int>(tc.high_capacity)));
  tc.eval_every = kv.get_int("eval_every", tc.eval_every);
  tc.eval_episodes = kv.get_int("eval_episodes", tc.eval_episodes);
  tc.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));

  kv.reject_unused();
  ec.validate();
  tc.validate();
  if (rc.test_episodes < 1) throw ConfigError("test_episodes must be positive");

  return rc;
}

std::vector<std::pair<std::string, std::string>> config_snapshot(const RunConfig& rc) {
  const ScheduleConfig& sc = rc.schedule;
  const EnvConfig& ec = rc.env;
  const TrainConfig& tc = rc.train;
  std::vector<std::pair<std::string, std::string>> out = {
      {"dt_minutes", std::to_string(sc.dt_minutes)},
      {"first_departure", format_clock(sc.first_departure_min)},
      {"last_departure", sc.last_departure_min == 1440 ? "24:00" : format_clock(sc.last_departure_min)},
      {"headway_minutes", std::to_string(sc.headway_minutes)},
      {"bus_offset_minutes", std::to_string(sc.bus_offset_minutes)},
      {"travel_mean_rush", num(sc.travel_mean_rush)},
      {"travel_mean_offpeak", num(sc.travel_mean_offpeak)},
      {"travel_std", num(sc.travel_std)},
      {"e_min_kwh", num(ec.e_min_kwh)},
      {"e_max_kwh", num(ec.e_max_kwh)},
      {"c_max_kw", num(ec.c_max_kw)},
      {"d_max_kw", num(ec.d_max_kw)},
      {"c_end", num(ec.c_end)},
      {"w_p", std::to_string(ec.w_p)},
      {"initial_soc_kwh", num(ec.initial_soc_kwh)},
      {"action_levels", std::to_string(ec.num_actions())},
      {"clip_actions", ec.clip_actions ? "true" : "false"},
      {"option_step_kwh", num(ec.options().size() > 1 ? ec.options()[1] - ec.options()[0] : 10.0)},
      {"hazard_mode", to_string(ec.hazard_mode)},
      {"discharge_mean_kw", num(ec.discharge.mean_kw)},
      {"discharge_std_kw", num(ec.discharge.std_kw)},
      {"rush_discharge_multiplier", num(ec.discharge.rush_multiplier)},
      {"floor_clip_discharge", ec.floor_clip_discharge ? "true" : "false"},
      {"price_file", std::filesystem::absolute(rc.price_file).lexically_normal().string()},
      {"split_day", std::to_string(rc.split_day)},
      {"test_episodes", std::to_string(rc.test_episodes)},
      {"episodes", std::to_string(tc.episodes)},
      {"phase_threshold", std::to_string(tc.phase_threshold)},
      {"eps_start", num(tc.eps_start)},
      {"eps_end", num(tc.eps_end)},
      {"eps_anneal_fraction", num(tc.eps_anneal_fraction)},
      {"batch_high", std::to_string(tc.batch_high)},
      {"batch_low", std::to_string(tc.batch_low)},
      {"lr_high", num(tc.lr_high)},
      {"lr_low", num(tc.lr_low)},
      {"lr_ddqn_low", num(tc.lr_ddqn_low)},
      {"hidden", join(tc.hidden)},
      {"hidden_ddqn_low", join(tc.hidden_ddqn_low)},
      {"kappa", num(tc.kappa)},
      {"kappa_prime", num(tc.kappa_prime)},
      {"sync_every", std::to_string(tc.sync_every)},
      {"low_capacity", std::to_string(tc.low_capacity)},
      {"high_capacity", std::to_string(tc.high_capacity)},
      {"eval_every", std::to_string(tc.eval_every)},
      {"eval_episodes", std::to_string(tc.eval_episodes)},
      {"seed", std::to_string(tc.seed)},
  };
  std::string windows;
  for (const auto& [a, b] : sc.rush_windows) {
    windows += (windows.empty() ? "" : ",") + format_clock(a) + "-" + (b == 1440 ? "24:00" : format_clock(b));
  }
  out.emplace_back("rush_windows", windows);
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("config file not found: " + path.string());
  const KeyValueFile kv = KeyValueFile::parse_file(path);
  return parse_run_config(kv, path.parent_path());
}

Problem build_problem(const RunConfig& rc) {
  const PriceSeries all = load_prices(rc.price_file, rc.schedule.dt_minutes);
  auto [train, test] = split_train_test(all, rc.split_day);
  Problem p;
  p.env = std::make_shared<const EnvConfig>(rc.env);
  p.schedule = std::make_shared<const Schedule>(build_schedule(rc.schedule));
  p.train = std::make_shared<const PriceSeries>(std::move(train));
  p.test = std::make_shared<const PriceSeries>(std::move(test));
  return p;
}

RunConfig for_bus(const RunConfig& rc, int bus) {
  RunConfig out = rc;
  out.schedule.bus_offset_minutes = rc.schedule.bus_offset_minutes + 30 * bus;
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream o;
  o << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

std::string version_string() { return EBSCHED_VERSION; }

void write_manifest(const std::filesystem::path& path, const RunConfig& rc, const ManifestInfo& info) {
  nlohmann::ordered_json j;
  j["version"] = version_string();
  j["command"] = info.command;
  if (!info.mode.empty()) j["mode"] = info.mode;
  j["seeds"] = info.seeds;
  j["out_dir"] = std::filesystem::absolute(info.out_dir).lexically_normal().string();
  j["config_source"] = rc.source.string();
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_snapshot(rc)) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::ordered_json data = nlohmann::ordered_json::array();
  for (const auto& f : info.data_files) {
    data.push_back({{"path", std::filesystem::absolute(f).lexically_normal().string()}, {"digest", file_digest(f)}});
  }
  j["data"] = data;
  for (const auto& [k, v] : info.extra) j[k] = v;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';

  // a config file that reproduces the run
  std::ofstream cfg_out(path.parent_path() / "config.resolved.cfg");
  if (!cfg_out) throw DataError("cannot write resolved config next to " + path.string());
  for (const auto& [k, v] : config_snapshot(rc)) cfg_out << k << " = " << v << '\n';
}

}  // namespace ebsched
