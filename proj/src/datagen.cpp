#include "iaqcast/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "iaqcast/rng.hpp"

namespace iaq {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Sized so a one-person 30-minute pulse at 1 ACH raises CO2 by ~200 ppm:
// a = 200 * lambda / (1 - e^{-lambda * 30 min}) with lambda = 1/60 per minute.
constexpr double kCo2PerPersonPpmMin = 8.47;

}  // namespace

double co2_per_person_ppm_min() { return kCo2PerPersonPpmMin; }

void Scenario::validate() const {
  if (!(room_volume > 0)) throw Error::config("scenario: room_volume must be > 0");
  if (!(ventilation_rate > 0))
    throw Error::config("scenario: ventilation_rate must be > 0");
  if (sample_period <= 0) throw Error::config("scenario: sample_period must be > 0");
  if (horizon <= 0) throw Error::config("scenario: horizon must be > 0");
  const double end_min = static_cast<double>(horizon) * sample_period;
  for (const auto& o : occupancy_schedule) {
    if (o.persons < 0) throw Error::config("scenario: person-count must be >= 0");
    if (o.start_min < 0 || o.start_min >= end_min)
      throw Error::config("scenario: occupancy interval outside [0, horizon)");
  }
  for (const auto& e : activity_events) {
    if (!(e.duration_min > 0))
      throw Error::config("scenario: event '" + e.label + "' needs duration > 0");
    if (e.pm25_emission < 0 || e.co2_emission < 0)
      throw Error::config("scenario: event '" + e.label + "' has negative emission");
    if (!(e.ventilation_multiplier > 0))
      throw Error::config("scenario: event '" + e.label +
                          "' needs ventilation_multiplier > 0");
    if (e.start_min < 0 || e.start_min >= end_min)
      throw Error::config("scenario: event '" + e.label + "' outside [0, horizon)");
  }
}

Trace simulate(const Scenario& s, SimBook* book) {
  s.validate();
  const int n = s.horizon;
  const double dt = static_cast<double>(s.sample_period);

  Trace tr;
  tr.timestamps.resize(n);
  tr.temp.resize(n);
  tr.rh.resize(n);
  tr.co2.resize(n);
  tr.pm25.resize(n);
  tr.activity.resize(n);
  if (book) {
    book->co2_source.resize(n);
    book->pm25_source.resize(n);
    book->removal_per_min.resize(n);
    book->co2_start.resize(n);
    book->pm25_start.resize(n);
  }

  double co2 = s.initial_co2.value_or(s.outdoor_co2);
  double pm = s.initial_pm25.value_or(s.outdoor_pm25);

  for (int t = 0; t < n; ++t) {
    const double tau = t * dt;  // minute at step start
    tr.timestamps[t] = static_cast<std::int64_t>(tau);

    double persons = 0;
    for (const auto& o : s.occupancy_schedule)
      if (tau >= o.start_min && tau < o.end_min) persons += o.persons;

    double a_co2 = persons * kCo2PerPersonPpmMin;
    double a_pm = 0;
    double vent_mult = 1.0;
    const ActivityEvent* labelled = nullptr;
    for (const auto& e : s.activity_events) {
      if (tau >= e.start_min && tau < e.start_min + e.duration_min) {
        a_co2 += e.co2_emission;
        a_pm += e.pm25_emission / s.room_volume;
        vent_mult *= e.ventilation_multiplier;
        if (!labelled || e.start_min >= labelled->start_min) labelled = &e;
      }
    }
    const double lambda = s.ventilation_rate * vent_mult / 60.0;  // per minute

    if (book) {
      book->co2_source[t] = a_co2;
      book->pm25_source[t] = a_pm;
      book->removal_per_min[t] = lambda;
      book->co2_start[t] = co2;
      book->pm25_start[t] = pm;
    }

    tr.activity[t] = labelled ? labelled->label : std::string();
    tr.temp[t] = 21.0 + 2.5 * std::sin(2.0 * kPi * (tau - 540.0) / 1440.0);
    tr.rh[t] = 45.0 + 7.0 * std::sin(2.0 * kPi * (tau - 300.0) / 1440.0);
    tr.co2[t] = co2;
    tr.pm25[t] = pm;

    // Exact one-step update with constant source and ventilation over the step.
    const double decay = std::exp(-lambda * dt);
    const double co2_eq = s.outdoor_co2 + a_co2 / lambda;
    const double pm_eq = s.outdoor_pm25 + a_pm / lambda;
    co2 = co2_eq + (co2 - co2_eq) * decay;
    pm = pm_eq + (pm - pm_eq) * decay;
  }

  // Sensor noise last, then physical clamps.
  Rng rng(splitmix64(s.seed ^ 0x51D0C0FFEEull));
  const double co2_floor = s.outdoor_co2 - 3.0 * s.noise_sd.co2;
  for (int t = 0; t < n; ++t) {
    tr.temp[t] += s.noise_sd.temp > 0 ? rng.normal(0, s.noise_sd.temp) : 0.0;
    tr.rh[t] += s.noise_sd.rh > 0 ? rng.normal(0, s.noise_sd.rh) : 0.0;
    tr.co2[t] += s.noise_sd.co2 > 0 ? rng.normal(0, s.noise_sd.co2) : 0.0;
    tr.pm25[t] += s.noise_sd.pm25 > 0 ? rng.normal(0, s.noise_sd.pm25) : 0.0;
    tr.co2[t] = std::max(tr.co2[t], co2_floor);
    tr.pm25[t] = std::max(tr.pm25[t], 0.0);
  }
  return tr;
}

namespace {

struct DayPlan {
  Rng rng;
  double day_start;
  std::vector<ActivityEvent>* events;
  std::vector<OccupancyInterval>* occupancy;

  double jitter(double center, double spread) {
    return center + rng.uniform(-spread, spread);
  }

  void event(const std::string& label, double start, double dur, double pm,
             double co2, double vent = 1.0) {
    ActivityEvent e;
    e.label = label;
    e.start_min = day_start + start;
    e.duration_min = dur;
    e.pm25_emission = pm;
    e.co2_emission = co2;
    e.ventilation_multiplier = vent;
    events->push_back(e);
  }
};

}  // namespace

Scenario default_scenario(std::uint64_t seed, int days) {
  if (days <= 0) throw Error::config("default scenario: days must be >= 1");
  Scenario s;
  s.seed = seed;
  s.horizon = days * 1440;
  s.sample_period = 1;
  s.noise_sd = {0.05, 0.3, 4.0, 0.3};

  Rng base(splitmix64(seed ^ 0xDA7A6E4Eull));
  for (int d = 0; d < days; ++d) {
    DayPlan p{base.fork(static_cast<std::uint64_t>(d) + 1),
              static_cast<double>(d) * 1440.0, &s.activity_events,
              &s.occupancy_schedule};

    // bedroom occupancy bridges the night; CO2 only
    p.event("bedroom occupancy", 0.0, p.jitter(385, 15), 0.0,
            2.0 * kCo2PerPersonPpmMin * 0.85);
    p.event("bedroom occupancy", p.jitter(1355, 20), 85.0, 0.0,
            2.0 * kCo2PerPersonPpmMin * 0.85);

    // kitchen/living occupancy blocks (unlabelled ambient people)
    s.occupancy_schedule.push_back(
        {p.day_start + p.jitter(395, 15), p.day_start + p.jitter(505, 15), 2});
    s.occupancy_schedule.push_back(
        {p.day_start + p.jitter(1030, 25), p.day_start + p.jitter(1350, 20), 2});

    p.event("toasting", p.jitter(435, 20), p.jitter(8, 2), 12.0, 3.0);
    p.event("making tea", p.jitter(495, 30), 5.0, 1.5, 6.0);
    if (p.rng.uniform01() < 0.75)
      p.event("cooking", p.jitter(755, 40), p.jitter(15, 5), 18.0, 6.0);
    if (p.rng.uniform01() < 0.6) p.event("making tea", p.jitter(905, 45), 5.0, 1.5, 6.0);
    if (p.rng.uniform01() < 0.7)
      p.event("cleaning", p.jitter(840, 90), p.jitter(20, 5), 10.0, 2.0);

    const double fry_start = p.jitter(1120, 40);
    const double fry_dur = p.jitter(20, 5);
    p.event("frying", fry_start, fry_dur, 35.0, 8.0);
    p.event("window open", fry_start + fry_dur + p.jitter(8, 6), p.jitter(25, 10),
            0.0, 0.0, 4.0);
  }
  return s;
}

Scenario default_day_scenario(std::uint64_t seed) { return default_scenario(seed, 1); }

void export_csv(const Trace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("cannot open '" + path + "' for writing");
  out << "timestamp,temp_c,rh_pct,co2_ppm,pm25_ugm3,activity\n";
  char buf[64];
  for (std::size_t i = 0; i < t.timestamps.size(); ++i) {
    out << t.timestamps[i] << ',';
    std::snprintf(buf, sizeof buf, "%.12g", t.temp[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.12g", t.rh[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.12g", t.co2[i]);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.12g", t.pm25[i]);
    out << buf << ',' << t.activity[i] << '\n';
  }
  if (!out) throw Error::io("write failed for '" + path + "'");
}

}  // namespace iaq
