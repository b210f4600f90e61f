#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iaqcast/errors.hpp"

namespace iaq {

// Single well-mixed zone. Pollutant state advances with the exact one-step
// solution of dC/dt = a(t) - lambda(t) * (C - C_out) under piecewise-constant
// source and ventilation, so zero-source decay reproduces the continuous
// exponential to machine precision at any step size.

struct OccupancyInterval {
  double start_min = 0;
  double end_min = 0;
  double persons = 0;
};

struct ActivityEvent {
  std::string label;
  double start_min = 0;
  double duration_min = 0;
  double pm25_emission = 0;         // ug/min, divided by room volume
  double co2_emission = 0;          // ppm-equivalent source per minute
  double ventilation_multiplier = 1.0;
};

struct NoiseSd {
  double temp = 0;
  double rh = 0;
  double co2 = 0;
  double pm25 = 0;
};

struct Scenario {
  double room_volume = 40.0;        // m^3
  double ventilation_rate = 1.0;    // air changes per hour
  double outdoor_co2 = 420.0;       // ppm
  double outdoor_pm25 = 6.0;        // ug/m^3
  std::vector<OccupancyInterval> occupancy_schedule;
  std::vector<ActivityEvent> activity_events;
  int sample_period = 1;            // minutes per step
  int horizon = 1440;               // steps
  NoiseSd noise_sd;
  std::uint64_t seed = 0;
  // Initial pollutant state; defaults to the outdoor boundary.
  std::optional<double> initial_co2;
  std::optional<double> initial_pm25;

  void validate() const;
};

struct Trace {
  std::vector<std::int64_t> timestamps;  // minutes since start
  std::vector<double> temp;
  std::vector<double> rh;
  std::vector<double> co2;
  std::vector<double> pm25;
  std::vector<std::string> activity;     // empty string when idle
};

// Per-step source/removal bookkeeping, for invariant checks.
struct SimBook {
  std::vector<double> co2_source;       // ppm/min at step start
  std::vector<double> pm25_source;      // ug/m^3/min at step start
  std::vector<double> removal_per_min;  // lambda in 1/min at step start
  std::vector<double> co2_start;        // state before the step
  std::vector<double> pm25_start;
};

Trace simulate(const Scenario& s, SimBook* book = nullptr);

// One synthetic day at 1-minute sampling: morning/evening occupancy, cooking
// at mealtimes, one window opening. Event times jitter with the seed.
Scenario default_day_scenario(std::uint64_t seed);

// Same pattern repeated for `days` days with per-day jitter.
Scenario default_scenario(std::uint64_t seed, int days);

void export_csv(const Trace& t, const std::string& path);

// CO2 source strength of one seated person, ppm/min.
double co2_per_person_ppm_min();

}  // namespace iaq
