#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsn {

struct Position {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Error hierarchy. Everything the library throws derives from Error so
// callers can catch one type at the CLI boundary.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};
struct RangeError : Error {
  using Error::Error;
};
struct ConnectivityError : Error {
  int sensor_index;
  ConnectivityError(int sensor, const std::string& what)
      : Error(what), sensor_index(sensor) {}
};
struct ActionError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct GenerationError : Error {
  using Error::Error;
};
struct SizeError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

// Radio and sensing constants. a/b/er keep the units they are quoted in
// (pJ, nJ); transmit_cost converts to J/bit.
struct EnergyParams {
  double a_pJ = 100.0;     // pJ/bit/m^2, distance-dependent send coefficient
  double b_nJ = 50.0;      // nJ/bit, fixed send cost
  double er_nJ = 50.0;     // nJ/bit, receive cost
  double d_max = 30.0;     // meters, maximum radio range
  double z_bps = 1.0;      // bit/s sensing rate
  double delta_t_s = 3600.0;  // seconds per round
  double e_init_J = 1.0;   // initial sensor energy

  void validate() const {
    if (a_pJ <= 0 || b_nJ <= 0 || er_nJ <= 0 || d_max <= 0 || z_bps <= 0 ||
        delta_t_s <= 0 || e_init_J <= 0) {
      throw ConfigError("EnergyParams: all fields must be strictly positive");
    }
  }

  // Data generated by one sensor in one round, in bits.
  double bits_per_round() const { return z_bps * delta_t_s; }
  double receive_cost_J_per_bit() const { return er_nJ * 1e-9; }
};

// Energy to push one bit over distance d, in J/bit.
inline double transmit_cost(double d, const EnergyParams& p) {
  if (!(d >= 0.0) || d > p.d_max) {
    throw RangeError("transmit_cost: distance " + std::to_string(d) +
                     " outside [0, " + std::to_string(p.d_max) + "]");
  }
  return p.a_pJ * 1e-12 * d * d + p.b_nJ * 1e-9;
}

}  // namespace wsn
