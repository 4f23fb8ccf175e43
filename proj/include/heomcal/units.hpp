#pragma once

#include <numbers>

// Internal unit system: time in ns, angular frequency in rad/ns,
// temperature in K. Conversions happen only at the config boundary.
namespace heomcal::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// CODATA 2018 exact values.
inline constexpr double hbar_js = 1.054571817e-34;
inline constexpr double kb_jk = 1.380649e-23;

constexpr double ghz_to_rad_per_ns(double ghz) { return two_pi * ghz; }
constexpr double mhz_to_rad_per_ns(double mhz) { return two_pi * mhz * 1e-3; }
constexpr double rad_per_ns_to_ghz(double w) { return w / two_pi; }
constexpr double rad_per_ns_to_mhz(double w) { return w / two_pi * 1e3; }
constexpr double us_to_ns(double us) { return us * 1e3; }
constexpr double mk_to_k(double mk) { return mk * 1e-3; }

// k_B T / hbar expressed in rad/ns.
constexpr double thermal_frequency(double kelvin) { return kb_jk * kelvin / hbar_js * 1e-9; }

}  // namespace heomcal::units
