#pragma once

namespace dwcool::constants {

// Exact SI values (2019 redefinition) except hbar, which is derived from h.
inline constexpr double hbar = 1.054571817e-34;   // J s
inline constexpr double k_B = 1.380649e-23;       // J / K
inline constexpr double epsilon_0 = 8.8541878128e-12;  // F / m
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

}  // namespace dwcool::constants
