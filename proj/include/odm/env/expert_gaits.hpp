#pragma once

#include <array>
#include <cstddef>

namespace odm::env {

struct GaitParams {
  std::size_t joints;
  double amplitude;  // multiple of torque_limit; above 1 the clamp turns the sine into a square wave
  double frequency;  // rad per time unit
  double phase;      // lag between neighbouring joints, rad
  double search_return;
};

// Generated by `odm gait-search`; best grid gait per joint count under
// default physics on flat terrain.
inline constexpr std::array<GaitParams, 8> kExpertGaits{{
    GaitParams{1, 0.5, 1, 0.52359877559829882, -0.02382277470862516},
    GaitParams{2, 8, 1, 1.0471975511965976, 5.0362754857239791},
    GaitParams{3, 8, 1, 1.0471975511965976, 10.007979740144416},
    GaitParams{4, 8, 1, 1.0471975511965976, 14.453556109429204},
    GaitParams{5, 8, 1, 1.0471975511965976, 19.716847121736194},
    GaitParams{6, 8, 1, 1.0471975511965976, 24.691905630607451},
    GaitParams{7, 8, 1, 1.5707963267948966, 28.884865288247113},
    GaitParams{8, 8, 1, 1.0471975511965976, 33.970049732049233},
}};

}  // namespace odm::env
