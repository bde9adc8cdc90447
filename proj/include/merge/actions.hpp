#pragma once

#include <optional>
#include <string>

namespace merge {

enum class MacroAction {
  maintain = 0,
  accelerate,
  decelerate,
  hard_accelerate,
  hard_decelerate,
  merge,
};

inline constexpr int kNumMacroActions = 6;

const char* to_string(MacroAction a);

}  // namespace merge
