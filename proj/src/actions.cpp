#include "merge/actions.hpp"

namespace merge {

const char* to_string(MacroAction a) {
  switch (a) {
    case MacroAction::maintain: return "maintain";
    case MacroAction::accelerate: return "accelerate";
    case MacroAction::decelerate: return "decelerate";
    case MacroAction::hard_accelerate: return "hard_accelerate";
    case MacroAction::hard_decelerate: return "hard_decelerate";
    case MacroAction::merge: return "merge";
  }
  return "unknown";
}

}  // namespace merge
