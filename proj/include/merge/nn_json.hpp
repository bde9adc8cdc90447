#pragma once

#include "json.hpp"
#include "merge/nn.hpp"

namespace merge::nn {

nlohmann::json mlp_to_json(const Mlp& net, const std::string& role);
Checkpoint mlp_from_json(const nlohmann::json& doc);

}  // namespace merge::nn
