#pragma once

#include "json.hpp"
#include "swm/cohort.hpp"

namespace swm::cohort {

nlohmann::json discretization_to_json(const DiscretizationSpec& spec);
DiscretizationSpec discretization_from_json(const nlohmann::json& j);
nlohmann::json normalization_to_json(const NormalizationSpec& spec);
NormalizationSpec normalization_from_json(const nlohmann::json& j);

}  // namespace swm::cohort
