#pragma once

#include <json.hpp>

#include "pear/trainer.hpp"

namespace pear {

// JSON (de)serialization for the experiment config file and reports.
WeightConfig weight_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json weight_config_to_json(const WeightConfig& cfg);

ObjectiveSpec objective_from_json(const nlohmann::json& j);
nlohmann::ordered_json objective_to_json(const ObjectiveSpec& spec);

TaskSpec task_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json task_spec_to_json(const TaskSpec& spec);

OfflineConfig offline_config_from_json(const nlohmann::json& j);
OnlineConfig online_config_from_json(const nlohmann::json& j);

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json arm_report_to_json(const ArmReport& report);
ArmReport arm_report_from_json(const nlohmann::json& j);

}  // namespace pear
