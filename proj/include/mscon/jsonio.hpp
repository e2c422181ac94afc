#pragma once

#include <nlohmann/json.hpp>

#include "mscon/synthdata.hpp"

namespace mscon::synth {

inline nlohmann::json task_spec_to_json(const TaskSpec& t) {
  return {{"name", t.name},
          {"num_classes", t.num_classes},
          {"latent_block_dim", t.latent_block_dim},
          {"centroid_separation", t.centroid_separation},
          {"within_class_noise", t.within_class_noise}};
}

inline TaskSpec task_spec_from_json(const nlohmann::json& j) {
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  t.num_classes = j.at("num_classes").get<int>();
  t.latent_block_dim = j.at("latent_block_dim").get<std::size_t>();
  t.centroid_separation = j.value("centroid_separation", t.centroid_separation);
  t.within_class_noise = j.value("within_class_noise", t.within_class_noise);
  return t;
}

inline nlohmann::json dataset_spec_to_json(const DatasetSpec& s) {
  nlohmann::json training = nlohmann::json::array();
  for (const auto& t : s.training_tasks) training.push_back(task_spec_to_json(t));
  nlohmann::json ood = nlohmann::json::array();
  for (const auto& t : s.ood_tasks) ood.push_back(task_spec_to_json(t));
  return {{"training_tasks", training}, {"ood_tasks", ood},
          {"num_samples", s.num_samples}, {"input_dim", s.input_dim},
          {"mixing_noise", s.mixing_noise}, {"seed", s.seed}};
}

// Missing keys fall back to the stock dataset, so a config may override just
// the fields it cares about (e.g. num_samples).
inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s = default_dataset_spec();
  if (j.contains("training_tasks")) {
    s.training_tasks.clear();
    for (const auto& t : j.at("training_tasks"))
      s.training_tasks.push_back(task_spec_from_json(t));
  }
  if (j.contains("ood_tasks")) {
    s.ood_tasks.clear();
    for (const auto& t : j.at("ood_tasks")) s.ood_tasks.push_back(task_spec_from_json(t));
  }
  s.num_samples = j.value("num_samples", s.num_samples);
  s.input_dim = j.value("input_dim", s.input_dim);
  s.mixing_noise = j.value("mixing_noise", s.mixing_noise);
  s.seed = j.value("seed", s.seed);
  return s;
}

}  // namespace mscon::synth
