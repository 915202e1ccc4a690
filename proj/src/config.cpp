#include "hypergoal/config.hpp"

namespace hypergoal {

using nlohmann::json;

void to_json(json& j, const EnvConfig& c) {
  j = {{"task", to_string(c.task)},
       {"difficulty", to_string(c.difficulty)},
       {"dt", c.dt},
       {"damping", c.damping},
       {"gain", c.gain},
       {"horizon", c.horizon},
       {"agent_radius", c.agent_radius},
       {"block_radius", c.block_radius},
       {"goal_radius", c.goal_radius},
       {"reach_tolerance", c.reach_tolerance},
       {"push_tolerance", c.push_tolerance},
       {"image_size", c.image_size}};
}

void from_json(const json& j, EnvConfig& c) {
  c.task = parse_task(j.at("task").get<std::string>());
  c.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
  j.at("dt").get_to(c.dt);
  j.at("damping").get_to(c.damping);
  j.at("gain").get_to(c.gain);
  j.at("horizon").get_to(c.horizon);
  j.at("agent_radius").get_to(c.agent_radius);
  j.at("block_radius").get_to(c.block_radius);
  j.at("goal_radius").get_to(c.goal_radius);
  j.at("reach_tolerance").get_to(c.reach_tolerance);
  j.at("push_tolerance").get_to(c.push_tolerance);
  j.at("image_size").get_to(c.image_size);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"latent_dim", c.latent_dim},     {"encoder_hidden", c.encoder_hidden},
       {"policy_hidden", c.policy_hidden}, {"embed_dim", c.embed_dim},
       {"embed_hidden", c.embed_hidden},   {"block_hidden", c.block_hidden},
       {"num_blocks", c.num_blocks},       {"max_step", c.max_step},
       {"learned_init", c.learned_init},   {"head_gain", c.head_gain},
       {"dynamics_hidden", c.dynamics_hidden}, {"gcbc_hidden", c.gcbc_hidden},
       {"direct_map_scale", c.direct_map_scale}};
}

void from_json(const json& j, ModelConfig& c) {
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("encoder_hidden").get_to(c.encoder_hidden);
  j.at("policy_hidden").get_to(c.policy_hidden);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("embed_hidden").get_to(c.embed_hidden);
  j.at("block_hidden").get_to(c.block_hidden);
  j.at("num_blocks").get_to(c.num_blocks);
  j.at("max_step").get_to(c.max_step);
  j.at("learned_init").get_to(c.learned_init);
  j.at("head_gain").get_to(c.head_gain);
  j.at("dynamics_hidden").get_to(c.dynamics_hidden);
  j.at("gcbc_hidden").get_to(c.gcbc_hidden);
  j.at("direct_map_scale").get_to(c.direct_map_scale);
}

void to_json(json& j, const ShapingConfig& c) {
  j = {{"beta", c.beta},
       {"lambda_pred", c.lambda_pred},
       {"lambda_dist", c.lambda_dist},
       {"metric", to_string(c.metric)},
       {"reference", to_string(c.reference)},
       {"detach_reference", c.detach_reference}};
}

void from_json(const json& j, ShapingConfig& c) {
  j.at("beta").get_to(c.beta);
  j.at("lambda_pred").get_to(c.lambda_pred);
  j.at("lambda_dist").get_to(c.lambda_dist);
  c.metric = parse_metric(j.at("metric").get<std::string>());
  c.reference = parse_dist_reference(j.at("reference").get<std::string>());
  j.at("detach_reference").get_to(c.detach_reference);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr0", c.lr0},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
       {"encoder_freeze_epochs", c.encoder_freeze_epochs},
       {"grad_clip", c.grad_clip},
       {"dist_samples_per_batch", c.dist_samples_per_batch},
       {"shaping", c.shaping},
       {"seed", c.seed},
       {"model", c.model}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lr0").get_to(c.lr0);
  const json& a = j.at("adam");
  a.at("beta1").get_to(c.adam.beta1);
  a.at("beta2").get_to(c.adam.beta2);
  a.at("eps").get_to(c.adam.eps);
  j.at("encoder_freeze_epochs").get_to(c.encoder_freeze_epochs);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("dist_samples_per_batch").get_to(c.dist_samples_per_batch);
  j.at("shaping").get_to(c.shaping);
  j.at("seed").get_to(c.seed);
  j.at("model").get_to(c.model);
}

void to_json(json& j, const RolloutConfig& c) {
  j = {{"max_steps", c.max_steps},
       {"epsilon", c.epsilon},
       {"regenerate_every_step", c.regenerate_every_step},
       {"stop_on_detection", c.stop_on_detection},
       {"record_params", c.record_params}};
}

void from_json(const json& j, RolloutConfig& c) {
  j.at("max_steps").get_to(c.max_steps);
  j.at("epsilon").get_to(c.epsilon);
  j.at("regenerate_every_step").get_to(c.regenerate_every_step);
  j.at("stop_on_detection").get_to(c.stop_on_detection);
  j.at("record_params").get_to(c.record_params);
}

}  // namespace hypergoal
