#include "ridnet/config_json.hpp"

namespace ridnet {

namespace {
template <typename V>
void read(const nlohmann::json& j, const char* key, V& into) {
    if (j.contains(key)) into = j.at(key).get<V>();
}
}  // namespace

void to_json(nlohmann::json& j, const GraphConfig& c) {
    j = {{"window", c.window}, {"k", c.k}, {"m", c.m}, {"depth_radius", c.depth_radius}};
}

void from_json(const nlohmann::json& j, GraphConfig& c) {
    read(j, "window", c.window);
    read(j, "k", c.k);
    read(j, "m", c.m);
    read(j, "depth_radius", c.depth_radius);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = {{"channels", c.channels},     {"embed_hidden", c.embed_hidden}, {"tail_hidden", c.tail_hidden},
         {"blocks", c.blocks},         {"slices", c.slices},             {"edge_hidden", c.edge_hidden},
         {"embed_slope", c.embed_slope}, {"theta", to_string(c.theta)},  {"graph", c.graph}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
    read(j, "channels", c.channels);
    read(j, "embed_hidden", c.embed_hidden);
    read(j, "tail_hidden", c.tail_hidden);
    read(j, "blocks", c.blocks);
    read(j, "slices", c.slices);
    read(j, "edge_hidden", c.edge_hidden);
    read(j, "embed_slope", c.embed_slope);
    if (j.contains("theta")) c.theta = parse_theta_mode(j.at("theta").get<std::string>());
    if (j.contains("graph")) from_json(j.at("graph"), c.graph);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lambda_perceptual", c.lambda_perceptual},
         {"lambda_gp", c.lambda_gp},
         {"lr_g", c.lr_g},
         {"lr_d", c.lr_d},
         {"gamma", c.gamma},
         {"decay_interval", c.decay_interval},
         {"batch", c.batch},
         {"epochs", c.epochs},
         {"critic_steps", c.critic_steps},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"seed", c.seed},
         {"phi_seed", c.phi_seed},
         {"loss", to_string(c.loss)},
         {"max_steps", c.max_steps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    read(j, "lambda_perceptual", c.lambda_perceptual);
    read(j, "lambda_gp", c.lambda_gp);
    read(j, "lr_g", c.lr_g);
    read(j, "lr_d", c.lr_d);
    read(j, "gamma", c.gamma);
    read(j, "decay_interval", c.decay_interval);
    read(j, "batch", c.batch);
    read(j, "epochs", c.epochs);
    read(j, "critic_steps", c.critic_steps);
    read(j, "beta1", c.beta1);
    read(j, "beta2", c.beta2);
    read(j, "adam_eps", c.adam_eps);
    read(j, "seed", c.seed);
    read(j, "phi_seed", c.phi_seed);
    if (j.contains("loss")) c.loss = parse_loss_mode(j.at("loss").get<std::string>());
    read(j, "max_steps", c.max_steps);
}

void to_json(nlohmann::json& j, const WindowSpec& w) { j = {{"width", w.width}, {"level", w.level}}; }

void from_json(const nlohmann::json& j, WindowSpec& w) {
    read(j, "width", w.width);
    read(j, "level", w.level);
}

}  // namespace ridnet
