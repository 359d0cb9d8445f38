#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include "odm/model/odm_model.hpp"
#include "odm/numerics/checkpoint.hpp"

// A model checkpoint is the parameter file plus "<path>.ini" describing the
// config, every registered task and which one is active.

namespace odm::model {

namespace detail {

inline std::string mask_str(const std::vector<std::uint8_t>& mask) {
  std::string s;
  for (auto b : mask) s += b ? '1' : '0';
  return s;
}

inline std::vector<std::uint8_t> parse_mask(const std::string& s) {
  std::vector<std::uint8_t> out;
  for (char c : s) {
    if (c != '0' && c != '1') throw std::runtime_error("model sidecar: bad mask character");
    out.push_back(c == '1');
  }
  return out;
}

}  // namespace detail

inline std::string sidecar_path(const std::string& checkpoint) { return checkpoint + ".ini"; }

inline void save_model(const OdmModel& model, const std::string& path) {
  namespace pt = boost::property_tree;
  nn::save_checkpoint(model.params(), path);
  pt::ptree tree;
  const auto& c = model.config();
  tree.put("model.seed", model.seed());
  tree.put("model.embed_dim", c.embed_dim);
  tree.put("model.heads", c.heads);
  tree.put("model.attention_dim", c.attention_dim);
  tree.put("model.causal_layers", c.causal_layers);
  tree.put("model.ffn_mult", c.ffn_mult);
  tree.put("model.window", c.window);
  tree.put("model.max_timestep", c.max_timestep);
  tree.put("model.max_joints", c.max_joints);
  tree.put("model.active", model.active_task());
  std::string names;
  for (const auto& name : model.task_names()) {
    names += (names.empty() ? "" : ",") + name;
    const auto& s = model.task(name).spec;
    const std::string sec = "task." + name;
    pt::ptree t;
    t.put("joints", s.joints);
    t.put("obs_per_joint", s.obs_per_joint);
    t.put("dof_per_joint", s.dof_per_joint);
    t.put("ext_dim", s.ext_dim);
    t.put("state_mask", detail::mask_str(s.state_mask));
    t.put("action_mask", detail::mask_str(s.action_mask));
    tree.add_child(pt::ptree::path_type(sec, '/'), t);
  }
  tree.put("model.tasks", names);
  pt::write_ini(sidecar_path(path), tree);
}

/// Rebuilds the architecture from the sidecar and loads the parameters.
inline std::unique_ptr<OdmModel> load_model(const std::string& path) {
  namespace pt = boost::property_tree;
  if (!std::filesystem::exists(path)) throw std::runtime_error("model checkpoint '" + path + "' not found");
  pt::ptree tree;
  pt::read_ini(sidecar_path(path), tree);
  ModelConfig c;
  c.embed_dim = tree.get<std::size_t>("model.embed_dim");
  c.heads = tree.get<std::size_t>("model.heads");
  c.attention_dim = tree.get<std::size_t>("model.attention_dim");
  c.causal_layers = tree.get<std::size_t>("model.causal_layers");
  c.ffn_mult = tree.get<std::size_t>("model.ffn_mult");
  c.window = tree.get<std::size_t>("model.window");
  c.max_timestep = tree.get<std::size_t>("model.max_timestep");
  c.max_joints = tree.get<std::size_t>("model.max_joints");
  auto model = std::make_unique<OdmModel>(c, tree.get<std::uint64_t>("model.seed"));
  const std::string names = tree.get<std::string>("model.tasks", "");
  std::size_t pos = 0;
  while (pos < names.size()) {
    std::size_t comma = names.find(',', pos);
    if (comma == std::string::npos) comma = names.size();
    const std::string name = names.substr(pos, comma - pos);
    const auto& t = tree.get_child(pt::ptree::path_type("task." + name, '/'));
    MorphologySpec s{name,
                     t.get<std::size_t>("joints"),
                     t.get<std::size_t>("obs_per_joint"),
                     t.get<std::size_t>("dof_per_joint"),
                     t.get<std::size_t>("ext_dim"),
                     detail::parse_mask(t.get<std::string>("state_mask")),
                     detail::parse_mask(t.get<std::string>("action_mask"))};
    model->register_task(s);
    pos = comma + 1;
  }
  nn::load_into(model->params(), nn::read_checkpoint(path));
  const std::string active = tree.get<std::string>("model.active", "");
  if (!active.empty()) model->activate(active);
  return model;
}

}  // namespace odm::model
