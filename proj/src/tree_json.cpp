#include "gaware/tree_json.hpp"

#include "gaware/csv_io.hpp"

#include <json.hpp>

#include <fstream>

namespace gaware {

namespace {

using json = nlohmann::json;

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

}  // namespace

std::string tree_to_json(const TreeModel& model) {
  json j;
  j["meta"] = {
      {"version", model.meta.version},
      {"sigma2", model.meta.sigma2},
      {"groups", model.meta.groups},
      {"splits", model.meta.splits},
      {"min_leaf", model.meta.min_leaf},
      {"depth", model.meta.depth},
      {"objective", model.meta.objective},
      {"epsilon", model.meta.epsilon},
      {"split_rule", model.meta.split_rule},
      {"outcome_names", model.meta.outcome_names},
      {"covariate_names", model.meta.covariate_names},
  };
  j["nodes"] = json::array();
  for (const auto& b : model.nodes)
    j["nodes"].push_back({{"var", b.split_var},
                          {"value", b.split_value},
                          {"left", b.left},
                          {"right", b.right}});
  j["leaves"] = json::array();
  for (const auto& leaf : model.leaves) {
    json entry = {{"ignorance", leaf.ignorance}, {"label", leaf.label}};
    if (!leaf.ignorance) entry["prediction"] = vector_to_json(leaf.prediction);
    if (leaf.infeasible_scope) entry["infeasible_scope"] = true;
    j["leaves"].push_back(std::move(entry));
  }
  return j.dump(2) + "\n";
}

void save_tree(const TreeModel& model, const std::string& path) {
  validate_tree(model);
  atomic_write(path, tree_to_json(model));
}

TreeModel tree_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw ValidationError(std::string("malformed tree JSON: ") + err.what());
  }
  try {
    TreeModel model;
    const json& meta = j.at("meta");
    model.meta.version = meta.at("version").get<int>();
    if (model.meta.version != 1)
      throw ValidationError("unsupported tree version " + std::to_string(model.meta.version));
    model.meta.sigma2 = meta.at("sigma2").get<double>();
    model.meta.groups = meta.at("groups").get<int>();
    model.meta.splits = meta.at("splits").get<int>();
    model.meta.min_leaf = meta.at("min_leaf").get<int>();
    model.meta.depth = meta.at("depth").get<int>();
    model.meta.objective = meta.at("objective").get<double>();
    model.meta.epsilon = meta.at("epsilon").get<double>();
    model.meta.split_rule = meta.at("split_rule").get<std::string>();
    model.meta.outcome_names = meta.at("outcome_names").get<std::vector<std::string>>();
    model.meta.covariate_names = meta.at("covariate_names").get<std::vector<std::string>>();
    for (const auto& nb : j.at("nodes")) {
      TreeBranch b;
      b.split_var = nb.at("var").get<int>();
      b.split_value = nb.at("value").get<double>();
      b.left = nb.at("left").get<int>();
      b.right = nb.at("right").get<int>();
      model.nodes.push_back(b);
    }
    for (const auto& nl : j.at("leaves")) {
      TreeLeaf leaf;
      leaf.ignorance = nl.at("ignorance").get<bool>();
      leaf.label = nl.at("label").get<int>();
      if (nl.contains("prediction")) leaf.prediction = vector_from_json(nl.at("prediction"));
      if (nl.contains("infeasible_scope")) leaf.infeasible_scope = nl.at("infeasible_scope").get<bool>();
      model.leaves.push_back(std::move(leaf));
    }
    validate_tree(model);
    return model;
  } catch (const json::exception& err) {
    throw ValidationError(std::string("tree JSON missing fields: ") + err.what());
  }
}

TreeModel load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return tree_from_json(text);
}

}  // namespace gaware
