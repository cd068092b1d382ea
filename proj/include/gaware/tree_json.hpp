#pragma once

#include "gaware/tree_model.hpp"

#include <string>

namespace gaware {

/// Serializes the model to JSON (top-level keys meta/nodes/leaves, numbers
/// exact to 17 significant digits) and writes it atomically.
void save_tree(const TreeModel& model, const std::string& path);

std::string tree_to_json(const TreeModel& model);

/// Parses and validates a model; throws ValidationError on malformed input,
/// unknown version, or invariant violations.
TreeModel load_tree(const std::string& path);

TreeModel tree_from_json(const std::string& text);

}  // namespace gaware
