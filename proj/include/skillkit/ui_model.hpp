#pragma once

#include "skillkit/common.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

struct Rect {
    int left = 0;
    int top = 0;
    int right = 0;
    int bottom = 0;

    bool operator==(const Rect&) const = default;
};

struct Point {
    int x = 0;
    int y = 0;

    bool operator==(const Point&) const = default;
};

// One node of an accessibility hierarchy. Flattened copies keep the
// parent_class / sibling_index context but drop children.
struct UINode {
    std::optional<std::string> resource_id;
    std::optional<std::string> text;
    std::optional<std::string> content_desc;
    std::string class_name = "View";
    Rect bounds{};
    std::optional<std::string> parent_class;
    int sibling_index = 0;
    std::vector<UINode> children;
    bool clickable = false;
    int node_id = -1;
};

struct UITree {
    UINode root;
    std::string activity;
    std::string foreground_app;
};

// Compact fingerprint of a screen: activity name, the first few stable
// element ids, and a bucketed node count.
struct UIStateDescriptor {
    std::string activity;
    std::vector<std::string> key_element_ids;
    int element_count_bucket = 0;

    bool operator==(const UIStateDescriptor&) const = default;
};

inline constexpr std::size_t kMaxKeyElementIds = 5;
inline constexpr int kCountBucketWidth = 10;

// Dialog overlays are marked by this container class in captured trees.
inline constexpr const char* kDialogClassName = "Dialog";

// Breadth-first flattening; the list index is the element index policies
// act on. Copies retain parent_class/sibling_index and have no children.
std::vector<UINode> flatten_tree(const UITree& tree);

std::size_t count_nodes(const UINode& root);

// Midpoint with integer truncation. Throws Error("degenerate-bounds") on a
// zero-area rectangle.
Point node_center(const UINode& node);

UIStateDescriptor make_descriptor(const UITree& tree);

// Recomputes derived fields in place: node_id in BFS order, sibling_index,
// and parent_class from the hierarchy.
void finalize_tree(UITree& tree);

bool has_dialog_overlay(const UITree& tree);

// BFS indices of every node inside a dialog subtree (containers included).
std::vector<int> dialog_member_indices(const UITree& tree);

void to_json(json& j, const Rect& r);
void from_json(const json& j, Rect& r);
void to_json(json& j, const UINode& n);
void from_json(const json& j, UINode& n);
void to_json(json& j, const UITree& t);
void from_json(const json& j, UITree& t);
void to_json(json& j, const UIStateDescriptor& d);
void from_json(const json& j, UIStateDescriptor& d);

} // namespace skillkit
