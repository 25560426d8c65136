#include "skillkit/ui_model.hpp"

#include <deque>

namespace skillkit {

namespace {

void set_optional(json& j, const char* key, const std::optional<std::string>& v) {
    if (v) {
        j[key] = *v;
    }
}

std::optional<std::string> get_optional(const json& j, const char* key) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        return it->get<std::string>();
    }
    return std::nullopt;
}

} // namespace

std::vector<UINode> flatten_tree(const UITree& tree) {
    std::vector<UINode> flat;
    std::deque<const UINode*> queue{&tree.root};
    while (!queue.empty()) {
        const UINode* node = queue.front();
        queue.pop_front();
        UINode copy = *node;
        copy.children.clear();
        flat.push_back(std::move(copy));
        for (const UINode& child : node->children) {
            queue.push_back(&child);
        }
    }
    return flat;
}

std::size_t count_nodes(const UINode& root) {
    std::size_t n = 1;
    for (const UINode& child : root.children) {
        n += count_nodes(child);
    }
    return n;
}

Point node_center(const UINode& node) {
    const Rect& b = node.bounds;
    if (b.right <= b.left || b.bottom <= b.top) {
        throw Error("degenerate-bounds");
    }
    return Point{(b.left + b.right) / 2, (b.top + b.bottom) / 2};
}

UIStateDescriptor make_descriptor(const UITree& tree) {
    UIStateDescriptor d;
    d.activity = tree.activity;
    std::vector<UINode> flat = flatten_tree(tree);
    for (const UINode& node : flat) {
        if (d.key_element_ids.size() >= kMaxKeyElementIds) {
            break;
        }
        if (!node.resource_id || node.resource_id->empty()) {
            continue;
        }
        bool seen = false;
        for (const std::string& id : d.key_element_ids) {
            if (id == *node.resource_id) {
                seen = true;
                break;
            }
        }
        if (!seen) {
            d.key_element_ids.push_back(*node.resource_id);
        }
    }
    d.element_count_bucket = static_cast<int>(flat.size()) / kCountBucketWidth;
    return d;
}

namespace {

void finalize_node(UINode& node, const UINode* parent, int sibling_index, int& next_id) {
    node.node_id = next_id;
    node.sibling_index = sibling_index;
    if (parent) {
        node.parent_class = parent->class_name;
    } else {
        node.parent_class.reset();
    }
    ++next_id;
}

} // namespace

void finalize_tree(UITree& tree) {
    // BFS so node_id equals the flattened element index.
    int next_id = 0;
    finalize_node(tree.root, nullptr, 0, next_id);
    std::deque<UINode*> queue{&tree.root};
    while (!queue.empty()) {
        UINode* node = queue.front();
        queue.pop_front();
        for (std::size_t i = 0; i < node->children.size(); ++i) {
            finalize_node(node->children[i], node, static_cast<int>(i), next_id);
            queue.push_back(&node->children[i]);
        }
    }
}

bool has_dialog_overlay(const UITree& tree) {
    return !dialog_member_indices(tree).empty();
}

std::vector<int> dialog_member_indices(const UITree& tree) {
    std::vector<int> indices;
    struct Entry {
        const UINode* node;
        bool in_dialog;
    };
    std::deque<Entry> queue{{&tree.root, tree.root.class_name == kDialogClassName}};
    int index = 0;
    while (!queue.empty()) {
        Entry e = queue.front();
        queue.pop_front();
        if (e.in_dialog) {
            indices.push_back(index);
        }
        ++index;
        for (const UINode& child : e.node->children) {
            queue.push_back({&child, e.in_dialog || child.class_name == kDialogClassName});
        }
    }
    return indices;
}

void to_json(json& j, const Rect& r) {
    j = json{{"left", r.left}, {"top", r.top}, {"right", r.right}, {"bottom", r.bottom}};
}

void from_json(const json& j, Rect& r) {
    if (j.is_array()) {
        r.left = j.at(0);
        r.top = j.at(1);
        r.right = j.at(2);
        r.bottom = j.at(3);
        return;
    }
    r.left = j.value("left", 0);
    r.top = j.value("top", 0);
    r.right = j.value("right", 0);
    r.bottom = j.value("bottom", 0);
}

void to_json(json& j, const UINode& n) {
    j = json::object();
    set_optional(j, "resource_id", n.resource_id);
    set_optional(j, "text", n.text);
    set_optional(j, "content_desc", n.content_desc);
    j["class_name"] = n.class_name;
    j["bounds"] = n.bounds;
    set_optional(j, "parent_class", n.parent_class);
    j["sibling_index"] = n.sibling_index;
    j["clickable"] = n.clickable;
    j["node_id"] = n.node_id;
    j["children"] = n.children;
}

void from_json(const json& j, UINode& n) {
    n.resource_id = get_optional(j, "resource_id");
    n.text = get_optional(j, "text");
    n.content_desc = get_optional(j, "content_desc");
    n.class_name = j.value("class_name", "View");
    if (j.contains("bounds")) {
        n.bounds = j.at("bounds").get<Rect>();
    }
    n.parent_class = get_optional(j, "parent_class");
    n.sibling_index = j.value("sibling_index", 0);
    n.clickable = j.value("clickable", false);
    n.node_id = j.value("node_id", -1);
    n.children.clear();
    if (auto it = j.find("children"); it != j.end()) {
        n.children = it->get<std::vector<UINode>>();
    }
}

void to_json(json& j, const UITree& t) {
    j = json{{"root", t.root}, {"activity", t.activity}, {"foreground_app", t.foreground_app}};
}

void from_json(const json& j, UITree& t) {
    t.root = j.at("root").get<UINode>();
    t.activity = j.value("activity", "");
    t.foreground_app = j.value("foreground_app", "");
}

void to_json(json& j, const UIStateDescriptor& d) {
    j = json{{"activity", d.activity},
             {"key_element_ids", d.key_element_ids},
             {"element_count_bucket", d.element_count_bucket}};
}

void from_json(const json& j, UIStateDescriptor& d) {
    d.activity = j.value("activity", "");
    d.key_element_ids = j.value("key_element_ids", std::vector<std::string>{});
    d.element_count_bucket = j.value("element_count_bucket", 0);
}

} // namespace skillkit
