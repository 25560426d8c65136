#include "skillkit/ui_model.hpp"

#include <doctest.h>

#include <deque>
#include <random>

using namespace skillkit;

namespace {

UINode leaf(const std::string& id, int x0 = 0, int y0 = 0, int x1 = 100, int y1 = 40) {
    UINode n;
    n.resource_id = id;
    n.class_name = "View";
    n.bounds = Rect{x0, y0, x1, y1};
    return n;
}

std::size_t recursive_count(const UINode& node) {
    std::size_t n = 1;
    for (const UINode& c : node.children) {
        n += recursive_count(c);
    }
    return n;
}

} // namespace

TEST_CASE("flatten_tree is breadth-first") {
    UITree tree;
    tree.root = leaf("root");
    UINode a = leaf("a");
    a.children.push_back(leaf("c"));
    tree.root.children.push_back(a);
    tree.root.children.push_back(leaf("b"));
    finalize_tree(tree);

    std::vector<UINode> flat = flatten_tree(tree);
    REQUIRE(flat.size() == 4);
    CHECK(*flat[0].resource_id == "root");
    CHECK(*flat[1].resource_id == "a");
    CHECK(*flat[2].resource_id == "b");
    CHECK(*flat[3].resource_id == "c");
    CHECK(flat[3].parent_class == "View");
    for (const UINode& n : flat) {
        CHECK(n.children.empty());
    }
}

TEST_CASE("flatten_tree single root") {
    UITree tree;
    tree.root = leaf("only");
    CHECK(flatten_tree(tree).size() == 1);
}

TEST_CASE("flatten_tree on a balanced 7-node tree") {
    UITree tree;
    tree.root = leaf("r");
    for (int i = 0; i < 2; ++i) {
        UINode mid = leaf("m" + std::to_string(i));
        mid.children.push_back(leaf("l" + std::to_string(2 * i)));
        mid.children.push_back(leaf("l" + std::to_string(2 * i + 1)));
        tree.root.children.push_back(mid);
    }
    finalize_tree(tree);
    std::vector<UINode> flat = flatten_tree(tree);
    REQUIRE(flat.size() == 7);
    CHECK(*flat[1].resource_id == "m0");
    CHECK(*flat[2].resource_id == "m1");
}

TEST_CASE("flatten length equals recursive node count on random trees") {
    std::mt19937 rng(7);
    for (int iter = 0; iter < 50; ++iter) {
        UITree tree;
        tree.root = leaf("root");
        int nodes = 1 + static_cast<int>(rng() % 12);
        std::vector<UINode*> pool{&tree.root};
        for (int i = 0; i < nodes; ++i) {
            UINode* parent = pool[rng() % pool.size()];
            parent->children.push_back(leaf("n" + std::to_string(i)));
            // pointers into children vectors go stale on push_back; rebuild
            pool.clear();
            std::deque<UINode*> queue{&tree.root};
            while (!queue.empty()) {
                UINode* n = queue.front();
                queue.pop_front();
                pool.push_back(n);
                for (UINode& c : n->children) {
                    queue.push_back(&c);
                }
            }
        }
        finalize_tree(tree);
        CHECK(flatten_tree(tree).size() == recursive_count(tree.root));

        // BFS order property: parents precede children.
        std::vector<UINode> flat = flatten_tree(tree);
        for (std::size_t i = 0; i < flat.size(); ++i) {
            CHECK(flat[i].node_id == static_cast<int>(i));
        }
    }
}

TEST_CASE("node_center midpoint and truncation") {
    CHECK(node_center(leaf("x", 0, 0, 100, 40)) == Point{50, 20});
    CHECK(node_center(leaf("x", 10, 10, 11, 11)) == Point{10, 10});
    CHECK_THROWS_WITH_AS(node_center(leaf("x", 0, 0, 0, 0)), "degenerate-bounds", Error);
}

TEST_CASE("make_descriptor keeps first five distinct non-empty ids") {
    UITree tree;
    tree.root = leaf("");
    tree.root.resource_id.reset();
    tree.activity = "ClockMain";
    UINode fab1 = leaf("fab");
    UINode fab2 = leaf("fab");
    UINode tab = leaf("tab_alarm");
    tree.root.children = {fab1, fab2, tab};
    finalize_tree(tree);

    UIStateDescriptor d = make_descriptor(tree);
    CHECK(d.activity == "ClockMain");
    CHECK(d.key_element_ids == std::vector<std::string>{"fab", "tab_alarm"});
}

TEST_CASE("make_descriptor with zero resource ids") {
    UITree tree;
    tree.root = leaf("");
    tree.root.resource_id.reset();
    CHECK(make_descriptor(tree).key_element_ids.empty());
}

TEST_CASE("element_count_bucket") {
    UITree tree;
    tree.root = leaf("root");
    for (int i = 0; i < 22; ++i) {
        tree.root.children.push_back(leaf("n" + std::to_string(i)));
    }
    finalize_tree(tree);
    REQUIRE(count_nodes(tree.root) == 23);
    CHECK(make_descriptor(tree).element_count_bucket == 2);
}

TEST_CASE("make_descriptor is deterministic") {
    UITree tree;
    tree.root = leaf("root");
    tree.activity = "screen";
    tree.root.children = {leaf("a"), leaf("b")};
    finalize_tree(tree);
    CHECK(make_descriptor(tree) == make_descriptor(tree));
}

TEST_CASE("tree json round trip") {
    UITree tree;
    tree.root = leaf("root");
    tree.activity = "alarms";
    tree.foreground_app = "clock";
    UINode child = leaf("fab");
    child.text = "Add";
    child.clickable = true;
    tree.root.children.push_back(child);
    finalize_tree(tree);

    json j = tree;
    UITree back = j.get<UITree>();
    CHECK(json(back).dump() == j.dump());
    CHECK(back.root.children[0].text == "Add");
}

TEST_CASE("dialog member detection") {
    UITree tree;
    tree.root = leaf("root");
    UINode dialog = leaf("dialog_perm");
    dialog.class_name = kDialogClassName;
    dialog.children.push_back(leaf("btn_allow"));
    tree.root.children.push_back(leaf("plain"));
    tree.root.children.push_back(dialog);
    finalize_tree(tree);

    CHECK(has_dialog_overlay(tree));
    std::vector<int> members = dialog_member_indices(tree);
    REQUIRE(members.size() == 2);
    std::vector<UINode> flat = flatten_tree(tree);
    CHECK(*flat[static_cast<std::size_t>(members[0])].resource_id == "dialog_perm");
    CHECK(*flat[static_cast<std::size_t>(members[1])].resource_id == "btn_allow");

    UITree plain;
    plain.root = leaf("root");
    CHECK_FALSE(has_dialog_overlay(plain));
}
