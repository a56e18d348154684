#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mtse {

// Constituency tree node: either a terminal (token set, label empty) or an
// inner node with a label and at least one child.
struct TreeNode {
  std::string label;
  std::string token;
  std::vector<TreeNode> children;

  bool is_terminal() const { return label.empty(); }

  static TreeNode terminal(std::string tok) {
    TreeNode n;
    n.token = std::move(tok);
    return n;
  }
  static TreeNode inner(std::string lbl, std::vector<TreeNode> kids) {
    TreeNode n;
    n.label = std::move(lbl);
    n.children = std::move(kids);
    return n;
  }
};

// "(", ")" and labels become individual tokens:
//   ( S ( NP the dog ) ( VP barked ) )
std::vector<std::string> linearize(const TreeNode& root);

// Strict inverse: accepts exactly one balanced bracketed tree covering the
// whole token stream, every inner node carrying a label and >= 1 child.
// Returns nullopt on any malformed input.
std::optional<TreeNode> delinearize(const std::vector<std::string>& tokens);

std::vector<std::string> tree_yield(const TreeNode& root);

}  // namespace mtse
