#include "mtse/parsetree.hpp"

namespace mtse {

namespace {

void linearize_into(const TreeNode& node, std::vector<std::string>& out) {
  if (node.is_terminal()) {
    out.push_back(node.token);
    return;
  }
  out.push_back("(");
  out.push_back(node.label);
  for (const auto& child : node.children) linearize_into(child, out);
  out.push_back(")");
}

// Parses one node starting at pos; advances pos past it.
std::optional<TreeNode> parse_node(const std::vector<std::string>& toks,
                                   std::size_t& pos) {
  if (pos >= toks.size()) return std::nullopt;
  if (toks[pos] == ")") return std::nullopt;
  if (toks[pos] != "(") return TreeNode::terminal(toks[pos++]);
  ++pos;  // consume "("
  if (pos >= toks.size() || toks[pos] == "(" || toks[pos] == ")")
    return std::nullopt;  // label must follow the bracket
  TreeNode node;
  node.label = toks[pos++];
  while (pos < toks.size() && toks[pos] != ")") {
    auto child = parse_node(toks, pos);
    if (!child) return std::nullopt;
    node.children.push_back(std::move(*child));
  }
  if (pos >= toks.size() || node.children.empty()) return std::nullopt;
  ++pos;  // consume ")"
  return node;
}

void yield_into(const TreeNode& node, std::vector<std::string>& out) {
  if (node.is_terminal()) {
    out.push_back(node.token);
    return;
  }
  for (const auto& child : node.children) yield_into(child, out);
}

}  // namespace

std::vector<std::string> linearize(const TreeNode& root) {
  std::vector<std::string> out;
  linearize_into(root, out);
  return out;
}

std::optional<TreeNode> delinearize(const std::vector<std::string>& tokens) {
  if (tokens.empty() || tokens.front() != "(") return std::nullopt;
  std::size_t pos = 0;
  auto root = parse_node(tokens, pos);
  if (!root || pos != tokens.size()) return std::nullopt;
  return root;
}

std::vector<std::string> tree_yield(const TreeNode& root) {
  std::vector<std::string> out;
  yield_into(root, out);
  return out;
}

}  // namespace mtse
