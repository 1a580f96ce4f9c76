#pragma once
// Reasoning-tree construction: breadth-first expansion where every persona
// in the council proposes candidate thoughts at each surviving node, each
// candidate is valued by an evaluator backend, and low-value candidates are
// pruned before they can be expanded. Extraction walks the finished tree
// and returns one chain per surviving leaf.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "calign/backend.hpp"
#include "calign/core.hpp"
#include "calign/prompts.hpp"

namespace calign {

struct Persona {
    std::string name;
    std::string charter;
};

// The five-member council used by default. Order is fixed; expansion
// iterates personas in this order so runs are reproducible.
std::vector<Persona> default_council();

struct TreeNode {
    std::string id;
    std::string thought;  // empty only at the root
    double value = 1.0;   // in [0,1]
    std::string persona;  // proposing persona name; empty at the root
    std::vector<std::string> children;
    bool pruned = false;
    int depth = 0;
};

struct ReasoningTree {
    Scenario scenario;
    std::map<std::string, TreeNode> nodes;
    std::string root;
};

void to_json(json& j, const TreeNode& n);
void from_json(const json& j, TreeNode& n);
void to_json(json& j, const ReasoningTree& t);
void from_json(const json& j, ReasoningTree& t);

// Returns every structural violation (missing root, multiple parents,
// unreachable nodes, pruned nodes with children); empty means valid.
std::vector<std::string> validate_tree(const ReasoningTree& tree);

// Parses bullet lines ("- ", "* ", "1." / "1)") out of a proposal
// completion. Exposed so tests can exercise the grammar directly.
std::vector<std::string> parse_bullet_lines(const std::string& text);

// Asks persona for exactly k candidate thoughts given the path so far.
// Fewer than k parseable thoughts is a GenerationShortfallError.
std::vector<std::string> propose_thoughts(Backend& backend, const Scenario& scenario,
                                          const std::vector<std::string>& path_so_far, const Persona& persona,
                                          int k, const PromptTemplates& templates, double temperature);

// Values one candidate thought in [0,1]. Out-of-range evaluator scores are
// clamped (with the raw text logged to stderr), unparseable output throws.
double evaluate_value(Backend& backend, const Scenario& scenario, const std::vector<std::string>& path_so_far,
                      const std::string& thought, const PromptTemplates& templates);

// Splits children by value >= threshold (kept) / < threshold (pruned, flag
// set). Boundary values survive.
struct PrunePartition {
    std::vector<TreeNode> kept;
    std::vector<TreeNode> pruned;
};
PrunePartition prune(std::vector<TreeNode> children, double threshold);

// Full expand-value-prune construction. The generator proposes thoughts and
// the evaluator values them; pass the same backend twice when one model
// plays both parts. Node ids are "n0" (root), "n1", ... in creation order;
// with scripted backends the result is bit-deterministic.
ReasoningTree build_tree(Backend& generator, Backend& evaluator, const Scenario& scenario,
                         const AlignConfig& config, const std::vector<Persona>& council,
                         const PromptTemplates& templates);

// One chain per non-pruned leaf (a kept node with no kept children), in
// depth-first order; the root is excluded from step sequences, so a
// root-only tree yields no chains. Chain ids are the leaf node ids.
std::vector<ReasoningChain> extract_paths(const ReasoningTree& tree);

}  // namespace calign
