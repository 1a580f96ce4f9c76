#include "calign/tree.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>

#include <nlohmann/json.hpp>

#include "calign/reward.hpp"

namespace calign {

std::vector<Persona> default_council() {
    return {
        {"Sociologist",
         "Focuses on societal norms, ethics, and the broader impact of a solution."},
        {"Psychologist",
         "Analyzes the user's underlying emotional state, cognitive biases, and unstated psychological "
         "needs."},
        {"Pragmatist",
         "Prioritizes practical, efficient, and feasible solutions, often acting as a reality check."},
        {"Pedagogue",
         "Aims to educate the user, explaining complex topics clearly and empowering them to make "
         "informed decisions."},
        {"Contrarian",
         "Intentionally challenges assumptions and explores alternative or non-obvious paths to prevent "
         "groupthink and uncover novel solutions."},
    };
}

void to_json(json& j, const TreeNode& n) {
    j = json{{"id", n.id},         {"thought", n.thought}, {"value", n.value}, {"persona", n.persona},
             {"children", n.children}, {"pruned", n.pruned},   {"depth", n.depth}};
}

void from_json(const json& j, TreeNode& n) {
    j.at("id").get_to(n.id);
    j.at("thought").get_to(n.thought);
    j.at("value").get_to(n.value);
    j.at("persona").get_to(n.persona);
    j.at("children").get_to(n.children);
    j.at("pruned").get_to(n.pruned);
    j.at("depth").get_to(n.depth);
}

void to_json(json& j, const ReasoningTree& t) {
    json nodes = json::object();
    for (const auto& [id, node] : t.nodes) nodes[id] = node;
    j = json{{"scenario", t.scenario}, {"root", t.root}, {"nodes", nodes}};
}

void from_json(const json& j, ReasoningTree& t) {
    j.at("scenario").get_to(t.scenario);
    j.at("root").get_to(t.root);
    t.nodes.clear();
    for (const auto& [id, node] : j.at("nodes").items()) {
        t.nodes[id] = node.get<TreeNode>();
    }
}

std::vector<std::string> validate_tree(const ReasoningTree& tree) {
    std::vector<std::string> v;
    if (tree.nodes.find(tree.root) == tree.nodes.end()) {
        v.push_back("root node '" + tree.root + "' missing from node map");
        return v;
    }
    std::map<std::string, int> parent_count;
    for (const auto& [id, node] : tree.nodes) {
        if (node.pruned && !node.children.empty()) {
            v.push_back("pruned node " + id + " has children");
        }
        for (const auto& child : node.children) {
            if (tree.nodes.find(child) == tree.nodes.end()) {
                v.push_back("node " + id + " references missing child " + child);
            } else {
                parent_count[child] += 1;
            }
        }
    }
    for (const auto& [id, count] : parent_count) {
        if (count > 1) v.push_back("node " + id + " has " + std::to_string(count) + " parents");
    }
    if (parent_count.count(tree.root) > 0) v.push_back("root has a parent");
    // Reachability from the root.
    std::vector<std::string> stack{tree.root};
    std::map<std::string, bool> seen;
    while (!stack.empty()) {
        const std::string id = stack.back();
        stack.pop_back();
        if (seen[id]) {
            v.push_back("cycle detected at node " + id);
            break;
        }
        seen[id] = true;
        auto it = tree.nodes.find(id);
        if (it == tree.nodes.end()) continue;
        for (const auto& child : it->second.children) stack.push_back(child);
    }
    for (const auto& [id, node] : tree.nodes) {
        (void)node;
        if (!seen[id]) v.push_back("node " + id + " unreachable from root");
    }
    return v;
}

std::vector<std::string> parse_bullet_lines(const std::string& text) {
    std::vector<std::string> out;
    std::string line;
    auto flush = [&] {
        // Accept "- x", "* x", "1. x", "1) x".
        size_t i = 0;
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        size_t content = std::string::npos;
        if (i < line.size() && (line[i] == '-' || line[i] == '*')) {
            content = i + 1;
        } else {
            size_t d = i;
            while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
            if (d > i && d < line.size() && (line[d] == '.' || line[d] == ')')) content = d + 1;
        }
        if (content != std::string::npos) {
            std::string body = line.substr(content);
            size_t b = 0, e = body.size();
            while (b < e && std::isspace(static_cast<unsigned char>(body[b]))) ++b;
            while (e > b && std::isspace(static_cast<unsigned char>(body[e - 1]))) --e;
            if (e > b) out.push_back(body.substr(b, e - b));
        }
        line.clear();
    };
    for (char c : text) {
        if (c == '\n') {
            flush();
        } else if (c != '\r') {
            line += c;
        }
    }
    flush();
    return out;
}

std::vector<std::string> propose_thoughts(Backend& backend, const Scenario& scenario,
                                          const std::vector<std::string>& path_so_far, const Persona& persona,
                                          int k, const PromptTemplates& templates, double temperature) {
    if (k < 1) throw DomainError("propose_thoughts: k must be >= 1");
    const PromptCall call =
        build_propose_call(templates, scenario, path_so_far, persona.name, persona.charter, k, temperature);
    const std::string completion = backend.complete(call.messages, call.params).at(0);
    std::vector<std::string> thoughts = parse_bullet_lines(completion);
    if (static_cast<int>(thoughts.size()) < k) {
        throw GenerationShortfallError("persona " + persona.name + " produced " +
                                           std::to_string(thoughts.size()) + " parseable thoughts, needed " +
                                           std::to_string(k),
                                       static_cast<int>(thoughts.size()), k);
    }
    thoughts.resize(static_cast<size_t>(k));
    return thoughts;
}

double evaluate_value(Backend& backend, const Scenario& scenario, const std::vector<std::string>& path_so_far,
                      const std::string& thought, const PromptTemplates& templates) {
    if (thought.empty()) throw DomainError("evaluate_value: empty thought");
    const PromptCall call = build_value_call(templates, scenario, path_so_far, thought);
    const std::string completion = backend.complete(call.messages, call.params).at(0);
    double value = extract_score_raw(completion);
    if (value < 0.0 || value > 1.0) {
        std::cerr << "warning: evaluator score " << value << " out of [0,1], clamped; raw output:\n"
                  << completion << "\n";
        value = std::clamp(value, 0.0, 1.0);
    }
    return value;
}

PrunePartition prune(std::vector<TreeNode> children, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw DomainError("prune: threshold must be in [0,1]");
    PrunePartition part;
    for (auto& node : children) {
        if (node.value >= threshold) {
            node.pruned = false;
            part.kept.push_back(std::move(node));
        } else {
            node.pruned = true;
            part.pruned.push_back(std::move(node));
        }
    }
    return part;
}

ReasoningTree build_tree(Backend& generator, Backend& evaluator, const Scenario& scenario,
                         const AlignConfig& config, const std::vector<Persona>& council,
                         const PromptTemplates& templates) {
    if (auto violations = validate_align_config(config); !violations.empty()) {
        throw ConfigError("invalid config: " + violations.front());
    }
    if (council.empty()) throw ConfigError("build_tree: empty council");

    ReasoningTree tree;
    tree.scenario = scenario;
    int next_id = 0;
    auto fresh_id = [&] { return "n" + std::to_string(next_id++); };

    TreeNode root;
    root.id = fresh_id();
    root.depth = 0;
    tree.root = root.id;
    tree.nodes[root.id] = root;

    // Frontier of surviving node ids at the current depth, in creation order,
    // each carrying its root-to-node thought path (root thought excluded).
    std::map<std::string, std::vector<std::string>> paths;
    paths[tree.root] = {};
    std::vector<std::string> frontier{tree.root};
    for (int depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
        std::vector<std::string> next_frontier;
        for (const auto& node_id : frontier) {
            const std::vector<std::string> path = paths.at(node_id);

            std::vector<TreeNode> proposals;
            for (const auto& persona : council) {
                std::vector<std::string> thoughts;
                try {
                    thoughts = propose_thoughts(generator, scenario, path, persona, config.branching,
                                                templates, config.sample_temperature);
                } catch (const Error& e) {
                    throw Error(std::string(e.what()) + " [while proposing at node " + node_id + ", path: " +
                                render_numbered(path) + "]");
                }
                for (const auto& thought : thoughts) {
                    TreeNode node;
                    node.id = fresh_id();
                    node.thought = thought;
                    node.persona = persona.name;
                    node.depth = depth + 1;
                    try {
                        node.value = evaluate_value(evaluator, scenario, path, thought, templates);
                    } catch (const Error& e) {
                        throw Error(std::string(e.what()) + " [while valuing node " + node.id + ", path: " +
                                    render_numbered(path) + "]");
                    }
                    proposals.push_back(std::move(node));
                }
            }
            PrunePartition part = prune(std::move(proposals), config.prune_threshold);
            // Children stay in proposal order regardless of the partition.
            std::vector<TreeNode> ordered;
            ordered.reserve(part.kept.size() + part.pruned.size());
            for (auto& node : part.kept) ordered.push_back(std::move(node));
            for (auto& node : part.pruned) ordered.push_back(std::move(node));
            std::sort(ordered.begin(), ordered.end(), [](const TreeNode& a, const TreeNode& b) {
                return std::stoi(a.id.substr(1)) < std::stoi(b.id.substr(1));
            });
            auto& parent = tree.nodes[node_id];
            for (auto& node : ordered) {
                parent.children.push_back(node.id);
                if (!node.pruned) {
                    next_frontier.push_back(node.id);
                    auto child_path = path;
                    child_path.push_back(node.thought);
                    paths[node.id] = std::move(child_path);
                }
                tree.nodes[node.id] = std::move(node);
            }
        }
        frontier = std::move(next_frontier);
    }
    return tree;
}

std::vector<ReasoningChain> extract_paths(const ReasoningTree& tree) {
    if (auto violations = validate_tree(tree); !violations.empty()) {
        throw DomainError("extract_paths: invalid tree: " + violations.front());
    }
    std::vector<ReasoningChain> chains;

    struct Frame {
        const TreeNode* node;
        std::vector<const TreeNode*> path;  // root..node inclusive
    };
    std::vector<Frame> stack;
    stack.push_back({&tree.nodes.at(tree.root), {&tree.nodes.at(tree.root)}});
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        std::vector<const TreeNode*> kept_children;
        for (const auto& child_id : frame.node->children) {
            const TreeNode& child = tree.nodes.at(child_id);
            if (!child.pruned) kept_children.push_back(&child);
        }
        if (kept_children.empty()) {
            // A surviving leaf. The root itself yields no chain: there are no
            // steps to report.
            if (frame.node->id == tree.root) continue;
            ReasoningChain chain;
            chain.id = frame.node->id;
            for (size_t i = 1; i < frame.path.size(); ++i) {
                chain.steps.push_back(ReasoningStep{static_cast<int>(i), frame.path[i]->thought,
                                                    frame.path[i]->persona});
            }
            chain.length = static_cast<int>(chain.steps.size());
            chains.push_back(std::move(chain));
            continue;
        }
        // Push in reverse so chains come out in child order.
        for (auto it = kept_children.rbegin(); it != kept_children.rend(); ++it) {
            Frame next;
            next.node = *it;
            next.path = frame.path;
            next.path.push_back(*it);
            stack.push_back(std::move(next));
        }
    }
    return chains;
}

}  // namespace calign
