#pragma once

#include <map>
#include <string>
#include <vector>

#include "d4d/model_spec.hpp"

namespace d4d {

// Static computation-graph document: one node per layer, plus one node per
// fused activation (a `linear` activation exports an explicit Identity node;
// `none` exports nothing). Node order is topological by construction.
struct GraphNode {
  std::vector<std::string> input;
  std::string name;
  std::string op_type;
  std::vector<std::string> output;
  bool operator==(const GraphNode&) const = default;
};

struct GraphDoc {
  std::vector<GraphNode> nodes;
  bool operator==(const GraphDoc&) const = default;
};

GraphDoc export_graph(const ModelSpec& spec);

// Deterministic JSON: {"nodes":[{"input":[...],"name":...,"opType":...,"output":[...]},...]}
std::string graph_to_json(const GraphDoc& doc);
GraphDoc graph_from_json(const std::string& text);

// Flattened (input, name, opType, output) token stream, node by node.
std::vector<std::string> token_stream(const GraphDoc& doc);

// Token ids: 0 is padding, 1 the out-of-vocabulary id, real tokens from 2,
// enumerated in first-occurrence order over the fitting corpus.
class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kOovId = 1;

  int add(const std::string& token);           // returns existing or new id
  int id_of(const std::string& token) const;   // kOovId when unseen
  std::size_t size() const { return ids_.size(); }
  const std::map<std::string, int>& mapping() const { return ids_; }

  std::string to_json() const;
  static Vocab from_json(const std::string& text);
  std::uint64_t hash() const;

 private:
  std::map<std::string, int> ids_;
  int next_id_ = 2;
};

Vocab fit_vocabulary(const std::vector<GraphDoc>& corpus);

// Encode through the vocab and right-pad with zeros to length S. A stream
// longer than S is an error naming the required size.
std::vector<int> encode_and_pad(const GraphDoc& doc, const Vocab& vocab, int s);

}  // namespace d4d
