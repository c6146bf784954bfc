#include "d4d/graph_export.hpp"

#include <json.hpp>

#include "d4d/error.hpp"

using nlohmann::json;

namespace d4d {

namespace {

std::string op_type_for(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "Gemm";
    case LayerKind::Conv2D: return "Conv";
    case LayerKind::MaxPool2D: return "MaxPool";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::BatchNorm: return "BatchNormalization";
    case LayerKind::Embedding: return "Gather";
    case LayerKind::Lstm: return "LSTM";
    case LayerKind::Concatenate: return "Concat";
    case LayerKind::RepeatVector: return "RepeatVector";
    case LayerKind::TimeDistributedDense: return "Gemm";
    case LayerKind::Activation: return "";  // taken from the activation itself
  }
  throw Error("unknown layer kind");
}

std::string op_type_for(ActivationKind a) {
  switch (a) {
    case ActivationKind::Linear: return "Identity";
    case ActivationKind::Relu: return "Relu";
    case ActivationKind::Sigmoid: return "Sigmoid";
    case ActivationKind::Tanh: return "Tanh";
    case ActivationKind::Softmax: return "Softmax";
    case ActivationKind::None: return "";
  }
  throw Error("unknown activation");
}

}  // namespace

GraphDoc export_graph(const ModelSpec& spec) {
  validate_spec_fields(spec);
  GraphDoc doc;
  // producer name -> current output tensor name
  std::map<std::string, std::string> out_of;
  std::string first_input;
  for (std::size_t k = 0; k < spec.inputs.size(); ++k) {
    const std::string& nm = spec.inputs[k].name.empty() ? "x" : spec.inputs[k].name;
    out_of[nm] = spec.inputs.size() == 1 ? "x" : nm;
    if (k == 0) first_input = nm;
  }
  std::size_t tensor_counter = 0;
  std::string prev_node;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string lname = l.name.empty() ? default_layer_name(l.kind, i) : l.name;
    GraphNode node;
    if (l.from.empty()) {
      if (i == 0) {
        node.input.push_back(out_of.at(first_input));
      } else {
        node.input.push_back(out_of.at(prev_node));
      }
    } else {
      for (const std::string& ref : l.from) {
        auto it = out_of.find(ref);
        if (it == out_of.end()) throw Error("export_graph: unknown producer '" + ref + "'");
        node.input.push_back(it->second);
      }
    }
    node.name = lname;
    const std::string layer_op = op_type_for(l.kind);
    const bool standalone_act = l.kind == LayerKind::Activation;
    node.op_type = standalone_act ? op_type_for(l.activation) : layer_op;
    if (node.op_type.empty()) node.op_type = "Identity";
    node.output.push_back("h" + std::to_string(tensor_counter++));
    doc.nodes.push_back(node);

    // fused activation becomes a follow-up node
    if (!standalone_act && l.activation != ActivationKind::None) {
      GraphNode act;
      act.input.push_back(doc.nodes.back().output[0]);
      act.name = lname + "_act";
      act.op_type = op_type_for(l.activation);
      act.output.push_back("h" + std::to_string(tensor_counter++));
      doc.nodes.push_back(act);
    }
    out_of[lname] = doc.nodes.back().output[0];
    prev_node = lname;
  }
  return doc;
}

std::string graph_to_json(const GraphDoc& doc) {
  json nodes = json::array();
  for (const GraphNode& n : doc.nodes) {
    json jn;
    jn["input"] = n.input;
    jn["name"] = n.name;
    jn["opType"] = n.op_type;
    jn["output"] = n.output;
    nodes.push_back(std::move(jn));
  }
  json j;
  j["nodes"] = std::move(nodes);
  return j.dump(2);
}

GraphDoc graph_from_json(const std::string& text) {
  json j = json::parse(text);
  GraphDoc doc;
  for (const auto& jn : j.at("nodes")) {
    GraphNode n;
    n.input = jn.at("input").get<std::vector<std::string>>();
    n.name = jn.at("name").get<std::string>();
    n.op_type = jn.at("opType").get<std::string>();
    n.output = jn.at("output").get<std::vector<std::string>>();
    doc.nodes.push_back(std::move(n));
  }
  return doc;
}

std::vector<std::string> token_stream(const GraphDoc& doc) {
  std::vector<std::string> toks;
  for (const GraphNode& n : doc.nodes) {
    for (const auto& s : n.input) toks.push_back(s);
    toks.push_back(n.name);
    toks.push_back(n.op_type);
    for (const auto& s : n.output) toks.push_back(s);
  }
  return toks;
}

int Vocab::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = next_id_++;
  ids_.emplace(token, id);
  return id;
}

int Vocab::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kOovId : it->second;
}

std::string Vocab::to_json() const {
  json j;
  j["__oov__"] = kOovId;
  for (const auto& [tok, id] : ids_) j[tok] = id;
  return j.dump(2);
}

Vocab Vocab::from_json(const std::string& text) {
  json j = json::parse(text);
  Vocab v;
  int max_id = 1;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "__oov__") continue;
    const int id = it.value().get<int>();
    if (id < 2) throw Error("vocab JSON: token id " + std::to_string(id) + " below 2");
    v.ids_[it.key()] = id;
    if (id > max_id) max_id = id;
  }
  v.next_id_ = max_id + 1;
  return v;
}

std::uint64_t Vocab::hash() const {
  // FNV-1a over the sorted (token, id) pairs
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [tok, id] : ids_) {
    feed(tok.data(), tok.size());
    const std::string ids = std::to_string(id);
    feed(":", 1);
    feed(ids.data(), ids.size());
    feed(";", 1);
  }
  return h;
}

Vocab fit_vocabulary(const std::vector<GraphDoc>& corpus) {
  if (corpus.empty()) throw Error("fit_vocabulary: empty corpus");
  Vocab v;
  for (const GraphDoc& doc : corpus) {
    for (const std::string& tok : token_stream(doc)) v.add(tok);
  }
  return v;
}

std::vector<int> encode_and_pad(const GraphDoc& doc, const Vocab& vocab, int s) {
  if (s < 1) throw Error("encode_and_pad: S must be >= 1");
  const auto toks = token_stream(doc);
  if (toks.size() > static_cast<std::size_t>(s))
    throw Error("encode_and_pad: token stream length " + std::to_string(toks.size()) +
                " exceeds S=" + std::to_string(s) + "; raise S to at least " +
                std::to_string(toks.size()));
  std::vector<int> ids(static_cast<std::size_t>(s), Vocab::kPadId);
  for (std::size_t i = 0; i < toks.size(); ++i) ids[i] = vocab.id_of(toks[i]);
  return ids;
}

}  // namespace d4d
