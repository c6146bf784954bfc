#include <doctest.h>

#include <map>

#include "d4d/error.hpp"
#include "d4d/graph_export.hpp"

using namespace d4d;

namespace {

ModelSpec chain_spec() {
  ModelSpec spec;
  spec.inputs = {{"input", {4}}};
  LayerSpec d1;
  d1.kind = LayerKind::Dense;
  d1.units = 3;
  d1.activation = ActivationKind::None;
  LayerSpec d2 = d1;
  d2.units = 2;
  spec.layers = {d1, d2};
  return spec;
}

ModelSpec listing_style_spec() {
  ModelSpec spec;
  spec.inputs = {{"input", {8, 8, 1}}};
  LayerSpec c1;
  c1.kind = LayerKind::Conv2D;
  c1.filters = 8;
  c1.kernel = {3, 3};
  c1.activation = ActivationKind::Relu;
  LayerSpec p;
  p.kind = LayerKind::MaxPool2D;
  p.pool = {2, 2};
  LayerSpec c2 = c1;
  c2.filters = 16;
  c2.kernel = {2, 2};
  LayerSpec f;
  f.kind = LayerKind::Flatten;
  LayerSpec dr;
  dr.kind = LayerKind::Dropout;
  dr.rate = 0.5;
  LayerSpec d;
  d.kind = LayerKind::Dense;
  d.units = 10;
  d.activation = ActivationKind::Softmax;
  spec.layers = {c1, p, c2, p, f, dr, d};
  return spec;
}

bool contains_subsequence(const std::vector<std::string>& haystack,
                          const std::vector<std::string>& needle) {
  std::size_t i = 0;
  for (const std::string& s : haystack) {
    if (i < needle.size() && s == needle[i]) ++i;
  }
  return i == needle.size();
}

}  // namespace

TEST_CASE("chained nodes reference the previous output") {
  const GraphDoc doc = export_graph(chain_spec());
  REQUIRE(doc.nodes.size() == 2);
  CHECK(doc.nodes[0].input == std::vector<std::string>{"x"});
  CHECK(doc.nodes[1].input == doc.nodes[0].output);
  CHECK(doc.nodes[0].name == "dense_0");
  CHECK(doc.nodes[0].op_type == "Gemm");
}

TEST_CASE("conv-pool classifier exports the expected op sequence") {
  const GraphDoc doc = export_graph(listing_style_spec());
  std::vector<std::string> ops;
  for (const auto& n : doc.nodes) ops.push_back(n.op_type);
  CHECK(contains_subsequence(
      ops, {"Conv", "MaxPool", "Conv", "MaxPool", "Flatten", "Dropout", "Gemm", "Softmax"}));
}

TEST_CASE("export is deterministic") {
  const std::string a = graph_to_json(export_graph(listing_style_spec()));
  const std::string b = graph_to_json(export_graph(listing_style_spec()));
  CHECK(a == b);
}

TEST_CASE("graph json round-trips") {
  const GraphDoc doc = export_graph(listing_style_spec());
  const GraphDoc back = graph_from_json(graph_to_json(doc));
  CHECK(back == doc);
}

TEST_CASE("activation none versus linear differ in the exported graph") {
  ModelSpec none_spec = chain_spec();
  ModelSpec linear_spec = chain_spec();
  linear_spec.layers[0].activation = ActivationKind::Linear;
  const GraphDoc g_none = export_graph(none_spec);
  const GraphDoc g_linear = export_graph(linear_spec);
  CHECK(g_linear.nodes.size() == g_none.nodes.size() + 1);
  CHECK(g_linear.nodes[1].op_type == "Identity");
}

TEST_CASE("vocabulary assigns first-occurrence ids from 2, oov is 1") {
  GraphDoc doc;
  doc.nodes.push_back({{"a"}, "b", "a", {"c"}});
  const Vocab v = fit_vocabulary({doc});
  CHECK(v.id_of("a") == 2);
  CHECK(v.id_of("b") == 3);
  CHECK(v.id_of("c") == 4);
  CHECK(v.id_of("unseen") == Vocab::kOovId);
  CHECK(v.size() == 3);
  CHECK_THROWS_AS(fit_vocabulary({}), Error);
}

TEST_CASE("vocabulary fitting is order-deterministic") {
  const GraphDoc d1 = export_graph(chain_spec());
  const GraphDoc d2 = export_graph(listing_style_spec());
  const Vocab a = fit_vocabulary({d1, d2});
  const Vocab b = fit_vocabulary({d1, d2});
  CHECK(a.mapping() == b.mapping());
  CHECK(a.hash() == b.hash());
  const Vocab c = fit_vocabulary({d2, d1});
  CHECK(c.hash() != a.hash());  // ids depend on document order
}

TEST_CASE("encode_and_pad pads with zeros and rejects overflow") {
  GraphDoc doc;
  doc.nodes.push_back({{"a"}, "n", "Op", {"o"}});
  const Vocab v = fit_vocabulary({doc});
  const auto ids = encode_and_pad(doc, v, 6);
  REQUIRE(ids.size() == 6);
  CHECK(ids[0] == 2);
  CHECK(ids[3] == 5);
  CHECK(ids[4] == 0);
  CHECK(ids[5] == 0);
  // exact length passes unchanged
  const auto exact = encode_and_pad(doc, v, 4);
  CHECK(exact == std::vector<int>{2, 3, 4, 5});
  // one too small names the required size
  try {
    encode_and_pad(doc, v, 3);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
}

TEST_CASE("round trip through the vocab recovers the token stream") {
  const GraphDoc doc = export_graph(listing_style_spec());
  const Vocab v = fit_vocabulary({doc});
  const auto toks = token_stream(doc);
  const auto ids = encode_and_pad(doc, v, static_cast<int>(toks.size()) + 5);
  // invert the mapping
  std::map<int, std::string> inverse;
  for (const auto& [tok, id] : v.mapping()) inverse[id] = tok;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    CHECK(inverse.at(ids[i]) == toks[i]);
  }
  // padding appears only as a suffix
  bool in_pad = false;
  for (int id : ids) {
    if (id == 0) in_pad = true;
    if (in_pad) CHECK(id == 0);
  }
}

TEST_CASE("vocab json round-trips") {
  GraphDoc doc;
  doc.nodes.push_back({{"x"}, "dense_0", "Gemm", {"h0"}});
  const Vocab v = fit_vocabulary({doc});
  const Vocab back = Vocab::from_json(v.to_json());
  CHECK(back.mapping() == v.mapping());
  CHECK(back.hash() == v.hash());
}
