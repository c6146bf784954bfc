#include "d4d/network.hpp"

#include <cmath>
#include <unordered_map>

#include "d4d/error.hpp"

namespace d4d {

Network::Network(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  validate_spec_fields(spec_);
  // Assign default names first so `from` can reference them.
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (spec_.layers[i].name.empty())
      spec_.layers[i].name = default_layer_name(spec_.layers[i].kind, i);
  }
  std::unordered_map<std::string, int> node_of;  // >= 0 layer, < 0 graph input
  for (std::size_t k = 0; k < spec_.inputs.size(); ++k) {
    if (spec_.inputs[k].name.empty())
      throw Error("graph input " + std::to_string(k) + " needs a name");
    node_of[spec_.inputs[k].name] = -1 - static_cast<int>(k);
  }

  const Rng init_root = Rng(seed_).child("init");
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& ls = spec_.layers[i];
    std::vector<int> prods;
    if (ls.from.empty()) {
      prods.push_back(i == 0 ? -1 : static_cast<int>(i) - 1);
    } else {
      for (const std::string& ref : ls.from) {
        auto it = node_of.find(ref);
        if (it == node_of.end())
          throw Error("layer " + std::to_string(i) + " (" + ls.name +
                      "): unknown producer '" + ref + "'");
        if (it->second >= static_cast<int>(i))
          throw Error("layer " + std::to_string(i) + " (" + ls.name +
                      "): producer '" + ref + "' is not earlier in the layer list");
        prods.push_back(it->second);
      }
    }
    std::vector<std::vector<std::size_t>> in_shapes;
    for (int p : prods) {
      in_shapes.push_back(p >= 0 ? layers_[p]->out_shape() : spec_.inputs[-1 - p].shape);
    }
    try {
      layers_.push_back(make_layer(ls, std::move(in_shapes)));
    } catch (const Error& e) {
      throw Error("layer " + std::to_string(i) + ": " + e.what());
    }
    producers_.push_back(std::move(prods));
    RngStream s = init_root.child(i).stream();
    layers_.back()->init_params(s);
    node_of[ls.name] = static_cast<int>(i);
  }
  if (layers_.empty()) throw Error("model spec has no layers");
  acts_.resize(layers_.size());
}

const std::vector<Tensor>& Network::forward(const std::vector<Tensor>& inputs, bool training,
                                            const Rng& rng_node) {
  if (inputs.size() != spec_.inputs.size())
    throw Error("forward: expected " + std::to_string(spec_.inputs.size()) + " inputs, got " +
                std::to_string(inputs.size()));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& t = inputs[k];
    if (t.shape.empty() || t.shape[0] == 0) throw Error("forward: empty batch");
    const std::size_t row = t.row_size();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if (!std::isfinite(t[i]))
        throw Error("forward: non-finite value in input '" + spec_.inputs[k].name +
                    "' at batch index " + std::to_string(i / row));
    }
    std::vector<std::size_t> sample(t.shape.begin() + 1, t.shape.end());
    if (sample != spec_.inputs[k].shape)
      throw Error("forward: input '" + spec_.inputs[k].name + "' shape " +
                  shape_to_string(sample) + " does not match spec " +
                  shape_to_string(spec_.inputs[k].shape));
  }
  graph_inputs_ = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::vector<const Tensor*> in;
    for (int p : producers_[i]) {
      in.push_back(p >= 0 ? &acts_[p] : &graph_inputs_[-1 - p]);
    }
    RngStream drop = rng_node.child("dropout").child(i).stream();
    acts_[i] = layers_[i]->forward(in, training, &drop);
  }
  return acts_;
}

void Network::backward(const Tensor& dloss_dout) {
  std::vector<Tensor> gout(layers_.size());
  gout.back() = dloss_dout;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (gout[i].data.empty()) continue;  // no consumer contributed
    std::vector<Tensor> dins = layers_[i]->backward(gout[i]);
    for (std::size_t k = 0; k < producers_[i].size(); ++k) {
      const int p = producers_[i][k];
      if (p < 0) continue;
      if (gout[p].data.empty()) {
        gout[p] = std::move(dins[k]);
      } else {
        for (std::size_t j = 0; j < gout[p].numel(); ++j) gout[p][j] += dins[k][j];
      }
    }
  }
}

void Network::zero_grads() {
  for (auto& l : layers_) l->zero_grads();
}

std::vector<ParamBlock*> Network::trainable_params() {
  std::vector<ParamBlock*> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) {
      if (p.trainable) out.push_back(&p);
    }
  }
  return out;
}

std::vector<ParamBlock*> Network::all_param_blocks() {
  std::vector<ParamBlock*> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

std::vector<const ParamBlock*> Network::all_param_blocks() const {
  std::vector<const ParamBlock*> out;
  for (const auto& l : layers_) {
    for (const auto& p : l->params()) out.push_back(&p);
  }
  return out;
}

Network build_model(const ModelSpec& spec, std::uint64_t seed) { return Network(spec, seed); }

}  // namespace d4d
