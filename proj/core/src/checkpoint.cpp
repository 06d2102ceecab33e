#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bae/nn.hpp"

namespace bae::nn {

namespace {

using nlohmann::json;

json spec_to_json(const NetworkSpec& spec) {
  json out = json::object();
  for (Block b : kBlocks) {
    json layers = json::array();
    for (const LayerSpec& l : spec.block(b))
      layers.push_back({{"kind", to_string(l.kind)}, {"in", l.in}, {"out", l.out}, {"activation", to_string(l.activation)}});
    out[to_string(b)] = std::move(layers);
  }
  return out;
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  for (Block b : kBlocks) {
    if (!j.contains(to_string(b))) continue;
    for (const json& l : j.at(to_string(b))) {
      LayerSpec ls;
      ls.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      ls.in = l.at("in").get<int>();
      ls.out = l.at("out").get<int>();
      ls.activation = activation_from_string(l.value("activation", std::string("linear")));
      spec.block(b).push_back(ls);
    }
  }
  spec.validate();
  return spec;
}

}  // namespace

std::string checkpoint_to_string(const NetworkParams& params) {
  NetworkParams& p = const_cast<NetworkParams&>(params);
  json tensors = json::object();
  auto put = [&](const TensorView& t) {
    tensors[t.key()] = {{"shape", {t.rows, t.cols}}, {"data", std::vector<double>(t.data, t.data + t.size())}};
  };
  for (const auto& t : trainable(p)) put(t);
  for (const auto& t : statistics(p)) put(t);
  json frozen = json::object();
  for (Block b : kBlocks) frozen[to_string(b)] = params.is_frozen(b);
  const json doc = {{"format", "bae-checkpoint"},
                    {"version", kCheckpointVersion},
                    {"spec", spec_to_json(params.spec)},
                    {"frozen", frozen},
                    {"tensors", tensors}};
  return doc.dump();
}

NetworkParams checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("checkpoint: ") + e.what());
  }
  try {
    require(doc.value("format", std::string()) == "bae-checkpoint", ErrorKind::io, "checkpoint: not a bae checkpoint");
    const int version = doc.at("version").get<int>();
    require(version == kCheckpointVersion, ErrorKind::io,
            "checkpoint: unsupported version " + std::to_string(version));
    Rng unused(0);
    NetworkParams p = init(spec_from_json(doc.at("spec")), unused);
    for (Block b : kBlocks) p.set_frozen(b, doc.at("frozen").value(to_string(b), false));
    const json& tensors = doc.at("tensors");
    auto fill = [&](const TensorView& t) {
      require(tensors.contains(t.key()), ErrorKind::io, "checkpoint: missing tensor " + t.key());
      const json& entry = tensors.at(t.key());
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      require(shape.size() == 2 && shape[0] == t.rows && shape[1] == t.cols, ErrorKind::shape,
              "checkpoint: tensor " + t.key() + " has the wrong shape");
      const auto data = entry.at("data").get<std::vector<double>>();
      require(static_cast<Eigen::Index>(data.size()) == t.size(), ErrorKind::shape,
              "checkpoint: tensor " + t.key() + " has the wrong length");
      std::copy(data.begin(), data.end(), t.data);
    };
    for (const auto& t : trainable(p)) fill(t);
    for (const auto& t : statistics(p)) fill(t);
    return p;
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const NetworkParams& params, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "checkpoint: cannot write " + path);
  out << checkpoint_to_string(params) << '\n';
  require(static_cast<bool>(out), ErrorKind::io, "checkpoint: write failed for " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "checkpoint: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace bae::nn
