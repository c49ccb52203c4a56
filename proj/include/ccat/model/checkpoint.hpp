#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/io/container.hpp"
#include "ccat/model/network.hpp"

namespace ccat::model {

template <class T>
io::Container to_container(const Network<T>& net) {
  io::Container c;
  c.config = {{"model", to_json(net.config())},
              {"feature", to_json(net.feature_config())},
              {"f_in", net.dims().f_in}};
  for (const auto& p : net.parameters()) {
    std::vector<float> v(p.value.begin(), p.value.end());
    std::vector<std::uint32_t> dims(p.shape.begin(), p.shape.end());
    c.tensors.push_back(io::NamedArray::from_f32(p.name, std::move(dims), v));
  }
  return c;
}

inline Network<float> from_container(const io::Container& c) {
  Network<float> net;
  try {
    const auto mc = model_config_from_json(c.config.at("model"));
    const auto fc = feature_config_from_json(c.config.at("feature"));
    net = Network<float>::build(mc, c.config.at("f_in").get<int>(), 0, fc);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("checkpoint config: ") + e.what());
  }
  if (c.tensors.size() != net.parameters().size())
    throw CorruptCheckpoint("checkpoint holds " + std::to_string(c.tensors.size()) + " tensors, config implies " +
                            std::to_string(net.parameters().size()));
  for (auto& p : net.parameters()) {
    const auto* t = c.find(p.name);
    if (t == nullptr) throw CorruptCheckpoint("missing tensor '" + p.name + "'");
    if (t->dtype != io::DType::kF32 || std::vector<int>(t->dims.begin(), t->dims.end()) != p.shape)
      throw CorruptCheckpoint("tensor '" + p.name + "' has shape inconsistent with config");
    p.value = t->as_f32();
  }
  return net;
}

template <class T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path) {
  io::write_file(path, to_container(net));
}

inline Network<float> load_checkpoint(const std::filesystem::path& path) {
  return from_container(io::read_file(path));
}

}  // namespace ccat::model
