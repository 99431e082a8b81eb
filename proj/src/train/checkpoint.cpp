#include <cstdio>
#include <fstream>

#include "hep/archive.hpp"
#include "hep/error.hpp"
#include "hep/train.hpp"

namespace hep::train {
namespace {

std::uint64_t parse_hash(const std::string& s) {
  try {
    return std::stoull(s, nullptr, 16);
  } catch (const std::exception&) {
    throw CheckpointMismatchError("bad architecture hash '" + s + "'");
  }
}

NamedTensors with_moments(const nn::ParameterSet& params, const nn::Adam* adam) {
  NamedTensors out = params.snapshot();
  if (adam) {
    for (auto& e : adam->state()) out.push_back(std::move(e));
  }
  return out;
}

void check_hash(const CheckpointInfo& info, std::uint64_t actual, const Path& dir) {
  if (info.architecture_hash != actual) {
    throw CheckpointMismatchError("checkpoint " + dir.string() + " has architecture " +
                                  hash_hex(info.architecture_hash) + ", current configuration is " +
                                  hash_hex(actual));
  }
}

}  // namespace

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json CheckpointInfo::to_json() const {
  return {{"kind", kind},
          {"architecture_hash", hash_hex(architecture_hash)},
          {"seed", seed},
          {"epoch", epoch},
          {"step", step},
          {"lr", lr},
          {"initial_loss", initial_loss},
          {"config", config}};
}

CheckpointInfo CheckpointInfo::from_json(const Json& j) {
  CheckpointInfo c;
  try {
    c.kind = j.at("kind").get<std::string>();
    c.architecture_hash = parse_hash(j.at("architecture_hash").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<int>();
    c.step = j.at("step").get<long long>();
    c.lr = j.at("lr").get<double>();
    c.initial_loss = j.value("initial_loss", 0.0);
    c.config = j.value("config", Json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatchError(std::string("malformed checkpoint sidecar: ") + e.what());
  }
  return c;
}

CheckpointInfo CheckpointInfo::read(const Path& dir, const std::string& kind) {
  const Path file = dir / (kind + ".json");
  std::ifstream in(file);
  if (!in) throw UnreadableFileError("no checkpoint sidecar at " + file.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatchError("unreadable sidecar " + file.string() + ": " + e.what());
  }
  CheckpointInfo c = from_json(j);
  if (c.kind != kind) throw CheckpointMismatchError(file.string() + " is a " + c.kind + " checkpoint");
  return c;
}

void save_lum_checkpoint(const Path& dir, const lum::LumNetwork& net, const nn::Adam* adam,
                         const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  save_archive(dir / "lum.params", with_moments(net.parameters(), adam));
  std::ofstream out(dir / "lum.json");
  out << info.to_json().dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "lum.json").string());
}

std::unique_ptr<lum::LumNetwork> load_lum_network(const Path& dir) {
  const CheckpointInfo info = CheckpointInfo::read(dir, "lum");
  const TrainConfig cfg = train_config_from_json(info.config);
  auto net = std::make_unique<lum::LumNetwork>(cfg.lum.net);
  check_hash(info, net->architecture_hash(), dir);
  net->parameters().restore(load_archive(dir / "lum.params"));
  return net;
}

void save_ndm_checkpoint(const Path& dir, const ndm::NdmNetworks& nets,
                         const std::vector<nn::Adam>* opts, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  const auto sets = nets.parameter_sets();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    save_archive(dir / ("ndm_" + sets[i].first + ".params"),
                 with_moments(*sets[i].second, opts ? &(*opts)[i] : nullptr));
  }
  Json j = info.to_json();
  const auto& c = nets.config();
  j["noise_dim"] = c.noise_dim;
  j["update_ratio"] = "1:1";
  if (info.config.contains("ndm")) {
    j["label_fake"] = info.config["ndm"]["loss"]["label_fake"];
    j["label_real"] = info.config["ndm"]["loss"]["label_real"];
  }
  std::ofstream out(dir / "ndm.json");
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "ndm.json").string());
}

std::unique_ptr<ndm::NdmNetworks> load_ndm_networks(const Path& dir) {
  const CheckpointInfo info = CheckpointInfo::read(dir, "ndm");
  const TrainConfig cfg = train_config_from_json(info.config);
  auto nets = std::make_unique<ndm::NdmNetworks>(cfg.ndm.net);
  check_hash(info, nets->architecture_hash(), dir);
  for (auto& [name, params] : nets->parameter_sets()) params->restore(load_archive(dir / ("ndm_" + name + ".params")));
  return nets;
}

}  // namespace hep::train
