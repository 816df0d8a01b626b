#pragma once

// Network parameter files: a versioned magic line, a JSON shape header, then
// the raw parameter doubles.

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pathmv/nn.hpp"

namespace pathmv {

inline constexpr const char* kNetMagic = "pathmv-net v1";

inline void save_network(const Network& net, const std::string& file) {
  nlohmann::json header;
  header["hidden"] = net.config().hidden;
  header["widths"] = net.config().widths;
  header["t_scale"] = net.config().t_scale;
  header["x_center"] = net.config().x_center;
  header["x_scale"] = net.config().x_scale;
  header["count"] = net.param_count();

  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("save_network: cannot open " + file);
  out << kNetMagic << '\n' << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(net.theta.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(net.param_count())));
  if (!out) throw std::runtime_error("save_network: write failed for " + file);
}

inline Network load_network(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("load_network: cannot open " + file);
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kNetMagic)
    throw std::runtime_error("load_network: " + file + " is not a network file (bad magic)");
  std::getline(in, header_line);
  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  if (header.is_discarded()) throw std::runtime_error("load_network: corrupt header in " + file);

  NetConfig cfg;
  cfg.hidden = header.at("hidden").get<int>();
  cfg.widths = header.at("widths").get<std::vector<int>>();
  cfg.t_scale = header.at("t_scale").get<double>();
  cfg.x_center = header.at("x_center").get<double>();
  cfg.x_scale = header.at("x_scale").get<double>();

  Network net(cfg);
  if (header.at("count").get<Eigen::Index>() != net.param_count())
    throw std::runtime_error("load_network: header count disagrees with shape in " + file);
  in.read(reinterpret_cast<char*>(net.theta.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(net.param_count())));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(net.param_count())))
    throw std::runtime_error("load_network: truncated parameter block in " + file);
  return net;
}

}  // namespace pathmv
