#pragma once

// Checkpoint directory layout:
//   config.txt   flat key = value model/training config
//   model.index  "# video_dim <n> query_dim <n>" then one "name rows cols" per array
//   model.bin    the arrays, in index order, each in the binary array format

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bpnet/array_io.hpp"
#include "bpnet/model.hpp"

namespace bpnet {

inline void save_checkpoint(const std::string& dir, const Model& model) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "config.txt");
    require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + dir + "/config.txt");
    os << format_config(model.config());
  }
  std::ofstream index(fs::path(dir) / "model.index");
  std::ofstream bin(fs::path(dir) / "model.bin", std::ios::binary);
  require(index && bin, ErrorCode::kIo, "cannot write checkpoint in " + dir);
  index << "# video_dim " << model.video_dim() << " query_dim " << model.query_dim() << '\n';
  for (const auto& e : model.parameters().entries()) {
    index << e.name << ' ' << e.var.rows() << ' ' << e.var.cols() << '\n';
    write_array(bin, e.var.value().cast<float>());
  }
  require(index && bin, ErrorCode::kIo, "checkpoint write failed in " + dir);
}

inline Model load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), ErrorCode::kIo, "checkpoint directory not found: " + dir);
  const Config cfg = load_config((fs::path(dir) / "config.txt").string());
  std::ifstream index(fs::path(dir) / "model.index");
  std::ifstream bin(fs::path(dir) / "model.bin", std::ios::binary);
  require(index && bin, ErrorCode::kIo, "missing model.index or model.bin in " + dir);

  std::string line;
  std::getline(index, line);
  std::istringstream header(line);
  std::string hash, k1, k2;
  Index video_dim = 0, query_dim = 0;
  header >> hash >> k1 >> video_dim >> k2 >> query_dim;
  require(hash == "#" && k1 == "video_dim" && k2 == "query_dim", ErrorCode::kIo,
          "malformed model.index header");

  Model model(cfg, video_dim, query_dim);
  auto& entries = model.parameters().entries();
  std::size_t n = 0;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    Index rows = 0, cols = 0;
    ss >> name >> rows >> cols;
    require(n < entries.size() && entries[n].name == name, ErrorCode::kIo,
            "checkpoint parameter '" + name + "' does not match the model layout");
    const FloatMatrix values = read_array(bin, name);
    require(values.rows() == rows && values.cols() == cols && rows == entries[n].var.rows() &&
                cols == entries[n].var.cols(),
            ErrorCode::kIo, "checkpoint shape mismatch for " + name);
    entries[n].var.mutable_value() = values.cast<double>();
    ++n;
  }
  require(n == entries.size(), ErrorCode::kIo, "checkpoint is missing parameters");
  return model;
}

}  // namespace bpnet
