#include "tbqn/nn.h"

#include <cstring>
#include <fstream>
#include <sstream>

namespace tbqn {

namespace {
constexpr const char* kMagic = "TBQNCKPT 1";
}

void save_checkpoint(const std::string& path, const std::string& meta,
                     const std::vector<std::pair<std::string, const TensorT<float>*>>& tensors) {
  if (meta.find('\n') != std::string::npos)
    throw ContractError("save_checkpoint: meta must be a single line");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "' for writing");
  out << kMagic << "\n";
  out << "META " << meta << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (name.find_first_of(" \n") != std::string::npos)
      throw ContractError("save_checkpoint: tensor name '" + name + "' contains whitespace");
    out << "TENSOR " << name << " f32 ";
    const Shape& s = t->shape();
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "x" : "") << s[i];
    out << " " << offset << " " << t->data().size() << "\n";
    offset += t->data().size();
  }
  out << "PAYLOAD\n";
  for (const auto& [name, t] : tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t->data().data()),
              static_cast<std::streamsize>(t->data().size() * sizeof(float)));
  }
  if (!out) throw IoError("save_checkpoint: write failed on '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw IoError("load_checkpoint: '" + path + "' is not a checkpoint file (bad header)");
  Checkpoint ck;
  std::size_t total = 0;
  while (std::getline(in, line)) {
    if (line == "PAYLOAD") break;
    if (line.rfind("META ", 0) == 0) {
      ck.meta = line.substr(5);
      continue;
    }
    if (line.rfind("TENSOR ", 0) != 0)
      throw IoError("load_checkpoint: unexpected manifest line: " + line);
    std::istringstream ls(line.substr(7));
    CheckpointEntry e;
    std::string dims, dtype;
    if (!(ls >> e.name >> dtype >> dims >> e.offset >> e.count) || dtype != "f32")
      throw IoError("load_checkpoint: malformed TENSOR line: " + line);
    std::size_t start = 0;
    while (start < dims.size()) {
      std::size_t x = dims.find('x', start);
      std::string part = dims.substr(start, x == std::string::npos ? std::string::npos : x - start);
      e.shape.push_back(std::stoi(part));
      if (x == std::string::npos) break;
      start = x + 1;
    }
    if (shape_numel(e.shape) != static_cast<long long>(e.count))
      throw IoError("load_checkpoint: shape/count mismatch for tensor '" + e.name + "'");
    total = e.offset + e.count;
    ck.entries.push_back(std::move(e));
  }
  if (line != "PAYLOAD") throw IoError("load_checkpoint: missing PAYLOAD section in '" + path + "'");
  ck.payload.resize(total);
  in.read(reinterpret_cast<char*>(ck.payload.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(total * sizeof(float)))
    throw IoError("load_checkpoint: truncated payload in '" + path + "'");
  return ck;
}

}  // namespace tbqn
