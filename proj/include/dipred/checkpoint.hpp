#pragma once

// Checkpoint file: a text header followed by DITF tensor blobs.
//
//   DIPRED-CKPT 1
//   meta <key> <value>
//   tensor <name> <rank> <d0> <d1> ...
//   end
//   <DITF blob per tensor line, in order>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dipred/numerics/ditf.hpp"
#include "dipred/numerics/tensor.hpp"

namespace dipred {

template <typename T>
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  void add(std::string name, Tensor<T> t) {
    names.push_back(std::move(name));
    tensors.push_back(std::move(t));
  }

  const Tensor<T>& get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return tensors[i];
    throw Error("checkpoint has no tensor " + name);
  }

  bool has(const std::string& name) const {
    for (const auto& n : names)
      if (n == name) return true;
    return false;
  }

  const std::string& meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw Error("checkpoint has no meta key " + key);
    return it->second;
  }
};

namespace detail {

inline void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\n\r") != std::string::npos)
    throw Error(std::string("checkpoint ") + what + " must be a non-empty token without spaces: '" + s + "'");
}

}  // namespace detail

// Writes to `path` via a temporary file and rename, so readers never see a partial file.
template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + tmp);
    os << "DIPRED-CKPT 1\n";
    for (const auto& [k, v] : ckpt.meta) {
      detail::check_token(k, "meta key");
      detail::check_token(v, "meta value");
      os << "meta " << k << ' ' << v << '\n';
    }
    for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
      detail::check_token(ckpt.names[i], "tensor name");
      os << "tensor " << ckpt.names[i] << ' ' << ckpt.tensors[i].rank();
      for (auto e : ckpt.tensors[i].shape()) os << ' ' << e;
      os << '\n';
    }
    os << "end\n";
    for (const auto& t : ckpt.tensors) ditf::write(os, t);
    os.flush();
    if (!os) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(is, line) || line != "DIPRED-CKPT 1") throw Error("not a checkpoint file: " + path);
  Checkpoint<T> ckpt;
  std::vector<Shape> shapes;
  for (;;) {
    if (!std::getline(is, line)) throw Error("truncated checkpoint header: " + path);
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string k, v;
      if (!(ls >> k >> v)) throw Error("malformed meta line in " + path);
      ckpt.meta[k] = v;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      if (!(ls >> name >> rank)) throw Error("malformed tensor line in " + path);
      Shape s(rank);
      for (auto& e : s)
        if (!(ls >> e)) throw Error("malformed tensor shape in " + path);
      ckpt.names.push_back(name);
      shapes.push_back(std::move(s));
    } else {
      throw Error("unknown checkpoint header line '" + line + "' in " + path);
    }
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    auto t = ditf::read<T>(is);
    if (t.shape() != shapes[i])
      throw ShapeError("checkpoint tensor " + ckpt.names[i] + " has shape " + shape_str(t.shape()) +
                       ", header says " + shape_str(shapes[i]));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace dipred
