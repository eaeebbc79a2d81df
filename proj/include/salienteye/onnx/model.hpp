#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "salienteye/detail/util.hpp"
#include "salienteye/error.hpp"
#include "salienteye/onnx/proto.hpp"

// ONNX ModelProto subset: graph structure, float32 initializers, the node
// attributes the engine understands. Field numbers follow onnx.proto3 and
// are stable across opsets.

namespace salienteye::onnx {

enum ElemType : std::int32_t { kFloat = 1, kInt64 = 7 };

struct TensorData {
  std::string name;
  std::vector<std::int64_t> dims;
  std::int32_t data_type = kFloat;
  std::vector<float> floats;        // data_type == kFloat
  std::vector<std::int64_t> ints;   // data_type == kInt64

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::int64_t d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
};

struct Attribute {
  enum Type : std::int32_t {
    kAttrFloat = 1,
    kAttrInt = 2,
    kAttrString = 3,
    kAttrTensor = 4,
    kAttrFloats = 6,
    kAttrInts = 7,
    kAttrStrings = 8,
  };
  std::string name;
  std::int32_t type = 0;
  float f = 0.f;
  std::int64_t i = 0;
  std::string s;
  std::vector<float> floats;
  std::vector<std::int64_t> ints;
};

struct Node {
  std::string name;
  std::string op_type;
  std::string domain;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<Attribute> attributes;

  const Attribute* find_attribute(std::string_view attr) const {
    for (const auto& a : attributes)
      if (a.name == attr) return &a;
    return nullptr;
  }

  std::int64_t attr_int(std::string_view attr, std::int64_t fallback) const {
    const Attribute* a = find_attribute(attr);
    return a ? a->i : fallback;
  }

  float attr_float(std::string_view attr, float fallback) const {
    const Attribute* a = find_attribute(attr);
    return a ? a->f : fallback;
  }

  std::string attr_string(std::string_view attr, std::string fallback) const {
    const Attribute* a = find_attribute(attr);
    return a ? a->s : fallback;
  }

  std::vector<std::int64_t> attr_ints(std::string_view attr,
                                      std::vector<std::int64_t> fallback) const {
    const Attribute* a = find_attribute(attr);
    return a ? a->ints : fallback;
  }
};

struct ValueInfo {
  std::string name;
  std::int32_t elem_type = kFloat;
  std::vector<std::int64_t> dims;  // -1 where dynamic
};

struct Graph {
  std::string name;
  std::vector<Node> nodes;
  std::vector<TensorData> initializers;
  std::vector<ValueInfo> inputs;
  std::vector<ValueInfo> outputs;
};

struct Model {
  std::int64_t ir_version = 7;
  std::vector<std::pair<std::string, std::int64_t>> opset_imports;  // (domain, version)
  Graph graph;

  std::optional<std::int64_t> default_opset() const {
    for (const auto& [domain, version] : opset_imports)
      if (domain.empty() || domain == "ai.onnx") return version;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline TensorData parse_tensor(std::string_view bytes) {
  TensorData t;
  std::string_view raw;
  WireReader r(bytes);
  while (!r.done()) {
    const auto f = r.next();
    switch (f.number) {
      case 1:  // dims
        if (f.wire_type == kVarint)
          t.dims.push_back(static_cast<std::int64_t>(f.varint));
        else
          for (std::int64_t v : WireReader::packed_varints(f.bytes)) t.dims.push_back(v);
        break;
      case 2: t.data_type = static_cast<std::int32_t>(f.varint); break;
      case 4:  // float_data
        if (f.wire_type == kFixed32)
          t.floats.push_back(WireReader::as_float(f));
        else
          for (float v : WireReader::packed_floats(f.bytes)) t.floats.push_back(v);
        break;
      case 7:  // int64_data
        if (f.wire_type == kVarint)
          t.ints.push_back(static_cast<std::int64_t>(f.varint));
        else
          for (std::int64_t v : WireReader::packed_varints(f.bytes)) t.ints.push_back(v);
        break;
      case 8: t.name = std::string(f.bytes); break;
      case 9: raw = f.bytes; break;
      default: break;  // segment, doc_string, external_data, ... ignored
    }
  }
  if (!raw.empty()) {
    if (t.data_type == kFloat) {
      if (raw.size() % 4 != 0) throw ModelError("tensor '" + t.name + "': bad raw_data length");
      t.floats.resize(raw.size() / 4);
      std::memcpy(t.floats.data(), raw.data(), raw.size());
    } else if (t.data_type == kInt64) {
      if (raw.size() % 8 != 0) throw ModelError("tensor '" + t.name + "': bad raw_data length");
      t.ints.resize(raw.size() / 8);
      std::memcpy(t.ints.data(), raw.data(), raw.size());
    } else {
      throw ModelError("tensor '" + t.name + "': unsupported data_type " +
                       std::to_string(t.data_type));
    }
  }
  return t;
}

inline Attribute parse_attribute(std::string_view bytes) {
  Attribute a;
  WireReader r(bytes);
  while (!r.done()) {
    const auto f = r.next();
    switch (f.number) {
      case 1: a.name = std::string(f.bytes); break;
      case 2: a.f = WireReader::as_float(f); break;
      case 3: a.i = static_cast<std::int64_t>(f.varint); break;
      case 4: a.s = std::string(f.bytes); break;
      case 7:  // floats
        if (f.wire_type == kFixed32)
          a.floats.push_back(WireReader::as_float(f));
        else
          for (float v : WireReader::packed_floats(f.bytes)) a.floats.push_back(v);
        break;
      case 8:  // ints
        if (f.wire_type == kVarint)
          a.ints.push_back(static_cast<std::int64_t>(f.varint));
        else
          for (std::int64_t v : WireReader::packed_varints(f.bytes)) a.ints.push_back(v);
        break;
      case 20: a.type = static_cast<std::int32_t>(f.varint); break;
      default: break;  // tensor/graph attributes unused by the op subset
    }
  }
  return a;
}

inline Node parse_node(std::string_view bytes) {
  Node n;
  WireReader r(bytes);
  while (!r.done()) {
    const auto f = r.next();
    switch (f.number) {
      case 1: n.inputs.emplace_back(f.bytes); break;
      case 2: n.outputs.emplace_back(f.bytes); break;
      case 3: n.name = std::string(f.bytes); break;
      case 4: n.op_type = std::string(f.bytes); break;
      case 5: n.attributes.push_back(parse_attribute(f.bytes)); break;
      case 7: n.domain = std::string(f.bytes); break;
      default: break;
    }
  }
  return n;
}

inline ValueInfo parse_value_info(std::string_view bytes) {
  ValueInfo v;
  WireReader r(bytes);
  while (!r.done()) {
    const auto f = r.next();
    if (f.number == 1) {
      v.name = std::string(f.bytes);
    } else if (f.number == 2) {  // TypeProto
      WireReader tr(f.bytes);
      while (!tr.done()) {
        const auto tf = tr.next();
        if (tf.number != 1) continue;  // tensor_type
        WireReader ttr(tf.bytes);
        while (!ttr.done()) {
          const auto ttf = ttr.next();
          if (ttf.number == 1) {
            v.elem_type = static_cast<std::int32_t>(ttf.varint);
          } else if (ttf.number == 2) {  // TensorShapeProto
            WireReader sr(ttf.bytes);
            while (!sr.done()) {
              const auto sf = sr.next();
              if (sf.number != 1) continue;  // dim
              std::int64_t dim = -1;
              WireReader dr(sf.bytes);
              while (!dr.done()) {
                const auto df = dr.next();
                if (df.number == 1) dim = static_cast<std::int64_t>(df.varint);
              }
              v.dims.push_back(dim);
            }
          }
        }
      }
    }
  }
  return v;
}

inline Graph parse_graph(std::string_view bytes) {
  Graph g;
  WireReader r(bytes);
  while (!r.done()) {
    const auto f = r.next();
    switch (f.number) {
      case 1: g.nodes.push_back(parse_node(f.bytes)); break;
      case 2: g.name = std::string(f.bytes); break;
      case 5: g.initializers.push_back(parse_tensor(f.bytes)); break;
      case 11: g.inputs.push_back(parse_value_info(f.bytes)); break;
      case 12: g.outputs.push_back(parse_value_info(f.bytes)); break;
      default: break;
    }
  }
  return g;
}

}  // namespace detail

inline Model parse_model(const void* data, std::size_t size) {
  Model m;
  bool have_graph = false;
  WireReader r(static_cast<const std::uint8_t*>(data), size);
  while (!r.done()) {
    const auto f = r.next();
    switch (f.number) {
      case 1: m.ir_version = static_cast<std::int64_t>(f.varint); break;
      case 7:
        m.graph = detail::parse_graph(f.bytes);
        have_graph = true;
        break;
      case 8: {
        std::string domain;
        std::int64_t version = 0;
        WireReader osr(f.bytes);
        while (!osr.done()) {
          const auto of = osr.next();
          if (of.number == 1) domain = std::string(of.bytes);
          if (of.number == 2) version = static_cast<std::int64_t>(of.varint);
        }
        m.opset_imports.emplace_back(std::move(domain), version);
        break;
      }
      default: break;
    }
  }
  if (!have_graph) throw ModelError("ONNX model has no graph");
  return m;
}

inline Model load_model(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = salienteye::detail::read_file_bytes(path);
  } catch (const ValidationError& e) {
    throw ModelError(e.what());
  }
  try {
    return parse_model(bytes.data(), bytes.size());
  } catch (const ModelError& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Serialization (used for fixture backbones and round-trip tests)
// ---------------------------------------------------------------------------

namespace detail {

inline WireWriter write_tensor(const TensorData& t) {
  WireWriter w;
  w.packed_int64_field(1, t.dims);
  w.int64_field(2, t.data_type);
  if (t.data_type == kFloat) {
    std::string raw(t.floats.size() * 4, '\0');
    std::memcpy(raw.data(), t.floats.data(), raw.size());
    w.bytes_field(9, raw);
  } else if (t.data_type == kInt64) {
    std::string raw(t.ints.size() * 8, '\0');
    std::memcpy(raw.data(), t.ints.data(), raw.size());
    w.bytes_field(9, raw);
  } else {
    throw ModelError("cannot serialize tensor data_type " + std::to_string(t.data_type));
  }
  w.bytes_field(8, t.name);
  return w;
}

inline WireWriter write_attribute(const Attribute& a) {
  WireWriter w;
  w.bytes_field(1, a.name);
  switch (a.type) {
    case Attribute::kAttrFloat: w.float_field(2, a.f); break;
    case Attribute::kAttrInt: w.int64_field(3, a.i); break;
    case Attribute::kAttrString: w.bytes_field(4, a.s); break;
    case Attribute::kAttrFloats: w.raw_floats_field(7, a.floats); break;
    case Attribute::kAttrInts: w.packed_int64_field(8, a.ints); break;
    default: throw ModelError("cannot serialize attribute type " + std::to_string(a.type));
  }
  w.int64_field(20, a.type);
  return w;
}

inline WireWriter write_value_info(const ValueInfo& v) {
  WireWriter shape;
  for (std::int64_t d : v.dims) {
    WireWriter dim;
    if (d >= 0) dim.int64_field(1, d);
    shape.message_field(1, dim);
  }
  WireWriter tensor_type;
  tensor_type.int64_field(1, v.elem_type);
  tensor_type.message_field(2, shape);
  WireWriter type;
  type.message_field(1, tensor_type);
  WireWriter w;
  w.bytes_field(1, v.name);
  w.message_field(2, type);
  return w;
}

inline WireWriter write_node(const Node& n) {
  WireWriter w;
  for (const auto& s : n.inputs) w.bytes_field(1, s);
  for (const auto& s : n.outputs) w.bytes_field(2, s);
  if (!n.name.empty()) w.bytes_field(3, n.name);
  w.bytes_field(4, n.op_type);
  for (const auto& a : n.attributes) w.message_field(5, write_attribute(a));
  if (!n.domain.empty()) w.bytes_field(7, n.domain);
  return w;
}

}  // namespace detail

inline std::string serialize_model(const Model& m) {
  WireWriter graph;
  for (const auto& n : m.graph.nodes) graph.message_field(1, detail::write_node(n));
  graph.bytes_field(2, m.graph.name);
  for (const auto& t : m.graph.initializers) graph.message_field(5, detail::write_tensor(t));
  for (const auto& v : m.graph.inputs) graph.message_field(11, detail::write_value_info(v));
  for (const auto& v : m.graph.outputs) graph.message_field(12, detail::write_value_info(v));

  WireWriter w;
  w.int64_field(1, m.ir_version);
  for (const auto& [domain, version] : m.opset_imports) {
    WireWriter opset;
    if (!domain.empty()) opset.bytes_field(1, domain);
    opset.int64_field(2, version);
    w.message_field(8, opset);
  }
  w.message_field(7, graph);
  return w.take();
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(m);
  salienteye::detail::write_file_bytes(path, bytes.data(), bytes.size());
}

}  // namespace salienteye::onnx
