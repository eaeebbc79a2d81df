#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "salienteye/error.hpp"
#include "salienteye/onnx/model.hpp"

// Single-image CPU evaluator for a small, fixed op subset (the layers a
// VGG/Inception-class feature extractor is made of). Executes only the
// nodes reachable backwards from the requested outputs, sequentially, so
// results are bit-identical across runs and thread schedules.

namespace salienteye::onnx {

struct Tensor {
  std::vector<std::int64_t> dims;
  std::vector<float> data;

  std::size_t size() const { return data.size(); }

  static Tensor zeros(std::vector<std::int64_t> d) {
    Tensor t;
    t.dims = std::move(d);
    std::size_t n = 1;
    for (auto v : t.dims) n *= static_cast<std::size_t>(v);
    t.data.assign(n, 0.f);
    return t;
  }
};

namespace detail {

struct Dims4 {
  std::int64_t n = 1, c = 1, h = 1, w = 1;
};

inline Dims4 as_nchw(const Tensor& t, const std::string& what) {
  if (t.dims.size() == 4) return {t.dims[0], t.dims[1], t.dims[2], t.dims[3]};
  if (t.dims.size() == 3) return {1, t.dims[0], t.dims[1], t.dims[2]};
  throw ModelError(what + ": expected a 3D/4D tensor, got rank " + std::to_string(t.dims.size()));
}

struct PoolGeometry {
  std::int64_t kh, kw, sh, sw, pt, pl, pb, pr, dh, dw;
  std::int64_t out_h(std::int64_t h) const { return (h + pt + pb - ((kh - 1) * dh + 1)) / sh + 1; }
  std::int64_t out_w(std::int64_t w) const { return (w + pl + pr - ((kw - 1) * dw + 1)) / sw + 1; }
};

// Output index range [lo, hi) for which i = o*stride + (k*dilation - pad)
// stays inside [0, in_dim).
inline std::pair<std::int64_t, std::int64_t> valid_out_range(std::int64_t k, std::int64_t dilation,
                                                             std::int64_t pad, std::int64_t stride,
                                                             std::int64_t in_dim,
                                                             std::int64_t out_dim) {
  const std::int64_t offset = k * dilation - pad;
  std::int64_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  const std::int64_t last_num = in_dim - 1 - offset;
  std::int64_t hi = last_num < 0 ? 0 : last_num / stride + 1;
  lo = std::min(lo, out_dim);
  hi = std::min(hi, out_dim);
  return {lo, std::max(lo, hi)};
}

inline PoolGeometry window_geometry(const Node& node, std::int64_t kh, std::int64_t kw) {
  const auto strides = node.attr_ints("strides", {1, 1});
  const auto pads = node.attr_ints("pads", {0, 0, 0, 0});
  const auto dilations = node.attr_ints("dilations", {1, 1});
  const std::string auto_pad = node.attr_string("auto_pad", "NOTSET");
  if (auto_pad != "NOTSET")
    throw ModelError("node '" + node.name + "': auto_pad=" + auto_pad +
                     " unsupported, use explicit pads");
  if (strides.size() != 2 || pads.size() != 4 || dilations.size() != 2)
    throw ModelError("node '" + node.name + "': only 2D spatial attributes supported");
  return {kh, kw, strides[0], strides[1], pads[0], pads[1], pads[2], pads[3],
          dilations[0], dilations[1]};
}

}  // namespace detail

class Engine {
 public:
  explicit Engine(Model model) : model_(std::move(model)) {
    for (auto& init : model_.graph.initializers) {
      initializer_names_.insert(init.name);
      if (init.data_type == kFloat) {
        Tensor t;
        t.dims = init.dims;
        t.data = std::move(init.floats);
        weights_.emplace(init.name, std::move(t));
      }
    }
    for (std::size_t i = 0; i < model_.graph.nodes.size(); ++i)
      for (const auto& out : model_.graph.nodes[i].outputs) producer_[out] = i;
    for (const auto& vi : model_.graph.inputs)
      if (!initializer_names_.count(vi.name)) input_names_.push_back(vi.name);
    if (input_names_.size() != 1)
      throw ModelError("model must have exactly one non-initializer input, found " +
                       std::to_string(input_names_.size()));
  }

  const std::string& input_name() const { return input_names_[0]; }

  bool has_value(const std::string& name) const {
    return producer_.count(name) || initializer_names_.count(name);
  }

  // Every node output name, in graph order. Used for "unknown layer"
  // diagnostics.
  std::vector<std::string> value_names() const {
    std::vector<std::string> names;
    for (const auto& n : model_.graph.nodes)
      for (const auto& out : n.outputs) names.push_back(out);
    return names;
  }

  // Evaluates the given output names for one input image tensor (CHW or
  // NCHW with N=1). Unreachable parts of the graph are not executed.
  std::unordered_map<std::string, Tensor> run(const Tensor& input,
                                              const std::vector<std::string>& outputs) const {
    std::unordered_map<std::string, Tensor> values;
    values[input_names_[0]] = input;

    // backward reachability -> forward execution order
    std::vector<bool> needed(model_.graph.nodes.size(), false);
    std::vector<std::string> stack(outputs);
    while (!stack.empty()) {
      const std::string name = std::move(stack.back());
      stack.pop_back();
      if (name == input_names_[0] || initializer_names_.count(name)) continue;
      const auto it = producer_.find(name);
      if (it == producer_.end())
        throw ModelError("unknown layer '" + name + "'; available layers: " +
                         joined_value_names());
      if (needed[it->second]) continue;
      needed[it->second] = true;
      for (const auto& in : model_.graph.nodes[it->second].inputs) stack.push_back(in);
    }

    for (std::size_t i = 0; i < model_.graph.nodes.size(); ++i) {
      if (!needed[i]) continue;
      execute(model_.graph.nodes[i], values);
    }

    std::unordered_map<std::string, Tensor> result;
    for (const auto& name : outputs) {
      auto it = values.find(name);
      if (it == values.end()) throw ModelError("layer '" + name + "' was not produced");
      result[name] = it->second;
    }
    return result;
  }

 private:
  std::string joined_value_names() const {
    std::string s;
    for (const auto& name : value_names()) {
      if (!s.empty()) s += ", ";
      s += name;
    }
    return s;
  }

  const Tensor& fetch(std::unordered_map<std::string, Tensor>& values, const std::string& name,
                      const Node& node) const {
    const auto it = values.find(name);
    if (it != values.end()) return it->second;
    const auto weight = weights_.find(name);
    if (weight != weights_.end()) return weight->second;
    if (initializer_names_.count(name))
      throw ModelError("initializer '" + name + "' is not float32");
    throw ModelError("node '" + node.name + "': missing input '" + name + "'");
  }

  void execute(const Node& node, std::unordered_map<std::string, Tensor>& values) const {
    if (node.op_type == "Conv") {
      op_conv(node, values);
    } else if (node.op_type == "Relu") {
      const Tensor& x = fetch(values, node.inputs.at(0), node);
      Tensor y = x;
      for (float& v : y.data) v = v > 0.f ? v : 0.f;
      values[node.outputs.at(0)] = std::move(y);
    } else if (node.op_type == "MaxPool") {
      op_pool(node, values, /*is_max=*/true);
    } else if (node.op_type == "AveragePool") {
      op_pool(node, values, /*is_max=*/false);
    } else if (node.op_type == "GlobalAveragePool") {
      op_global_average_pool(node, values);
    } else if (node.op_type == "BatchNormalization") {
      op_batch_norm(node, values);
    } else if (node.op_type == "Add") {
      op_add(node, values);
    } else if (node.op_type == "Concat") {
      op_concat(node, values);
    } else if (node.op_type == "Identity") {
      values[node.outputs.at(0)] = fetch(values, node.inputs.at(0), node);
    } else {
      throw ModelError("unsupported op '" + node.op_type + "' (node '" + node.name + "')");
    }
  }

  void op_conv(const Node& node, std::unordered_map<std::string, Tensor>& values) const {
    const Tensor& x = fetch(values, node.inputs.at(0), node);
    const Tensor& w = fetch(values, node.inputs.at(1), node);
    const Tensor* b = node.inputs.size() > 2 && !node.inputs[2].empty()
                          ? &fetch(values, node.inputs[2], node)
                          : nullptr;
    const auto xd = detail::as_nchw(x, "Conv input");
    if (w.dims.size() != 4) throw ModelError("Conv weights must be 4D");
    const std::int64_t out_c = w.dims[0], in_c_per_group = w.dims[1];
    const std::int64_t kh = w.dims[2], kw = w.dims[3];
    const std::int64_t group = node.attr_int("group", 1);
    if (group < 1 || out_c % group != 0)
      throw ModelError("Conv: output channels " + std::to_string(out_c) +
                       " not divisible by group " + std::to_string(group));
    if (xd.c != in_c_per_group * group)
      throw ModelError("Conv channel mismatch: input has " + std::to_string(xd.c) +
                       ", weights expect " + std::to_string(in_c_per_group * group));
    const auto g = detail::window_geometry(node, kh, kw);
    const std::int64_t oh = g.out_h(xd.h), ow = g.out_w(xd.w);
    if (oh <= 0 || ow <= 0) throw ModelError("Conv output would be empty");

    Tensor y = Tensor::zeros({xd.n, out_c, oh, ow});
    const std::int64_t oc_per_group = out_c / group;
    // per-filter accumulation plane, streamed row-wise so the inner loop
    // reads and writes contiguously (and vectorizes)
    std::vector<double> plane(static_cast<std::size_t>(oh * ow));
    for (std::int64_t n = 0; n < xd.n; ++n) {
      for (std::int64_t oc = 0; oc < out_c; ++oc) {
        const std::int64_t grp = oc / oc_per_group;
        const double bias = b ? static_cast<double>(b->data[static_cast<std::size_t>(oc)]) : 0.0;
        std::fill(plane.begin(), plane.end(), bias);
        for (std::int64_t ic = 0; ic < in_c_per_group; ++ic) {
          const std::int64_t xc = grp * in_c_per_group + ic;
          const float* x_chan =
              x.data.data() + static_cast<std::size_t>((n * xd.c + xc) * xd.h * xd.w);
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            const auto [oy_lo, oy_hi] = detail::valid_out_range(ky, g.dh, g.pt, g.sh, xd.h, oh);
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const double wv = w.data[static_cast<std::size_t>(
                  ((oc * in_c_per_group + ic) * kh + ky) * kw + kx)];
              const auto [ox_lo, ox_hi] = detail::valid_out_range(kx, g.dw, g.pl, g.sw, xd.w, ow);
              const std::int64_t x_off = kx * g.dw - g.pl;
              for (std::int64_t oy = oy_lo; oy < oy_hi; ++oy) {
                const std::int64_t iy = oy * g.sh - g.pt + ky * g.dh;
                const float* xrow = x_chan + static_cast<std::size_t>(iy * xd.w);
                double* prow = plane.data() + static_cast<std::size_t>(oy * ow);
                if (g.sw == 1) {
                  const float* xp = xrow + x_off + ox_lo;
                  for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                    prow[ox] += wv * static_cast<double>(xp[ox - ox_lo]);
                } else {
                  for (std::int64_t ox = ox_lo; ox < ox_hi; ++ox)
                    prow[ox] += wv * static_cast<double>(xrow[ox * g.sw + x_off]);
                }
              }
            }
          }
        }
        float* yplane = y.data.data() + static_cast<std::size_t>((n * out_c + oc) * oh * ow);
        for (std::size_t i = 0; i < plane.size(); ++i) yplane[i] = static_cast<float>(plane[i]);
      }
    }
    values[node.outputs.at(0)] = std::move(y);
  }

  void op_pool(const Node& node, std::unordered_map<std::string, Tensor>& values,
               bool is_max) const {
    const Tensor& x = fetch(values, node.inputs.at(0), node);
    const auto xd = detail::as_nchw(x, node.op_type + " input");
    const auto kernel = node.attr_ints("kernel_shape", {});
    if (kernel.size() != 2) throw ModelError(node.op_type + ": kernel_shape must be 2D");
    if (node.attr_int("ceil_mode", 0) != 0)
      throw ModelError(node.op_type + ": ceil_mode unsupported");
    const bool include_pad = node.attr_int("count_include_pad", 0) != 0;
    const auto g = detail::window_geometry(node, kernel[0], kernel[1]);
    const std::int64_t oh = g.out_h(xd.h), ow = g.out_w(xd.w);
    if (oh <= 0 || ow <= 0) throw ModelError(node.op_type + ": output would be empty");

    Tensor y = Tensor::zeros({xd.n, xd.c, oh, ow});
    for (std::int64_t n = 0; n < xd.n; ++n) {
      for (std::int64_t c = 0; c < xd.c; ++c) {
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
            std::int64_t count = 0;
            for (std::int64_t ky = 0; ky < g.kh; ++ky) {
              const std::int64_t iy = oy * g.sh - g.pt + ky * g.dh;
              if (iy < 0 || iy >= xd.h) continue;
              for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                const std::int64_t ix = ox * g.sw - g.pl + kx * g.dw;
                if (ix < 0 || ix >= xd.w) continue;
                const float v =
                    x.data[static_cast<std::size_t>(((n * xd.c + c) * xd.h + iy) * xd.w + ix)];
                if (is_max)
                  acc = std::max(acc, static_cast<double>(v));
                else
                  acc += v;
                ++count;
              }
            }
            float out;
            if (is_max) {
              out = count ? static_cast<float>(acc) : 0.f;
            } else {
              const std::int64_t denom = include_pad ? g.kh * g.kw : count;
              out = denom ? static_cast<float>(acc / static_cast<double>(denom)) : 0.f;
            }
            y.data[static_cast<std::size_t>(((n * xd.c + c) * oh + oy) * ow + ox)] = out;
          }
        }
      }
    }
    values[node.outputs.at(0)] = std::move(y);
  }

  void op_global_average_pool(const Node& node,
                              std::unordered_map<std::string, Tensor>& values) const {
    const Tensor& x = fetch(values, node.inputs.at(0), node);
    const auto xd = detail::as_nchw(x, "GlobalAveragePool input");
    Tensor y = Tensor::zeros({xd.n, xd.c, 1, 1});
    const std::int64_t spatial = xd.h * xd.w;
    for (std::int64_t n = 0; n < xd.n; ++n) {
      for (std::int64_t c = 0; c < xd.c; ++c) {
        double acc = 0.0;
        const std::size_t base = static_cast<std::size_t>((n * xd.c + c) * spatial);
        for (std::int64_t i = 0; i < spatial; ++i) acc += x.data[base + static_cast<std::size_t>(i)];
        y.data[static_cast<std::size_t>(n * xd.c + c)] =
            static_cast<float>(acc / static_cast<double>(spatial));
      }
    }
    values[node.outputs.at(0)] = std::move(y);
  }

  void op_batch_norm(const Node& node, std::unordered_map<std::string, Tensor>& values) const {
    const Tensor& x = fetch(values, node.inputs.at(0), node);
    const Tensor& scale = fetch(values, node.inputs.at(1), node);
    const Tensor& bias = fetch(values, node.inputs.at(2), node);
    const Tensor& mean = fetch(values, node.inputs.at(3), node);
    const Tensor& var = fetch(values, node.inputs.at(4), node);
    const float eps = node.attr_float("epsilon", 1e-5f);
    const auto xd = detail::as_nchw(x, "BatchNormalization input");
    Tensor y = x;
    const std::int64_t spatial = xd.h * xd.w;
    for (std::int64_t n = 0; n < xd.n; ++n) {
      for (std::int64_t c = 0; c < xd.c; ++c) {
        const std::size_t ci = static_cast<std::size_t>(c);
        const float inv = 1.f / std::sqrt(var.data[ci] + eps);
        const std::size_t base = static_cast<std::size_t>((n * xd.c + c) * spatial);
        for (std::int64_t i = 0; i < spatial; ++i) {
          const std::size_t at = base + static_cast<std::size_t>(i);
          y.data[at] = scale.data[ci] * (x.data[at] - mean.data[ci]) * inv + bias.data[ci];
        }
      }
    }
    values[node.outputs.at(0)] = std::move(y);
  }

  void op_add(const Node& node, std::unordered_map<std::string, Tensor>& values) const {
    const Tensor& a = fetch(values, node.inputs.at(0), node);
    const Tensor& bt = fetch(values, node.inputs.at(1), node);
    if (a.dims == bt.dims) {
      Tensor y = a;
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += bt.data[i];
      values[node.outputs.at(0)] = std::move(y);
      return;
    }
    // per-channel broadcast: b shaped [C], [C,1,1] or [1,C,1,1]
    const auto ad = detail::as_nchw(a, "Add input");
    std::int64_t bc = 0;
    for (auto d : bt.dims)
      if (d != 1) bc = d;
    if (static_cast<std::size_t>(ad.c) != bt.data.size() || (bc != ad.c && bc != 0))
      throw ModelError("Add: incompatible shapes");
    Tensor y = a;
    const std::int64_t spatial = ad.h * ad.w;
    for (std::int64_t n = 0; n < ad.n; ++n)
      for (std::int64_t c = 0; c < ad.c; ++c) {
        const std::size_t base = static_cast<std::size_t>((n * ad.c + c) * spatial);
        for (std::int64_t i = 0; i < spatial; ++i)
          y.data[base + static_cast<std::size_t>(i)] += bt.data[static_cast<std::size_t>(c)];
      }
    values[node.outputs.at(0)] = std::move(y);
  }

  void op_concat(const Node& node, std::unordered_map<std::string, Tensor>& values) const {
    const std::int64_t axis = node.attr_int("axis", 1);
    std::vector<const Tensor*> parts;
    parts.reserve(node.inputs.size());
    for (const auto& in : node.inputs) parts.push_back(&fetch(values, in, node));
    if (parts.empty()) throw ModelError("Concat with no inputs");
    const auto rank = parts[0]->dims.size();
    const std::size_t ax =
        static_cast<std::size_t>(axis < 0 ? axis + static_cast<std::int64_t>(rank) : axis);
    if (ax >= rank) throw ModelError("Concat: axis out of range");
    std::vector<std::int64_t> out_dims = parts[0]->dims;
    out_dims[ax] = 0;
    for (const Tensor* p : parts) {
      if (p->dims.size() != rank) throw ModelError("Concat: rank mismatch");
      for (std::size_t d = 0; d < rank; ++d)
        if (d != ax && p->dims[d] != parts[0]->dims[d])
          throw ModelError("Concat: dimension mismatch");
      out_dims[ax] += p->dims[ax];
    }
    Tensor y = Tensor::zeros(out_dims);
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < ax; ++d) outer *= static_cast<std::size_t>(out_dims[d]);
    for (std::size_t d = ax + 1; d < rank; ++d) inner *= static_cast<std::size_t>(out_dims[d]);
    std::size_t offset = 0;
    for (const Tensor* p : parts) {
      const std::size_t span = static_cast<std::size_t>(p->dims[ax]) * inner;
      for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(p->data.data() + o * span, span,
                    y.data.data() + o * static_cast<std::size_t>(out_dims[ax]) * inner + offset);
      offset += span;
    }
    values[node.outputs.at(0)] = std::move(y);
  }

  Model model_;
  std::unordered_set<std::string> initializer_names_;
  std::unordered_map<std::string, Tensor> weights_;  // float32 initializers, materialized once
  std::unordered_map<std::string, std::size_t> producer_;
  std::vector<std::string> input_names_;
};

}  // namespace salienteye::onnx
