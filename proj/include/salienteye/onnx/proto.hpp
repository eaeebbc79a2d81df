#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "salienteye/error.hpp"

// Minimal protobuf wire-format primitives, enough to read and write the
// ONNX ModelProto subset this toolkit consumes. No schema compiler, no
// reflection; field numbers are hardcoded by the callers.

namespace salienteye::onnx {

enum WireType : std::uint32_t {
  kVarint = 0,
  kFixed64 = 1,
  kLengthDelimited = 2,
  kFixed32 = 5,
};

class WireReader {
 public:
  WireReader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
  explicit WireReader(std::string_view s)
      : WireReader(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()) {}

  bool done() const { return p_ >= end_; }

  struct Field {
    std::uint32_t number = 0;
    std::uint32_t wire_type = 0;
    std::uint64_t varint = 0;      // kVarint
    std::uint32_t fixed32 = 0;     // kFixed32
    std::uint64_t fixed64 = 0;     // kFixed64
    std::string_view bytes;        // kLengthDelimited
  };

  // Reads the next field, decoding its payload per wire type.
  Field next() {
    Field f;
    const std::uint64_t key = read_varint();
    f.number = static_cast<std::uint32_t>(key >> 3);
    f.wire_type = static_cast<std::uint32_t>(key & 7);
    switch (f.wire_type) {
      case kVarint:
        f.varint = read_varint();
        break;
      case kFixed64:
        need(8);
        std::memcpy(&f.fixed64, p_, 8);
        p_ += 8;
        break;
      case kLengthDelimited: {
        const std::uint64_t len = read_varint();
        need(len);
        f.bytes = std::string_view(reinterpret_cast<const char*>(p_), len);
        p_ += len;
        break;
      }
      case kFixed32:
        need(4);
        std::memcpy(&f.fixed32, p_, 4);
        p_ += 4;
        break;
      default:
        throw ModelError("protobuf: unsupported wire type " + std::to_string(f.wire_type));
    }
    return f;
  }

  static float as_float(const Field& f) {
    float v;
    std::memcpy(&v, &f.fixed32, 4);
    return v;
  }

  // Packed repeated scalars arrive as one length-delimited blob.
  static std::vector<std::int64_t> packed_varints(std::string_view blob) {
    WireReader r(blob);
    std::vector<std::int64_t> out;
    while (!r.done()) out.push_back(static_cast<std::int64_t>(r.read_varint()));
    return out;
  }

  static std::vector<float> packed_floats(std::string_view blob) {
    if (blob.size() % 4 != 0) throw ModelError("protobuf: packed float blob not a multiple of 4");
    std::vector<float> out(blob.size() / 4);
    std::memcpy(out.data(), blob.data(), blob.size());
    return out;
  }

  std::uint64_t read_varint() {
    std::uint64_t v = 0;
    int shift = 0;
    while (p_ < end_) {
      const std::uint8_t b = *p_++;
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
      shift += 7;
      if (shift >= 64) break;
    }
    throw ModelError("protobuf: truncated or overlong varint");
  }

 private:
  void need(std::uint64_t n) const {
    if (static_cast<std::uint64_t>(end_ - p_) < n) throw ModelError("protobuf: truncated message");
  }

  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

class WireWriter {
 public:
  const std::string& str() const { return buf_; }
  std::string take() { return std::move(buf_); }

  void varint_field(std::uint32_t number, std::uint64_t value) {
    tag(number, kVarint);
    varint(value);
  }

  void int64_field(std::uint32_t number, std::int64_t value) {
    varint_field(number, static_cast<std::uint64_t>(value));
  }

  void float_field(std::uint32_t number, float value) {
    tag(number, kFixed32);
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }

  void bytes_field(std::uint32_t number, std::string_view bytes) {
    tag(number, kLengthDelimited);
    varint(bytes.size());
    buf_.append(bytes.data(), bytes.size());
  }

  void message_field(std::uint32_t number, const WireWriter& sub) {
    bytes_field(number, sub.str());
  }

  void packed_int64_field(std::uint32_t number, const std::vector<std::int64_t>& values) {
    WireWriter sub;
    for (std::int64_t v : values) sub.varint(static_cast<std::uint64_t>(v));
    bytes_field(number, sub.str());
  }

  void raw_floats_field(std::uint32_t number, const std::vector<float>& values) {
    tag(number, kLengthDelimited);
    varint(values.size() * 4);
    const std::size_t at = buf_.size();
    buf_.resize(at + values.size() * 4);
    std::memcpy(buf_.data() + at, values.data(), values.size() * 4);
  }

 private:
  void tag(std::uint32_t number, WireType type) {
    varint((static_cast<std::uint64_t>(number) << 3) | type);
  }

  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<char>((v & 0x7f) | 0x80));
      v >>= 7;
    }
    buf_.push_back(static_cast<char>(v));
  }

  std::string buf_;
};

}  // namespace salienteye::onnx
