#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace adcloud::binstream {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class FieldTag : std::uint8_t { Bytes = 0x00, Utf8 = 0x01, Int64 = 0x02, Float64 = 0x03 };

/// One typed value inside a record. Float64 compares by bit pattern so that
/// NaN payloads round-trip and compare equal to themselves.
class FieldValue {
 public:
  FieldValue() : value_(std::int64_t{0}) {}

  static FieldValue bytes(Bytes b) { return FieldValue(Storage(std::in_place_index<0>, std::move(b))); }
  static FieldValue bytes(ByteView b) { return bytes(Bytes(b.begin(), b.end())); }
  static FieldValue utf8(std::string s) { return FieldValue(Storage(std::in_place_index<1>, std::move(s))); }
  static FieldValue int64(std::int64_t v) { return FieldValue(Storage(std::in_place_index<2>, v)); }
  static FieldValue float64(double v) { return FieldValue(Storage(std::in_place_index<3>, v)); }

  FieldTag tag() const noexcept { return static_cast<FieldTag>(value_.index()); }

  // Accessors throw InvalidArgument on a tag mismatch.
  const Bytes& as_bytes() const;
  const std::string& as_utf8() const;
  std::int64_t as_int64() const;
  double as_float64() const;

  bool operator==(const FieldValue& other) const noexcept;

 private:
  using Storage = std::variant<Bytes, std::string, std::int64_t, double>;
  explicit FieldValue(Storage v) : value_(std::move(v)) {}
  Storage value_;
};

struct BinaryRecord {
  std::vector<FieldValue> fields;

  BinaryRecord() = default;
  BinaryRecord(std::initializer_list<FieldValue> f) : fields(f) {}
  explicit BinaryRecord(std::vector<FieldValue> f) : fields(std::move(f)) {}

  std::size_t size() const noexcept { return fields.size(); }
  const FieldValue& operator[](std::size_t i) const { return fields.at(i); }
  bool operator==(const BinaryRecord&) const = default;
};

template <typename T>
struct Decoded {
  T value;
  std::size_t consumed;
};

void encode_field(const FieldValue& v, Bytes& out);
Bytes encode_field(const FieldValue& v);
Decoded<FieldValue> decode_field(ByteView b);

void encode_record(const BinaryRecord& r, Bytes& out);
Bytes encode_record(const BinaryRecord& r);
Decoded<BinaryRecord> decode_record(ByteView b);

/// Encoded size of a record without materializing it.
std::size_t encoded_size(const BinaryRecord& r);

bool is_valid_utf8(std::string_view s) noexcept;

// Little-endian fixed-width helpers shared by the other wire formats.
void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
void put_f64(Bytes& out, double v);
std::uint32_t get_u32(const std::uint8_t* p) noexcept;
std::uint64_t get_u64(const std::uint8_t* p) noexcept;
double get_f64(const std::uint8_t* p) noexcept;

}  // namespace adcloud::binstream
