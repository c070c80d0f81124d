#include "adcloud/binstream/codec.hpp"

#include <bit>
#include <cstring>

#include "adcloud/error.hpp"

namespace adcloud::binstream {

namespace {

constexpr std::size_t kFieldHeader = 5;

[[noreturn]] void tag_mismatch(const char* wanted) {
  throw Error(Errc::InvalidArgument, std::string("field is not ") + wanted);
}

}  // namespace

const Bytes& FieldValue::as_bytes() const {
  if (auto* p = std::get_if<0>(&value_)) return *p;
  tag_mismatch("Bytes");
}

const std::string& FieldValue::as_utf8() const {
  if (auto* p = std::get_if<1>(&value_)) return *p;
  tag_mismatch("Utf8");
}

std::int64_t FieldValue::as_int64() const {
  if (auto* p = std::get_if<2>(&value_)) return *p;
  tag_mismatch("Int64");
}

double FieldValue::as_float64() const {
  if (auto* p = std::get_if<3>(&value_)) return *p;
  tag_mismatch("Float64");
}

bool FieldValue::operator==(const FieldValue& other) const noexcept {
  if (value_.index() != other.value_.index()) return false;
  if (value_.index() == 3) {
    return std::bit_cast<std::uint64_t>(std::get<3>(value_)) ==
           std::bit_cast<std::uint64_t>(std::get<3>(other.value_));
  }
  return value_ == other.value_;
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) noexcept {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) noexcept {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const std::uint8_t* p) noexcept { return std::bit_cast<double>(get_u64(p)); }

void encode_field(const FieldValue& v, Bytes& out) {
  out.push_back(static_cast<std::uint8_t>(v.tag()));
  switch (v.tag()) {
    case FieldTag::Bytes: {
      const auto& b = v.as_bytes();
      put_u32(out, static_cast<std::uint32_t>(b.size()));
      out.insert(out.end(), b.begin(), b.end());
      break;
    }
    case FieldTag::Utf8: {
      const auto& s = v.as_utf8();
      put_u32(out, static_cast<std::uint32_t>(s.size()));
      out.insert(out.end(), s.begin(), s.end());
      break;
    }
    case FieldTag::Int64:
      put_u32(out, 8);
      put_u64(out, static_cast<std::uint64_t>(v.as_int64()));
      break;
    case FieldTag::Float64:
      put_u32(out, 8);
      put_f64(out, v.as_float64());
      break;
  }
}

Bytes encode_field(const FieldValue& v) {
  Bytes out;
  encode_field(v, out);
  return out;
}

Decoded<FieldValue> decode_field(ByteView b) {
  if (b.empty()) throw Error(Errc::TruncatedField, "no tag byte");
  const std::uint8_t tag = b[0];
  if (tag > static_cast<std::uint8_t>(FieldTag::Float64)) {
    throw Error(Errc::UnknownTag, "tag 0x" + std::to_string(tag));
  }
  if (b.size() < kFieldHeader) throw Error(Errc::TruncatedField, "incomplete length prefix");
  const std::uint32_t len = get_u32(b.data() + 1);
  if (b.size() - kFieldHeader < len) {
    throw Error(Errc::TruncatedField,
                "declared " + std::to_string(len) + " bytes, " + std::to_string(b.size() - kFieldHeader) + " available");
  }
  const std::uint8_t* payload = b.data() + kFieldHeader;
  const std::size_t consumed = kFieldHeader + len;
  switch (static_cast<FieldTag>(tag)) {
    case FieldTag::Bytes:
      return {FieldValue::bytes(Bytes(payload, payload + len)), consumed};
    case FieldTag::Utf8: {
      std::string s(reinterpret_cast<const char*>(payload), len);
      if (!is_valid_utf8(s)) throw Error(Errc::InvalidUtf8, "Utf8 field payload");
      return {FieldValue::utf8(std::move(s)), consumed};
    }
    case FieldTag::Int64:
    case FieldTag::Float64:
      if (len != 8) throw Error(Errc::TruncatedField, "fixed-width field with length " + std::to_string(len));
      if (tag == static_cast<std::uint8_t>(FieldTag::Int64)) {
        return {FieldValue::int64(static_cast<std::int64_t>(get_u64(payload))), consumed};
      }
      return {FieldValue::float64(get_f64(payload)), consumed};
  }
  throw Error(Errc::UnknownTag, "unreachable");
}

void encode_record(const BinaryRecord& r, Bytes& out) {
  put_u32(out, static_cast<std::uint32_t>(r.fields.size()));
  for (const auto& f : r.fields) encode_field(f, out);
}

Bytes encode_record(const BinaryRecord& r) {
  Bytes out;
  out.reserve(encoded_size(r));
  encode_record(r, out);
  return out;
}

Decoded<BinaryRecord> decode_record(ByteView b) {
  if (b.size() < 4) throw Error(Errc::TruncatedRecord, "incomplete field count");
  const std::uint32_t count = get_u32(b.data());
  std::size_t pos = 4;
  BinaryRecord r;
  r.fields.reserve(std::min<std::size_t>(count, 1024));
  for (std::uint32_t i = 0; i < count; ++i) {
    if (pos == b.size()) {
      throw Error(Errc::TruncatedRecord,
                  "declared " + std::to_string(count) + " fields, found " + std::to_string(i));
    }
    auto [field, used] = decode_field(b.subspan(pos));
    r.fields.push_back(std::move(field));
    pos += used;
  }
  return {std::move(r), pos};
}

std::size_t encoded_size(const BinaryRecord& r) {
  std::size_t n = 4;
  for (const auto& f : r.fields) {
    n += kFieldHeader;
    switch (f.tag()) {
      case FieldTag::Bytes: n += f.as_bytes().size(); break;
      case FieldTag::Utf8: n += f.as_utf8().size(); break;
      default: n += 8; break;
    }
  }
  return n;
}

bool is_valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  while (i < n) {
    const unsigned char c = p[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t extra;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (n - i <= extra) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const unsigned char cc = p[i + k];
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Reject overlong forms, surrogates and code points past U+10FFFF.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

}  // namespace adcloud::binstream
