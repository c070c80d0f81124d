#include "adcloud/mapgen/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "adcloud/binstream/bag_format.hpp"
#include "adcloud/error.hpp"

namespace adcloud::mapgen {

using binstream::FieldValue;
using nlohmann::json;

namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'D', 'H', 'M'};
const double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::Lane: return "LANE";
    case LabelKind::ReferenceLine: return "REFERENCE_LINE";
    case LabelKind::TrafficSign: return "TRAFFIC_SIGN";
    case LabelKind::SpeedLimit: return "SPEED_LIMIT";
  }
  return "?";
}

[[noreturn]] void malformed(const std::string& what) { throw Error(Errc::MalformedLabelSpec, what); }

double finite_number(const json& j, const std::string& where) {
  if (!j.is_number()) malformed(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) malformed(where + ": not finite");
  return v;
}

std::pair<double, double> parse_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) malformed(where + ": expected [x, y]");
  return {finite_number(j[0], where + "[0]"), finite_number(j[1], where + "[1]")};
}

std::vector<std::pair<double, double>> parse_polyline(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() < 2) malformed(where + ": polyline needs at least two points");
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_point(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) malformed(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      malformed(where + ": unknown key '" + k + "'");
    }
  }
}

const json& required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) malformed(where + ": missing '" + key + "'");
  return j.at(key);
}

// Squared distance from c to segment ab, or +inf when c projects outside it.
double segment_dist2(double cx, double cy, std::pair<double, double> a, std::pair<double, double> b) {
  const double dx = b.first - a.first, dy = b.second - a.second;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0) return std::numeric_limits<double>::infinity();
  const double u = ((cx - a.first) * dx + (cy - a.second) * dy) / len2;
  if (u < 0 || u > 1) return std::numeric_limits<double>::infinity();
  const double px = a.first + u * dx - cx, py = a.second + u * dy - cy;
  return px * px + py * py;
}

void label_polyline(GridMap& map, const std::vector<std::pair<double, double>>& line, double half_width,
                    const Label& label) {
  if (map.width == 0 || map.height == 0) return;
  const double r2 = half_width * half_width;
  auto within = [&](double cx, double cy) {
    for (std::size_t s = 0; s + 1 < line.size(); ++s) {
      if (segment_dist2(cx, cy, line[s], line[s + 1]) <= r2) return true;
    }
    for (std::size_t v = 1; v + 1 < line.size(); ++v) {  // round joins
      const double dx = cx - line[v].first, dy = cy - line[v].second;
      if (dx * dx + dy * dy <= r2) return true;
    }
    return false;
  };
  double lo_x = line[0].first, hi_x = lo_x, lo_y = line[0].second, hi_y = lo_y;
  for (const auto& [x, y] : line) {
    lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
  }
  auto clamp_col = [&](double v, std::uint32_t n, std::int64_t first) {
    const std::int64_t i = lattice_index(v, map.cell_size) - first;
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(n) - 1));
  };
  const auto c0 = clamp_col(lo_x - half_width, map.width, map.first_ix);
  const auto c1 = clamp_col(hi_x + half_width, map.width, map.first_ix);
  const auto r0 = clamp_col(lo_y - half_width, map.height, map.first_iy);
  const auto r1 = clamp_col(hi_y + half_width, map.height, map.first_iy);
  for (std::uint32_t r = r0; r <= r1; ++r) {
    for (std::uint32_t c = c0; c <= c1; ++c) {
      if (within(map.center_x(c), map.center_y(r))) map.semantic[map.index(c, r)].insert(label);
    }
  }
}

BinaryRecord encode_labels(const std::set<Label>& labels) {
  BinaryRecord r;
  for (const auto& l : labels) {
    r.fields.push_back(FieldValue::utf8(kind_name(l.kind)));
    switch (l.kind) {
      case LabelKind::Lane: r.fields.push_back(FieldValue::int64(l.id)); break;
      case LabelKind::ReferenceLine: r.fields.push_back(FieldValue::int64(0)); break;
      case LabelKind::TrafficSign: r.fields.push_back(FieldValue::utf8(l.text)); break;
      case LabelKind::SpeedLimit: r.fields.push_back(FieldValue::float64(l.value)); break;
    }
  }
  return r;
}

std::set<Label> decode_labels(const BinaryRecord& r) {
  if (r.size() % 2 != 0) throw Error(Errc::ParseError, "label record has an odd field count");
  std::set<Label> out;
  for (std::size_t i = 0; i < r.size(); i += 2) {
    const auto& name = r[i].as_utf8();
    Label l;
    if (name == "LANE") {
      l.kind = LabelKind::Lane, l.id = r[i + 1].as_int64();
    } else if (name == "REFERENCE_LINE") {
      l.kind = LabelKind::ReferenceLine;
    } else if (name == "TRAFFIC_SIGN") {
      l.kind = LabelKind::TrafficSign, l.text = r[i + 1].as_utf8();
    } else if (name == "SPEED_LIMIT") {
      l.kind = LabelKind::SpeedLimit, l.value = r[i + 1].as_float64();
    } else {
      throw Error(Errc::ParseError, "unknown label kind " + name);
    }
    out.insert(l);
  }
  return out;
}

}  // namespace

std::string to_string(const Label& l) {
  switch (l.kind) {
    case LabelKind::Lane: return "LANE(" + std::to_string(l.id) + ")";
    case LabelKind::ReferenceLine: return "REFERENCE_LINE";
    case LabelKind::TrafficSign: return "TRAFFIC_SIGN(" + l.text + ")";
    case LabelKind::SpeedLimit: return "SPEED_LIMIT(" + json(l.value).dump() + ")";
  }
  return "?";
}

double GridMap::center_x(std::uint32_t col) const {
  return (static_cast<double>(first_ix + col) + 0.5) * cell_size;
}
double GridMap::center_y(std::uint32_t row) const {
  return (static_cast<double>(first_iy + row) + 0.5) * cell_size;
}

bool GridMap::locate(double x, double y, std::uint32_t& col, std::uint32_t& row) const {
  if (!std::isfinite(x) || !std::isfinite(y)) return false;
  const std::int64_t c = lattice_index(x, cell_size) - first_ix;
  const std::int64_t r = lattice_index(y, cell_size) - first_iy;
  if (c < 0 || r < 0 || c >= width || r >= height) return false;
  col = static_cast<std::uint32_t>(c);
  row = static_cast<std::uint32_t>(r);
  return true;
}

std::size_t GridMap::occupied() const {
  return static_cast<std::size_t>(std::count_if(hits.begin(), hits.end(), [](auto h) { return h > 0; }));
}

std::int64_t lattice_index(double v, double cell) { return static_cast<std::int64_t>(std::floor(v / cell)); }

RasterPartial::RasterPartial(double cell_size) : cell_(cell_size) {
  if (!(cell_size > 0) || !std::isfinite(cell_size)) throw Error(Errc::InvalidArgument, "cell size must be > 0");
}

void RasterPartial::add(const LidarPoint& p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) return;
  auto& c = cells_[{lattice_index(p.x, cell_), lattice_index(p.y, cell_)}];
  ++c.count;
  c.max_z = std::max(c.max_z, p.z);
  c.reflectance.add(std::clamp(p.reflectance, 0.0, 1.0));
}

void RasterPartial::merge(const RasterPartial& other) {
  for (const auto& [k, o] : other.cells_) {
    auto& c = cells_[k];
    c.count += o.count;
    c.max_z = std::max(c.max_z, o.max_z);
    c.reflectance.merge(o.reflectance);
  }
}

std::vector<BinaryRecord> RasterPartial::to_records() const {
  std::vector<BinaryRecord> out;
  out.reserve(cells_.size());
  for (const auto& [k, c] : cells_) {
    Bytes partials;
    for (double v : c.reflectance.partials()) binstream::put_f64(partials, v);
    out.push_back({FieldValue::int64(k.first), FieldValue::int64(k.second),
                   FieldValue::int64(static_cast<std::int64_t>(c.count)), FieldValue::float64(c.max_z),
                   FieldValue::bytes(std::move(partials))});
  }
  return out;
}

RasterPartial RasterPartial::from_records(const std::vector<BinaryRecord>& records, double cell_size) {
  RasterPartial out(cell_size);
  for (const auto& r : records) {
    if (r.size() != 5) throw Error(Errc::ParseError, "raster partial record needs 5 fields");
    const auto& b = r[4].as_bytes();
    if (b.size() % 8 != 0) throw Error(Errc::ParseError, "raster partial sum is not a Float64 array");
    std::vector<double> partials;
    for (std::size_t i = 0; i < b.size(); i += 8) partials.push_back(binstream::get_f64(b.data() + i));
    CellAccum c;
    c.count = static_cast<std::uint64_t>(r[2].as_int64());
    c.max_z = r[3].as_float64();
    c.reflectance = trainer::ExactSum::from_partials(std::move(partials));
    CellAccum& dst = out.cells_[{r[0].as_int64(), r[1].as_int64()}];
    dst.count += c.count;
    dst.max_z = std::max(dst.max_z, c.max_z);
    dst.reflectance.merge(c.reflectance);
  }
  return out;
}

GridMap RasterPartial::finalize() const {
  if (cells_.empty()) throw Error(Errc::EmptyInput, "no points to rasterize");
  std::int64_t lo_x = cells_.begin()->first.first, hi_x = lo_x;
  std::int64_t lo_y = cells_.begin()->first.second, hi_y = lo_y;
  for (const auto& [k, c] : cells_) {
    lo_x = std::min(lo_x, k.first), hi_x = std::max(hi_x, k.first);
    lo_y = std::min(lo_y, k.second), hi_y = std::max(hi_y, k.second);
  }
  GridMap m;
  m.cell_size = cell_;
  m.first_ix = lo_x;
  m.first_iy = lo_y;
  m.origin_x = static_cast<double>(lo_x) * cell_;
  m.origin_y = static_cast<double>(lo_y) * cell_;
  m.width = static_cast<std::uint32_t>(hi_x - lo_x + 1);
  m.height = static_cast<std::uint32_t>(hi_y - lo_y + 1);
  const std::size_t n = std::size_t{m.width} * m.height;
  m.elevation.assign(n, kNaN);
  m.reflectance.assign(n, kNaN);
  m.hits.assign(n, 0);
  for (const auto& [k, c] : cells_) {
    const auto i = m.index(static_cast<std::uint32_t>(k.first - lo_x), static_cast<std::uint32_t>(k.second - lo_y));
    m.hits[i] = static_cast<std::uint32_t>(c.count);
    m.elevation[i] = c.max_z;
    m.reflectance[i] = std::clamp(c.reflectance.value() / static_cast<double>(c.count), 0.0, 1.0);
  }
  return m;
}

GridMap rasterize(const std::vector<LidarScan>& world, double cell_size) {
  RasterPartial acc(cell_size);
  for (const auto& s : world) acc.add(s.points);
  return acc.finalize();
}

LabelSpec parse_label_spec(const json& j) {
  check_keys(j, {"lanes", "reference_lines", "signs"}, "label spec");
  LabelSpec spec;
  auto list = [&](const char* key) -> const json* {
    if (!j.contains(key)) return nullptr;
    if (!j.at(key).is_array()) malformed(std::string(key) + ": expected an array");
    return &j.at(key);
  };
  if (const json* lanes = list("lanes")) {
    for (std::size_t i = 0; i < lanes->size(); ++i) {
      const std::string where = "lanes[" + std::to_string(i) + "]";
      const json& l = (*lanes)[i];
      check_keys(l, {"id", "width", "polyline"}, where);
      LaneSpec lane;
      const json& id = required(l, "id", where);
      if (!id.is_number_integer()) malformed(where + ".id: expected an integer");
      lane.id = id.get<std::int64_t>();
      lane.width = finite_number(required(l, "width", where), where + ".width");
      if (!(lane.width > 0)) malformed(where + ".width: must be > 0");
      lane.polyline = parse_polyline(required(l, "polyline", where), where + ".polyline");
      spec.lanes.push_back(std::move(lane));
    }
  }
  if (const json* refs = list("reference_lines")) {
    for (std::size_t i = 0; i < refs->size(); ++i) {
      const std::string where = "reference_lines[" + std::to_string(i) + "]";
      check_keys((*refs)[i], {"polyline"}, where);
      spec.reference_lines.push_back(parse_polyline(required((*refs)[i], "polyline", where), where + ".polyline"));
    }
  }
  if (const json* signs = list("signs")) {
    for (std::size_t i = 0; i < signs->size(); ++i) {
      const std::string where = "signs[" + std::to_string(i) + "]";
      const json& s = (*signs)[i];
      check_keys(s, {"point", "kind", "value"}, where);
      SignSpec sign;
      std::tie(sign.x, sign.y) = parse_point(required(s, "point", where), where + ".point");
      const json& kind = required(s, "kind", where);
      if (!kind.is_string() || kind.get<std::string>().empty()) malformed(where + ".kind: expected a string");
      sign.kind = kind.get<std::string>();
      if (s.contains("value")) {
        sign.value = finite_number(s.at("value"), where + ".value");
      } else if (sign.kind == "speed_limit") {
        malformed(where + ".value: required for speed_limit");
      }
      spec.signs.push_back(std::move(sign));
    }
  }
  return spec;
}

LabelSpec load_label_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) malformed("cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) malformed(path.string() + ": invalid JSON");
  return parse_label_spec(j);
}

GridMap add_labels(GridMap map, const LabelSpec& spec) {
  for (const auto& lane : spec.lanes) {
    label_polyline(map, lane.polyline, lane.width / 2, {LabelKind::Lane, lane.id, {}, 0});
  }
  for (const auto& line : spec.reference_lines) {
    label_polyline(map, line, map.cell_size / 2, {LabelKind::ReferenceLine, 0, {}, 0});
  }
  for (const auto& s : spec.signs) {
    std::uint32_t c = 0, r = 0;
    if (!map.locate(s.x, s.y, c, r)) {
      map.warnings.push_back("sign '" + s.kind + "' at (" + json(s.x).dump() + ", " + json(s.y).dump() +
                             ") is outside the map; skipped");
      continue;
    }
    auto& cell = map.semantic[map.index(c, r)];
    cell.insert({LabelKind::TrafficSign, 0, s.kind, 0});
    if (s.kind == "speed_limit") cell.insert({LabelKind::SpeedLimit, 0, {}, s.value});
  }
  return map;
}

json map_header(const GridMap& m) {
  return {{"version", kMapVersion},
          {"origin", {m.origin_x, m.origin_y}},
          {"cell_size", m.cell_size},
          {"lattice_origin", {m.first_ix, m.first_iy}},
          {"width", m.width},
          {"height", m.height},
          {"layers", {"elevation", "reflectance", "hits", "semantic"}}};
}

Bytes encode_map(const GridMap& m) {
  const std::size_t n = std::size_t{m.width} * m.height;
  if (m.elevation.size() != n || m.reflectance.size() != n || m.hits.size() != n) {
    throw Error(Errc::InvalidArgument, "grid layers do not match width x height");
  }
  const std::string header = map_header(m).dump();
  Bytes out(kMagic, kMagic + 4);
  binstream::put_u32(out, kMapVersion);
  binstream::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + n * 20);
  for (double v : m.elevation) binstream::put_f64(out, std::isnan(v) ? kNaN : v);
  for (double v : m.reflectance) binstream::put_f64(out, std::isnan(v) ? kNaN : v);
  for (auto h : m.hits) binstream::put_u32(out, h);
  binstream::put_u32(out, static_cast<std::uint32_t>(m.semantic.size()));
  for (const auto& [cell, labels] : m.semantic) {
    binstream::put_u32(out, cell);
    binstream::encode_record(encode_labels(labels), out);
  }
  return out;
}

GridMap decode_map(const Bytes& b) {
  std::size_t pos = 0;
  auto need = [&](std::size_t k) {
    if (b.size() - pos < k) throw Error(Errc::ParseError, "map file truncated at byte " + std::to_string(pos));
  };
  need(12);
  if (!std::equal(kMagic, kMagic + 4, b.begin())) throw Error(Errc::ParseError, "bad map magic");
  if (binstream::get_u32(b.data() + 4) != kMapVersion) throw Error(Errc::ParseError, "unsupported map version");
  const std::uint32_t hlen = binstream::get_u32(b.data() + 8);
  pos = 12;
  need(hlen);
  const json h = json::parse(b.begin() + static_cast<std::ptrdiff_t>(pos),
                             b.begin() + static_cast<std::ptrdiff_t>(pos + hlen), nullptr, false);
  if (h.is_discarded() || !h.is_object()) throw Error(Errc::ParseError, "bad map header");
  pos += hlen;
  GridMap m;
  try {
    m.origin_x = h.at("origin").at(0).get<double>();
    m.origin_y = h.at("origin").at(1).get<double>();
    m.cell_size = h.at("cell_size").get<double>();
    m.first_ix = h.at("lattice_origin").at(0).get<std::int64_t>();
    m.first_iy = h.at("lattice_origin").at(1).get<std::int64_t>();
    m.width = h.at("width").get<std::uint32_t>();
    m.height = h.at("height").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("map header: ") + e.what());
  }
  const std::size_t n = std::size_t{m.width} * m.height;
  need(n * 20 + 4);
  m.elevation.resize(n);
  m.reflectance.resize(n);
  m.hits.resize(n);
  for (std::size_t i = 0; i < n; ++i, pos += 8) m.elevation[i] = binstream::get_f64(b.data() + pos);
  for (std::size_t i = 0; i < n; ++i, pos += 8) m.reflectance[i] = binstream::get_f64(b.data() + pos);
  for (std::size_t i = 0; i < n; ++i, pos += 4) m.hits[i] = binstream::get_u32(b.data() + pos);
  const std::uint32_t entries = binstream::get_u32(b.data() + pos);
  pos += 4;
  for (std::uint32_t e = 0; e < entries; ++e) {
    need(4);
    const std::uint32_t cell = binstream::get_u32(b.data() + pos);
    pos += 4;
    if (cell >= n) throw Error(Errc::ParseError, "label cell out of range");
    try {
      auto rec = binstream::decode_record(binstream::ByteView(b).subspan(pos));
      pos += rec.consumed;
      m.semantic[cell] = decode_labels(rec.value);
    } catch (const Error& e) {
      if (e.code() == Errc::ParseError) throw;
      throw Error(Errc::ParseError, std::string("label record: ") + e.what());
    }
  }
  if (pos != b.size()) throw Error(Errc::ParseError, "trailing bytes after map");
  return m;
}

void write_map_file(const std::filesystem::path& path, const GridMap& map) {
  binstream::write_file(path, encode_map(map));
}

GridMap read_map_file(const std::filesystem::path& path) { return decode_map(binstream::read_file(path)); }

}  // namespace adcloud::mapgen
