#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adcloud/mapgen/geometry.hpp"
#include "adcloud/trainer/exact_sum.hpp"

namespace adcloud::mapgen {

inline constexpr double kDefaultCellSize = 0.05;

enum class LabelKind { Lane = 0, ReferenceLine = 1, TrafficSign = 2, SpeedLimit = 3 };

struct Label {
  LabelKind kind = LabelKind::Lane;
  std::int64_t id = 0;  // LANE
  std::string text;     // TRAFFIC_SIGN kind
  double value = 0;     // SPEED_LIMIT

  auto operator<=>(const Label&) const = default;
  bool operator==(const Label&) const = default;
};

std::string to_string(const Label& l);

struct GridMap {
  double origin_x = 0, origin_y = 0;
  double cell_size = kDefaultCellSize;
  std::int64_t first_ix = 0, first_iy = 0;  // lattice index of cell (0, 0)
  std::uint32_t width = 0, height = 0;
  std::vector<double> elevation;    // NaN when empty
  std::vector<double> reflectance;  // NaN when empty
  std::vector<std::uint32_t> hits;
  std::map<std::uint32_t, std::set<Label>> semantic;
  std::vector<std::string> warnings;  // not serialized

  std::uint32_t index(std::uint32_t col, std::uint32_t row) const { return row * width + col; }
  /// Centre of a cell in world coordinates.
  double center_x(std::uint32_t col) const;
  double center_y(std::uint32_t row) const;
  /// Cell containing (x, y); false when outside the map.
  bool locate(double x, double y, std::uint32_t& col, std::uint32_t& row) const;
  std::size_t occupied() const;
};

/// Lattice index of a coordinate: floor(v / cell). Cells are anchored at 0.
std::int64_t lattice_index(double v, double cell);

/// Per-cell accumulator. The reflectance sum is exact, so merged cells do not
/// depend on how points were split across partitions or ordered within one.
struct CellAccum {
  std::uint64_t count = 0;
  double max_z = -std::numeric_limits<double>::infinity();
  trainer::ExactSum reflectance;
};

class RasterPartial {
 public:
  explicit RasterPartial(double cell_size = kDefaultCellSize);

  void add(const LidarPoint& p);
  void add(const std::vector<LidarPoint>& pts) {
    for (const auto& p : pts) add(p);
  }
  void merge(const RasterPartial& other);
  bool empty() const noexcept { return cells_.empty(); }
  double cell_size() const noexcept { return cell_; }
  const std::map<std::pair<std::int64_t, std::int64_t>, CellAccum>& cells() const noexcept { return cells_; }

  /// One record per cell: [Int64 ix, Int64 iy, Int64 count, Float64 max_z, Bytes partials].
  std::vector<BinaryRecord> to_records() const;
  static RasterPartial from_records(const std::vector<BinaryRecord>& records, double cell_size);  // ParseError

  /// Throws EmptyInput when no point was added.
  GridMap finalize() const;

 private:
  double cell_;
  std::map<std::pair<std::int64_t, std::int64_t>, CellAccum> cells_;
};

/// Throws EmptyInput, InvalidArgument (cell size <= 0).
GridMap rasterize(const std::vector<LidarScan>& world, double cell_size = kDefaultCellSize);

struct LaneSpec {
  std::int64_t id = 0;
  double width = 0;
  std::vector<std::pair<double, double>> polyline;
};
struct SignSpec {
  double x = 0, y = 0;
  std::string kind;
  double value = 0;
};
struct LabelSpec {
  std::vector<LaneSpec> lanes;
  std::vector<std::vector<std::pair<double, double>>> reference_lines;
  std::vector<SignSpec> signs;
};

/// {"lanes": [{"id", "width", "polyline": [[x, y], ...]}],
///  "reference_lines": [{"polyline": [...]}],
///  "signs": [{"point": [x, y], "kind", "value"}]}
/// Throws MalformedLabelSpec.
LabelSpec parse_label_spec(const nlohmann::json& j);
LabelSpec load_label_spec(const std::filesystem::path& path);

/// Lanes label cells whose centre lies within width/2 of a segment (flat
/// ends, round joins); reference lines use half a cell. Signs mark their
/// containing cell or, outside the map, add a warning.
GridMap add_labels(GridMap map, const LabelSpec& spec);

// "ADHM", u32 version, u32 header length, header JSON, layers, semantic list.
inline constexpr std::uint32_t kMapVersion = 1;
Bytes encode_map(const GridMap& map);
GridMap decode_map(const Bytes& bytes);  // ParseError
nlohmann::json map_header(const GridMap& map);
void write_map_file(const std::filesystem::path& path, const GridMap& map);
GridMap read_map_file(const std::filesystem::path& path);

}  // namespace adcloud::mapgen
