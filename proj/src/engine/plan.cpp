#include "adcloud/engine/plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adcloud/error.hpp"

namespace adcloud::engine {

using binstream::FieldTag;
using binstream::FieldValue;
using nlohmann::json;

void validate_plan(const StagePlan& plan, const OpRegistry& registry) {
  if (plan.ops.empty()) throw Error(Errc::InvalidPlan, "plan has no ops");
  if (plan.source.id.empty() || plan.source.num_partitions == 0) throw Error(Errc::InvalidPlan, "plan has no source");
  for (std::size_t i = 0; i < plan.ops.size(); ++i) {
    const auto& op = plan.ops[i];
    if (op.kind == OpKind::Reduce && i + 1 != plan.ops.size()) {
      throw Error(Errc::InvalidPlan, "REDUCE must be the last op");
    }
    const auto& impl = registry.at(op.name, plan.backend);
    if (impl.kind != op.kind) {
      throw Error(Errc::InvalidPlan, "op '" + op.name + "' is registered as " + to_string(impl.kind) + ", plan says " +
                                         to_string(op.kind));
    }
  }
}

std::vector<std::vector<BinaryRecord>> partition_records(std::vector<BinaryRecord> records,
                                                         const std::vector<std::size_t>& file_ends,
                                                         const Partitioner& partitioner) {
  std::vector<std::vector<BinaryRecord>> parts;
  switch (partitioner.kind) {
    case Partitioner::Kind::ByFile: {
      std::size_t begin = 0;
      for (std::size_t end : file_ends) {
        if (end < begin || end > records.size()) throw Error(Errc::InvalidArgument, "bad file boundaries");
        parts.emplace_back(std::make_move_iterator(records.begin() + begin),
                           std::make_move_iterator(records.begin() + end));
        begin = end;
      }
      if (begin != records.size()) throw Error(Errc::InvalidArgument, "file boundaries do not cover all records");
      break;
    }
    case Partitioner::Kind::ByRecordCount: {
      if (partitioner.records == 0) throw Error(Errc::InvalidArgument, "BY_RECORD_COUNT needs n > 0");
      for (std::size_t i = 0; i < records.size(); i += partitioner.records) {
        const auto end = std::min(records.size(), i + partitioner.records);
        parts.emplace_back(std::make_move_iterator(records.begin() + i), std::make_move_iterator(records.begin() + end));
      }
      break;
    }
    case Partitioner::Kind::ByTimeWindow: {
      if (!(partitioner.seconds > 0)) throw Error(Errc::InvalidArgument, "BY_TIME_WINDOW needs seconds > 0");
      const auto window = static_cast<std::int64_t>(std::llround(partitioner.seconds * 1e9));
      if (window <= 0) throw Error(Errc::InvalidArgument, "time window rounds to zero");
      std::int64_t lo = std::numeric_limits<std::int64_t>::max();
      for (const auto& r : records) {
        if (r.size() < 2 || r[1].tag() != FieldTag::Int64) {
          throw Error(Errc::ParseError, "BY_TIME_WINDOW needs an Int64 timestamp in field 1");
        }
        lo = std::min(lo, r[1].as_int64());
      }
      for (auto& r : records) {
        const auto idx = static_cast<std::size_t>((r[1].as_int64() - lo) / window);
        if (parts.size() <= idx) parts.resize(idx + 1);
        parts[idx].push_back(std::move(r));
      }
      break;
    }
  }
  if (parts.empty()) parts.emplace_back();
  return parts;
}

JobMetrics& JobMetrics::operator+=(const JobMetrics& o) {
  wall_seconds += o.wall_seconds;
  for (const auto& s : o.stage_seconds) stage_seconds.push_back(s);
  tasks.insert(tasks.end(), o.tasks.begin(), o.tasks.end());
  if (storage.tiers.empty()) {
    storage = o.storage;
  } else if (!o.storage.tiers.empty()) {
    storage += o.storage;
    // residency is a level, not a flow
    for (std::size_t i = 0; i < storage.tiers.size(); ++i) {
      storage.tiers[i].second.bytes_resident = o.storage.tiers[i].second.bytes_resident;
    }
  }
  bytes_persisted += o.bytes_persisted;
  records_out = o.records_out;
  bytes_out = o.bytes_out;
  retries += o.retries;
  workers = std::max(workers, o.workers);
  return *this;
}

json to_json(const storage::StoreStats& s) {
  json tiers = json::array();
  for (const auto& [name, c] : s.tiers) {
    tiers.push_back({{"name", name},
                     {"hits", c.hits},
                     {"misses", c.misses},
                     {"bytes_resident", c.bytes_resident},
                     {"bytes_evicted", c.bytes_evicted},
                     {"bytes_persisted", c.bytes_persisted},
                     {"bytes_read", c.bytes_read},
                     {"bytes_written", c.bytes_written}});
  }
  return {{"tiers", tiers}};
}

json to_json(const JobMetrics& m) {
  json stages = json::array();
  for (const auto& [op, secs] : m.stage_seconds) stages.push_back({{"op", op}, {"seconds", secs}});
  json tasks = json::array();
  for (const auto& t : m.tasks) {
    tasks.push_back({{"partition", t.partition},
                     {"worker", t.worker},
                     {"attempt", t.attempt},
                     {"seconds", t.seconds},
                     {"ok", t.ok},
                     {"error", t.error},
                     {"op_seconds", t.op_seconds},
                     {"records_out", t.records_out},
                     {"bytes_out", t.bytes_out}});
  }
  return {{"job_id", m.job_id},
          {"workers", m.workers},
          {"wall_seconds", m.wall_seconds},
          {"stage_seconds", stages},
          {"tasks", tasks},
          {"storage", to_json(m.storage)},
          {"bytes_persisted", m.bytes_persisted},
          {"records_out", m.records_out},
          {"bytes_out", m.bytes_out},
          {"retries", m.retries}};
}

namespace {

std::string to_hex(const binstream::Bytes& b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (auto c : b) {
    s += kDigits[c >> 4];
    s += kDigits[c & 15];
  }
  return s;
}

binstream::Bytes from_hex(const std::string& s) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::ParseError, "bad hex digit");
  };
  if (s.size() % 2) throw Error(Errc::ParseError, "odd-length hex");
  binstream::Bytes out;
  for (std::size_t i = 0; i < s.size(); i += 2) out.push_back(static_cast<std::uint8_t>(nibble(s[i]) * 16 + nibble(s[i + 1])));
  return out;
}

}  // namespace

json record_to_json(const BinaryRecord& r) {
  json out = json::array();
  for (const auto& f : r.fields) {
    switch (f.tag()) {
      case FieldTag::Bytes: out.push_back({{"bytes_hex", to_hex(f.as_bytes())}}); break;
      case FieldTag::Utf8: out.push_back({{"utf8", f.as_utf8()}}); break;
      case FieldTag::Int64: out.push_back({{"int64", f.as_int64()}}); break;
      case FieldTag::Float64: out.push_back({{"float64", f.as_float64()}}); break;
    }
  }
  return out;
}

BinaryRecord record_from_json(const json& j) {
  if (!j.is_array()) throw Error(Errc::ParseError, "record must be a JSON array");
  BinaryRecord r;
  for (const auto& f : j) {
    if (!f.is_object() || f.size() != 1) throw Error(Errc::ParseError, "field must be a one-key object");
    const std::string k = f.begin().key();
    const json& v = f.begin().value();
    try {
      if (k == "utf8") {
        r.fields.push_back(FieldValue::utf8(v.get<std::string>()));
      } else if (k == "int64") {
        r.fields.push_back(FieldValue::int64(v.get<std::int64_t>()));
      } else if (k == "float64") {
        r.fields.push_back(FieldValue::float64(v.get<double>()));
      } else if (k == "bytes_hex") {
        r.fields.push_back(FieldValue::bytes(from_hex(v.get<std::string>())));
      } else {
        throw Error(Errc::ParseError, "unknown field type '" + k + "'");
      }
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, e.what());
    }
  }
  return r;
}

}  // namespace adcloud::engine
