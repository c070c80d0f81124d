// Sample algorithm-under-test executables for replay and bridge tests.
//
//   adcloud-algo identity
//   adcloud-algo flip-even            flip payload byte 0 where timestamp is even
//   adcloud-algo busy <micros> [inner] burn CPU time per record, then echo
//   adcloud-algo rotate               rotate record fields left by one
//   adcloud-algo exit <code>          exit without reading or writing
//   adcloud-algo crash-once <marker> <after>
//                                     if <marker> exists, consume it and die
//                                     after <after> records; otherwise identity
//   adcloud-algo fail <message>       reply with an ERROR frame

#include <signal.h>
#include <time.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <algorithm>
#include <iostream>
#include <stdexcept>
#include <string>

#include "adcloud/binstream/bridge.hpp"

using adcloud::binstream::BinaryRecord;
using adcloud::binstream::FieldTag;
using adcloud::binstream::FieldValue;

namespace {

double thread_cpu_micros() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) * 1e6 + static_cast<double>(ts.tv_nsec) / 1e3;
}

// Spins on process CPU time rather than wall time so that co-scheduled
// children on a shared core do not overlap their "work".
void burn_cpu(double micros) {
  const double until = thread_cpu_micros() + micros;
  volatile std::uint64_t sink = 0;
  while (thread_cpu_micros() < until) {
    for (int i = 0; i < 64; ++i) sink = sink * 6364136223846793005ULL + 1442695040888963407ULL;
  }
}

BinaryRecord flip_even(const BinaryRecord& r) {
  if (r.size() < 3 || r[1].tag() != FieldTag::Int64 || r[2].tag() != FieldTag::Bytes) {
    throw std::runtime_error("flip-even expects [topic, timestamp, payload] records");
  }
  if (r[1].as_int64() % 2 != 0) return r;
  BinaryRecord out = r;
  auto payload = r[2].as_bytes();
  if (!payload.empty()) payload[0] ^= 0xFF;
  out.fields[2] = FieldValue::bytes(std::move(payload));
  return out;
}

BinaryRecord rotate(const BinaryRecord& r) {
  BinaryRecord out = r;
  if (!out.fields.empty()) std::rotate(out.fields.begin(), out.fields.begin() + 1, out.fields.end());
  return out;
}

int usage() {
  std::cerr << "usage: adcloud-algo identity|flip-even|busy <us>|rotate|exit <code>|crash-once <marker> <after>|"
               "fail <message>\n";
  return 64;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) return usage();
  const std::string mode = argv[1];
  if (mode == "identity") {
    return adcloud::binstream::serve_filter([](const BinaryRecord& r) { return r; });
  }
  if (mode == "flip-even") {
    return adcloud::binstream::serve_filter([](const BinaryRecord& r) { return flip_even(r); });
  }
  if (mode == "rotate") {
    return adcloud::binstream::serve_filter([](const BinaryRecord& r) { return rotate(r); });
  }
  if (mode == "busy" && argc >= 3) {
    const double micros = std::atof(argv[2]);
    return adcloud::binstream::serve_filter([micros](const BinaryRecord& r) {
      burn_cpu(micros);
      return r;
    });
  }
  if (mode == "exit" && argc >= 3) {
    return std::atoi(argv[2]);
  }
  if (mode == "crash-once" && argc >= 4) {
    const std::filesystem::path marker = argv[2];
    const long after = std::atol(argv[3]);
    // rename() is atomic, so exactly one child claims the marker.
    const auto claimed = marker.string() + ".claimed." + std::to_string(::getpid());
    const bool armed = std::rename(marker.c_str(), claimed.c_str()) == 0;
    long seen = 0;
    return adcloud::binstream::serve_filter([&](const BinaryRecord& r) {
      if (armed && ++seen > after) ::kill(::getpid(), SIGKILL);
      return r;
    });
  }
  if (mode == "fail") {
    const std::string message = argc >= 3 ? argv[2] : "algorithm failure";
    return adcloud::binstream::serve_filter(
        [&](const BinaryRecord&) -> std::optional<BinaryRecord> { throw std::runtime_error(message); });
  }
  return usage();
}
