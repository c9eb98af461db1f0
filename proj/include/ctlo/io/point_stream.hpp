#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctlo/config.hpp"
#include "ctlo/types.hpp"

namespace ctlo::io {

// Little-endian binary point stream: 8-byte magic, uint32 version, then
// packed 24-byte records (t f64, x y z f32, sensor u8, 3 pad bytes).
inline constexpr std::array<char, 8> kPointMagic = {'C', 'T', 'L', 'O',
                                                    'P', 'T', 'S', '\0'};
inline constexpr uint32_t kPointVersion = 1;
inline constexpr size_t kRecordSize = 24;

static_assert(std::endian::native == std::endian::little,
              "point stream IO assumes a little-endian host");

struct PackedRecord {
  double t;
  float x, y, z;
  uint8_t sensor;
  uint8_t pad[3];
};
static_assert(sizeof(PackedRecord) == kRecordSize);

class PointWriter {
 public:
  explicit PointWriter(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw DataError("point writer: cannot open " + path);
    os_.write(kPointMagic.data(), kPointMagic.size());
    const uint32_t v = kPointVersion;
    os_.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }

  void write(const Measurement& m) {
    PackedRecord r{};
    r.t = m.t;
    r.x = static_cast<float>(m.p.x());
    r.y = static_cast<float>(m.p.y());
    r.z = static_cast<float>(m.p.z());
    r.sensor = m.sensor;
    os_.write(reinterpret_cast<const char*>(&r), sizeof(r));
  }

  void write(std::span<const Measurement> ms) {
    for (const auto& m : ms) write(m);
  }

  void close() { os_.close(); }

 private:
  std::ofstream os_;
};

/// Streaming reader for both the binary format and the CSV fallback
/// (`t,x,y,z,sensor` per line); the format is sniffed from the magic bytes.
/// Validates finiteness and per-sensor timestamp monotonicity; malformed
/// records raise DataError naming the byte offset (binary) or line (CSV).
class PointReader {
 public:
  explicit PointReader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
    if (!is_) throw DataError("point reader: cannot open " + path);
    std::array<char, 8> magic{};
    is_.read(magic.data(), magic.size());
    if (is_.gcount() == 8 && magic == kPointMagic) {
      binary_ = true;
      uint32_t version = 0;
      is_.read(reinterpret_cast<char*>(&version), sizeof(version));
      if (is_.gcount() != sizeof(version) || version != kPointVersion)
        throw DataError(path + ": unsupported point stream version");
      offset_ = 12;
    } else {
      binary_ = false;
      is_.clear();
      is_.seekg(0);
    }
  }

  /// Reads the next record; returns false at a clean end of stream.
  bool next(Measurement& m) {
    return binary_ ? next_binary(m) : next_csv(m);
  }

  std::vector<Measurement> read_all() {
    std::vector<Measurement> out;
    Measurement m;
    while (next(m)) out.push_back(m);
    return out;
  }

 private:
  bool next_binary(Measurement& m) {
    PackedRecord r{};
    is_.read(reinterpret_cast<char*>(&r), sizeof(r));
    const auto got = is_.gcount();
    if (got == 0) return false;
    if (got != static_cast<std::streamsize>(sizeof(r)))
      throw DataError(path_ + ": truncated record at byte offset " + std::to_string(offset_));
    validate(m = Measurement{Vec3(r.x, r.y, r.z), r.t, r.sensor},
             "byte offset " + std::to_string(offset_));
    offset_ += sizeof(r);
    return true;
  }

  bool next_csv(Measurement& m) {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_;
      if (line.empty() || line[0] == '#') continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream iss(line);
      double t, x, y, z;
      int sensor;
      if (!(iss >> t >> x >> y >> z >> sensor) || sensor < 0 || sensor > 255)
        throw DataError(path_ + ": malformed record at line " + std::to_string(line_));
      validate(m = Measurement{Vec3(x, y, z), t, static_cast<uint8_t>(sensor)},
               "line " + std::to_string(line_));
      return true;
    }
    return false;
  }

  void validate(const Measurement& m, const std::string& where) {
    if (!std::isfinite(m.t) || !m.p.allFinite())
      throw DataError(path_ + ": non-finite record at " + where);
    auto [it, fresh] = last_t_.try_emplace(m.sensor, m.t);
    if (!fresh) {
      if (m.t < it->second)
        throw DataError(path_ + ": timestamp regression for sensor " +
                        std::to_string(m.sensor) + " at " + where);
      it->second = m.t;
    }
  }

  std::ifstream is_;
  std::string path_;
  bool binary_ = true;
  size_t offset_ = 0;
  size_t line_ = 0;
  std::unordered_map<int, double> last_t_;
};

inline void write_points(const std::string& path, std::span<const Measurement> ms) {
  PointWriter w(path);
  w.write(ms);
}

inline void write_points_csv(const std::string& path, std::span<const Measurement> ms) {
  std::ofstream os(path);
  if (!os) throw DataError("point writer: cannot open " + path);
  os.precision(17);
  for (const auto& m : ms)
    os << m.t << ',' << m.p.x() << ',' << m.p.y() << ',' << m.p.z() << ','
       << static_cast<int>(m.sensor) << '\n';
}

inline std::vector<Measurement> read_points(const std::string& path) {
  return PointReader(path).read_all();
}

}  // namespace ctlo::io
