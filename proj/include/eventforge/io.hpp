#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eventforge/core.hpp"
#include "eventforge/event_sim.hpp"
#include "eventforge/geometry.hpp"
#include "eventforge/repr.hpp"
#include "eventforge/voxel_render.hpp"

namespace eventforge {
namespace detail {

// All binary formats are little-endian regardless of host.
template <typename T>
void put_le(std::string& buf, T value) {
  for (size_t i = 0; i < sizeof(T); ++i)
    buf.push_back(static_cast<char>((static_cast<uint64_t>(value) >> (8 * i)) &
                                    0xff));
}

inline void put_f32(std::string& buf, float value) {
  uint32_t bits;
  std::memcpy(&bits, &value, 4);
  put_le<uint32_t>(buf, bits);
}

class BinReader {
 public:
  BinReader(const std::string& path, std::string format)
      : path_(path), format_(std::move(format)) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(format_ + ": cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    data_ = ss.str();
  }

  void expect_magic(const char* magic) {
    if (data_.size() < 4 || std::memcmp(data_.data(), magic, 4) != 0) fail(0, "bad magic");
    pos_ = 4;
  }

  template <typename T>
  T get_le() {
    need(sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<uint64_t>(
               static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  float get_f32() {
    const uint32_t bits = get_le<uint32_t>();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

  size_t offset() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }

  void expect_end() {
    if (pos_ != data_.size())
      fail(pos_, std::to_string(data_.size() - pos_) + " trailing bytes");
  }

  [[noreturn]] void fail(size_t offset, const std::string& what) const {
    throw DataError(format_ + ": " + path_ + ": " + what + " at offset " +
                    std::to_string(offset));
  }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size()) fail(pos_, "truncated");
  }

  std::string path_, format_, data_;
  size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::string& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("write failed: " + path);
}

}  // namespace detail

// --- PFM: grayscale float map, rows bottom-up, negative scale = little
// endian. Invalid pixels round-trip as quiet NaN.

inline void write_pfm(const std::string& path, const GridD& img) {
  if (img.empty()) throw UsageError("write_pfm: empty image");
  std::string buf;
  char header[64];
  std::snprintf(header, sizeof(header), "Pf\n%d %d\n-1.0\n", img.width(),
                img.height());
  buf.append(header);
  for (int y = img.height() - 1; y >= 0; --y)
    for (int x = 0; x < img.width(); ++x)
      detail::put_f32(buf, static_cast<float>(img.at(x, y)));
  detail::write_file(path, buf);
}

inline GridD read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("pfm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  f >> magic >> w >> h >> scale;
  if (magic != "Pf") throw DataError("pfm: " + path + ": not a grayscale PFM");
  if (w <= 0 || h <= 0) throw DataError("pfm: " + path + ": bad dimensions");
  if (scale == 0.0) throw DataError("pfm: " + path + ": zero scale");
  f.get();  // single whitespace after the scale line
  std::vector<char> raw(static_cast<size_t>(w) * h * 4);
  f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!f) throw DataError("pfm: " + path + ": truncated pixel data");
  const bool swap = scale > 0.0;  // positive scale marks big-endian data
  GridD img(w, h);
  size_t i = 0;
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x, i += 4) {
      char b[4] = {raw[i], raw[i + 1], raw[i + 2], raw[i + 3]};
      if (swap) {
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
      float v;
      std::memcpy(&v, b, 4);
      img.at(x, y) = v;
    }
  return img;
}

// --- PPM: 8-bit binary P6.

inline void write_ppm(const std::string& path, const Image& img) {
  if (img.empty() || img.channels() != 3)
    throw UsageError("write_ppm: need a 3-channel image");
  std::string buf;
  char header[64];
  std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", img.width(),
                img.height());
  buf.append(header);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        buf.push_back(static_cast<char>(
            static_cast<unsigned char>(std::lround(v * 255.0))));
      }
  detail::write_file(path, buf);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("ppm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6") throw DataError("ppm: " + path + ": not a binary PPM");
  if (w <= 0 || h <= 0 || maxval != 255)
    throw DataError("ppm: " + path + ": unsupported header");
  f.get();
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size()));
  if (!f) throw DataError("ppm: " + path + ": truncated pixel data");
  Image img(w, h, 3);
  for (size_t i = 0; i < raw.size(); ++i)
    img.data()[i] = raw[i] / 255.0;
  return img;
}

// --- SVXL: voxel scene. Magic, u64 count, then per voxel eight float32:
// center xyz, size, alpha, rgb.

inline void write_svxl(const std::string& path, const SparseVoxelScene& scene) {
  std::string buf("SVXL");
  detail::put_le<uint64_t>(buf, scene.voxels.size());
  for (const Voxel& v : scene.voxels) {
    for (int i = 0; i < 3; ++i)
      detail::put_f32(buf, static_cast<float>(v.center[i]));
    detail::put_f32(buf, static_cast<float>(v.size));
    detail::put_f32(buf, static_cast<float>(v.alpha));
    for (int i = 0; i < 3; ++i)
      detail::put_f32(buf, static_cast<float>(v.color[i]));
  }
  detail::write_file(path, buf);
}

inline SparseVoxelScene read_svxl(const std::string& path) {
  detail::BinReader r(path, "svxl");
  r.expect_magic("SVXL");
  const uint64_t count = r.get_le<uint64_t>();
  if (r.remaining() != count * 32)
    r.fail(r.offset(), "payload size does not match voxel count");
  SparseVoxelScene scene;
  scene.voxels.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Voxel v;
    for (int k = 0; k < 3; ++k) v.center[k] = r.get_f32();
    v.size = r.get_f32();
    v.alpha = r.get_f32();
    for (int k = 0; k < 3; ++k) v.color[k] = r.get_f32();
    scene.voxels.push_back(v);
  }
  scene.validate();
  return scene;
}

// --- EVT1: event stream. Magic, u16 width, u16 height, u64 count,
// u64 t_begin, u64 t_end, then 16-byte records: u64 t, u16 x, u16 y, i8 p,
// 3 pad bytes.

inline void write_evt1(const std::string& path, const EventStream& stream) {
  stream.validate();
  std::string buf("EVT1");
  detail::put_le<uint16_t>(buf, stream.width);
  detail::put_le<uint16_t>(buf, stream.height);
  detail::put_le<uint64_t>(buf, stream.events.size());
  detail::put_le<uint64_t>(buf, stream.t_begin);
  detail::put_le<uint64_t>(buf, stream.t_end);
  for (const Event& e : stream.events) {
    detail::put_le<uint64_t>(buf, e.t);
    detail::put_le<uint16_t>(buf, e.x);
    detail::put_le<uint16_t>(buf, e.y);
    buf.push_back(static_cast<char>(e.p));
    buf.append(3, '\0');
  }
  detail::write_file(path, buf);
}

inline EventStream read_evt1(const std::string& path) {
  detail::BinReader r(path, "evt1");
  r.expect_magic("EVT1");
  EventStream stream;
  stream.width = r.get_le<uint16_t>();
  stream.height = r.get_le<uint16_t>();
  const uint64_t count = r.get_le<uint64_t>();
  stream.t_begin = r.get_le<uint64_t>();
  stream.t_end = r.get_le<uint64_t>();
  if (r.remaining() != count * 16)
    r.fail(r.offset(), "payload size does not match event count");
  stream.events.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const size_t rec_off = r.offset();
    Event e;
    e.t = r.get_le<uint64_t>();
    e.x = r.get_le<uint16_t>();
    e.y = r.get_le<uint16_t>();
    e.p = static_cast<int8_t>(r.get_le<uint8_t>());
    r.get_le<uint8_t>();
    r.get_le<uint8_t>();
    r.get_le<uint8_t>();
    if (e.p != 1 && e.p != -1) r.fail(rec_off, "bad polarity");
    if (e.x >= stream.width || e.y >= stream.height)
      r.fail(rec_off, "event out of bounds");
    if (!stream.events.empty() && e.t < stream.events.back().t)
      r.fail(rec_off, "timestamps not sorted");
    stream.events.push_back(e);
  }
  r.expect_end();
  stream.validate();
  return stream;
}

// --- STK1: stacked planes. Magic, u32 H, u32 W, u32 C, then C row-major
// float32 planes.

inline void write_stk1(const std::string& path, const Image& img) {
  if (img.empty()) throw UsageError("write_stk1: empty image");
  std::string buf("STK1");
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(img.height()));
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(img.width()));
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(img.channels()));
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        detail::put_f32(buf, static_cast<float>(img.at(x, y, c)));
  detail::write_file(path, buf);
}

inline Image read_stk1(const std::string& path) {
  detail::BinReader r(path, "stk1");
  r.expect_magic("STK1");
  const uint32_t h = r.get_le<uint32_t>();
  const uint32_t w = r.get_le<uint32_t>();
  const uint32_t c = r.get_le<uint32_t>();
  if (w == 0 || h == 0 || c == 0) r.fail(4, "zero dimension");
  if (r.remaining() != static_cast<size_t>(w) * h * c * 4)
    r.fail(r.offset(), "payload size does not match header");
  Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (uint32_t ci = 0; ci < c; ++ci)
    for (uint32_t y = 0; y < h; ++y)
      for (uint32_t x = 0; x < w; ++x)
        img.at(static_cast<int>(x), static_cast<int>(y),
               static_cast<int>(ci)) = r.get_f32();
  return img;
}

// --- Poses: one 3x4 row-major [R|t] per line, '#' comments allowed.

inline std::vector<Pose> read_poses(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("poses: cannot open " + path);
  std::vector<Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double v[12];
    for (int i = 0; i < 12; ++i)
      if (!(ss >> v[i]))
        throw DataError("poses: " + path + ":" + std::to_string(line_no) +
                        ": expected 12 values");
    std::string rest;
    if (ss >> rest)
      throw DataError("poses: " + path + ":" + std::to_string(line_no) +
                      ": trailing tokens");
    Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[r * 4 + c];
      p.translation(r) = v[r * 4 + 3];
    }
    poses.push_back(p);
  }
  return poses;
}

inline void write_poses(const std::string& path,
                        const std::vector<Pose>& poses) {
  std::ostringstream out;
  for (const Pose& p : poses) {
    char buf[64];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) {
        const double v = c < 3 ? p.rotation(r, c) : p.translation(r);
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf << (r == 2 && c == 3 ? "" : " ");
      }
    out << "\n";
  }
  detail::write_file(path, out.str());
}

}  // namespace eventforge
