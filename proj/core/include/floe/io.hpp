#ifndef FLOE_IO_HPP
#define FLOE_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

// Byte-level serialization primitives. All multi-byte values are written
// little-endian explicitly (not via memcpy of host types) so the formats are
// defined by this file, not by the platform. File writes go through a
// temp-file-then-rename path so readers never observe partial artifacts.

namespace floe {

// IEEE 754 binary16 conversion, round-to-nearest-even.
std::uint16_t f32_to_f16(float f);
float f16_to_f32(std::uint16_t h);

class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f16(float v) { u16(f32_to_f16(v)); }
  void bytes(const void *p, std::size_t n);
  void f32_array(const float *p, std::size_t n);
  const std::vector<std::uint8_t> &data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t *p, std::size_t n) : p_(p), n_(n) {}
  explicit ByteReader(const std::vector<std::uint8_t> &b)
      : ByteReader(b.data(), b.size()) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  float f16() { return f16_to_f32(u16()); }
  void bytes(void *out, std::size_t n);
  void f32_array(float *out, std::size_t n);
  std::size_t remaining() const { return n_ - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const;
  const std::uint8_t *p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

// Whole-file helpers. Writers create "<path>.tmp.<pid>" in the target
// directory and rename it into place.
void write_file_atomic(const std::string &path, const void *data, std::size_t n);
void write_file_atomic(const std::string &path, const std::vector<std::uint8_t> &data);
void write_text_atomic(const std::string &path, const std::string &text);
std::vector<std::uint8_t> read_file(const std::string &path);
std::string read_text(const std::string &path);

// Minimal CSV: comma-separated, newline rows, no quoting (all fields in this
// project are numeric or bare identifiers).
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string serialize() const;
  static Csv parse(const std::string &text);
  void save(const std::string &path) const { write_text_atomic(path, serialize()); }
  static Csv load(const std::string &path) { return parse(read_text(path)); }
};

// Shortest decimal form that round-trips the value (%.9g for f32 inputs,
// %.17g for doubles); used for every float that lands in a CSV.
std::string format_f32(float v);
std::string format_double(double v);

}  // namespace floe

#endif
