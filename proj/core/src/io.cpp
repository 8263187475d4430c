#include "floe/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _WIN32
#include <process.h>
#define FLOE_GETPID _getpid
#else
#include <unistd.h>
#define FLOE_GETPID getpid
#endif

namespace floe {

std::uint16_t f32_to_f16(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, 4);
  std::uint32_t sign = (x >> 16) & 0x8000u;
  std::uint32_t mant = x & 0x007FFFFFu;
  int exp = static_cast<int>((x >> 23) & 0xFF) - 127;

  if (exp == 128) {  // inf / nan
    std::uint32_t m = mant ? 0x0200u | (mant >> 13) : 0u;
    return static_cast<std::uint16_t>(sign | 0x7C00u | m);
  }
  if (exp > 15) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow -> inf
  if (exp >= -14) {
    // Normal range: round 23-bit mantissa to 10 bits, ties to even.
    std::uint32_t m = mant;
    std::uint32_t half = ((exp + 15) << 10) | (m >> 13);
    std::uint32_t rem = m & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) half++;  // may carry into exp
    return static_cast<std::uint16_t>(sign | half);
  }
  if (exp >= -25) {
    // Subnormal half: value is (mant|implicit) * 2^(exp-23), quantized to
    // multiples of 2^-24, i.e. a right shift by (-exp - 1) with RNE.
    std::uint32_t m = mant | 0x00800000u;
    int drop = -exp - 1;  // 14..24
    std::uint32_t half = m >> drop;
    std::uint32_t rem = m & ((1u << drop) - 1);
    std::uint32_t tie = 1u << (drop - 1);
    if (rem > tie || (rem == tie && (half & 1u))) half++;
    return static_cast<std::uint16_t>(sign | half);
  }
  return static_cast<std::uint16_t>(sign);  // underflow to signed zero
}

float f16_to_f32(std::uint16_t h) {
  std::uint32_t sign = (static_cast<std::uint32_t>(h) & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      // Normalize the subnormal.
      int e = -1;
      do {
        mant <<= 1;
        e++;
      } while (!(mant & 0x400u));
      out = sign | ((112 - e) << 23) | ((mant & 0x3FFu) << 13);
    }
  } else if (exp == 31) {
    out = sign | 0x7F800000u | (mant << 13);
  } else {
    out = sign | ((exp + 112) << 23) | (mant << 13);
  }
  float f;
  std::memcpy(&f, &out, 4);
  return f;
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }
void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}
void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) {
  std::uint32_t x;
  std::memcpy(&x, &v, 4);
  u32(x);
}
void ByteWriter::bytes(const void *p, std::size_t n) {
  const auto *b = static_cast<const std::uint8_t *>(p);
  buf_.insert(buf_.end(), b, b + n);
}
void ByteWriter::f32_array(const float *p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) f32(p[i]);
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > n_) throw std::runtime_error("ByteReader: truncated input");
}
std::uint8_t ByteReader::u8() {
  need(1);
  return p_[pos_++];
}
std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}
std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}
std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}
float ByteReader::f32() {
  std::uint32_t x = u32();
  float f;
  std::memcpy(&f, &x, 4);
  return f;
}
void ByteReader::bytes(void *out, std::size_t n) {
  need(n);
  std::memcpy(out, p_ + pos_, n);
  pos_ += n;
}
void ByteReader::f32_array(float *out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f32();
}

void write_file_atomic(const std::string &path, const void *data, std::size_t n) {
  std::string tmp = path + ".tmp." + std::to_string(FLOE_GETPID());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + tmp);
    f.write(static_cast<const char *>(data), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("rename failed: " + path);
  }
}

void write_file_atomic(const std::string &path, const std::vector<std::uint8_t> &data) {
  write_file_atomic(path, data.data(), data.size());
}

void write_text_atomic(const std::string &path, const std::string &text) {
  write_file_atomic(path, text.data(), text.size());
}

std::vector<std::uint8_t> read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open: " + path);
  auto n = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> buf(n);
  f.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(n));
  if (!f) throw std::runtime_error("short read: " + path);
  return buf;
}

std::string read_text(const std::string &path) {
  auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

std::string Csv::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto &row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

static std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

Csv Csv::parse(const std::string &text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      csv.header = fields;
      first = false;
    } else {
      csv.rows.push_back(fields);
    }
  }
  return csv;
}

std::string format_f32(float v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace floe
