// SPDX-License-Identifier: Apache-2.0
#include "eqdp/npy.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "eqdp/error.hpp"

namespace eqdp {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicSize = 6;

// Minimal reader for the Python dict literal stored in the header.
class HeaderParser {
 public:
  HeaderParser(std::string text, std::string origin) : s_(std::move(text)), origin_(std::move(origin)) {}

  std::map<std::string, std::string> parse() {
    std::map<std::string, std::string> fields;
    expect('{');
    while (true) {
      skip_space();
      if (peek() == '}') break;
      const std::string key = quoted();
      expect(':');
      skip_space();
      fields[key] = value();
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect('}');
      return fields;
    }
    return fields;
  }

  static std::vector<std::size_t> shape(const std::string& text, const std::string& origin) {
    std::vector<std::size_t> dims;
    std::size_t i = 1;
    while (i < text.size() && text[i] != ')') {
      while (i < text.size() && (text[i] == ' ' || text[i] == ',')) ++i;
      if (i >= text.size() || text[i] == ')') break;
      std::size_t dim = 0;
      bool any = false;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        dim = dim * 10 + static_cast<std::size_t>(text[i++] - '0');
        any = true;
      }
      while (i < text.size() && text[i] == 'L') ++i;
      require(any, ErrorCode::kFormatError, origin + ": bad shape tuple " + text);
      dims.push_back(dim);
    }
    return dims;
  }

 private:
  char peek() const {
    require(pos_ < s_.size(), ErrorCode::kFormatError, origin_ + ": truncated NPY header");
    return s_[pos_];
  }
  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void expect(char c) {
    skip_space();
    require(peek() == c, ErrorCode::kFormatError,
            origin_ + ": malformed NPY header near offset " + std::to_string(pos_));
    ++pos_;
  }
  std::string quoted() {
    const char q = peek();
    require(q == '\'' || q == '"', ErrorCode::kFormatError, origin_ + ": expected quoted key");
    const std::size_t end = s_.find(q, pos_ + 1);
    require(end != std::string::npos, ErrorCode::kFormatError, origin_ + ": unterminated string");
    std::string out = s_.substr(pos_ + 1, end - pos_ - 1);
    pos_ = end + 1;
    return out;
  }
  std::string value() {
    const char c = peek();
    if (c == '\'' || c == '"') return quoted();
    if (c == '(') {
      const std::size_t end = s_.find(')', pos_);
      require(end != std::string::npos, ErrorCode::kFormatError, origin_ + ": unterminated tuple");
      std::string out = s_.substr(pos_, end - pos_ + 1);
      pos_ = end + 1;
      return out;
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    return s_.substr(start, pos_ - start);
  }

  std::string s_;
  std::string origin_;
  std::size_t pos_ = 0;
};

NpyDtype parse_descr(const std::string& descr, const std::string& origin) {
  if (descr == "|u1" || descr == "<u1" || descr == "u1") return NpyDtype::kU8;
  if (descr == "<f4") return NpyDtype::kF32;
  if (descr == "<i8") return NpyDtype::kI64;
  fail(ErrorCode::kUnsupportedDtype, origin + ": unsupported dtype '" + descr + "'");
}

template <typename T>
T load_le(const std::uint8_t* p) {
  static_assert(std::endian::native == std::endian::little);
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

std::string npy_descr(NpyDtype dtype) {
  switch (dtype) {
    case NpyDtype::kU8: return "|u1";
    case NpyDtype::kF32: return "<f4";
    case NpyDtype::kI64: return "<i8";
  }
  return "?";
}

std::size_t npy_item_size(NpyDtype dtype) {
  switch (dtype) {
    case NpyDtype::kU8: return 1;
    case NpyDtype::kF32: return 4;
    case NpyDtype::kI64: return 8;
  }
  return 0;
}

std::size_t NpyArray::count() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::vector<std::int64_t> NpyArray::as_int64() const {
  std::vector<std::int64_t> out(count());
  if (dtype == NpyDtype::kU8) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = payload[i];
  } else if (dtype == NpyDtype::kI64) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<std::int64_t>(&payload[8 * i]);
  } else {
    fail(ErrorCode::kUnsupportedDtype, "expected an integer array, got " + npy_descr(dtype));
  }
  return out;
}

std::vector<float> NpyArray::as_float() const {
  std::vector<float> out(count());
  if (dtype == NpyDtype::kF32) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_le<float>(&payload[4 * i]);
  } else {
    const auto ints = as_int64();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(ints[i]);
  }
  return out;
}

NpyArray parse_npy(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  require(bytes.size() >= 10 && std::memcmp(bytes.data(), kMagic, kMagicSize) == 0,
          ErrorCode::kFormatError, origin + ": missing NPY magic bytes");
  const int major = bytes[6];
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = bytes[8] | (bytes[9] << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    require(bytes.size() >= 12, ErrorCode::kFormatError, origin + ": truncated NPY preamble");
    header_len = load_le<std::uint32_t>(&bytes[8]);
    offset = 12;
  } else {
    fail(ErrorCode::kFormatError, origin + ": unknown NPY version " + std::to_string(major));
  }
  require(bytes.size() >= offset + header_len, ErrorCode::kFormatError,
          origin + ": truncated NPY header");
  const std::string header(bytes.begin() + offset, bytes.begin() + offset + header_len);
  auto fields = HeaderParser(header, origin).parse();
  require(fields.count("descr") && fields.count("fortran_order") && fields.count("shape"),
          ErrorCode::kFormatError, origin + ": NPY header lacks descr/fortran_order/shape");
  if (fields["fortran_order"] == "True")
    fail(ErrorCode::kUnsupportedLayout, origin + ": Fortran-order arrays are not supported");
  require(fields["fortran_order"] == "False", ErrorCode::kFormatError,
          origin + ": bad fortran_order value");

  NpyArray array;
  array.dtype = parse_descr(fields["descr"], origin);
  array.shape = HeaderParser::shape(fields["shape"], origin);
  const std::size_t expected = array.count() * npy_item_size(array.dtype);
  const std::size_t actual = bytes.size() - offset - header_len;
  require(actual == expected, ErrorCode::kFormatError,
          origin + ": payload holds " + std::to_string(actual) + " bytes, header implies " +
              std::to_string(expected));
  array.payload.assign(bytes.begin() + offset + header_len, bytes.end());
  return array;
}

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_npy(bytes, path.string());
}

std::vector<std::uint8_t> serialize_npy(const NpyArray& array) {
  require(array.payload.size() == array.count() * npy_item_size(array.dtype),
          ErrorCode::kLayoutMismatch, "payload size does not match shape");
  std::string shape = "(";
  for (std::size_t d : array.shape) shape += std::to_string(d) + ", ";
  if (array.shape.size() > 1) shape.resize(shape.size() - 2);
  else if (array.shape.size() == 1) shape.resize(shape.size() - 1);
  shape += ")";
  std::string header = "{'descr': '" + npy_descr(array.dtype) +
                       "', 'fortran_order': False, 'shape': " + shape + ", }";
  const std::size_t unpadded = kMagicSize + 4 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicSize);
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), array.payload.begin(), array.payload.end());
  return out;
}

void write_npy(const std::filesystem::path& path, const NpyArray& array) {
  const auto bytes = serialize_npy(array);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::kIoError, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace eqdp
