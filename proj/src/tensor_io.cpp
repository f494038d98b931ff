#include "animpref/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace animpref {

namespace {

static_assert(std::endian::native == std::endian::little, ".ten payloads are written in host order");

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 0) throw Error(ErrorKind::kIo, "negative dimension in .ten shape");
    n *= std::size_t(s);
  }
  return n;
}

}  // namespace

std::string encode_ten(const std::vector<int>& shape, const std::vector<double>& values) {
  if (element_count(shape) != values.size()) throw Error(ErrorKind::kShapeMismatch, "write_ten: shape does not match value count");
  nlohmann::ordered_json header;
  header["dtype"] = "f32";
  header["shape"] = shape;
  header["byte_order"] = "little";
  std::string out = header.dump();
  out.push_back('\n');
  const std::size_t offset = out.size();
  out.resize(offset + values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(out.data() + offset + i * sizeof(float), &f, sizeof(float));
  }
  return out;
}

TenData decode_ten(const std::string& bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error(ErrorKind::kIo, ".ten: missing header terminator");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string(".ten: bad header: ") + e.what());
  }
  if (header.value("dtype", "") != "f32") throw Error(ErrorKind::kIo, ".ten: dtype must be f32");
  if (header.value("byte_order", "") != "little") throw Error(ErrorKind::kIo, ".ten: byte_order must be little");
  TenData out;
  out.shape = header.at("shape").get<std::vector<int>>();
  const std::size_t n = element_count(out.shape);
  if (bytes.size() - nl - 1 != n * sizeof(float)) throw Error(ErrorKind::kIo, ".ten: payload size does not match shape");
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + nl + 1 + i * sizeof(float), sizeof(float));
    out.values[i] = f;
  }
  return out;
}

void write_ten(const std::filesystem::path& path, const std::vector<int>& shape, const std::vector<double>& values) {
  const std::string bytes = encode_ten(shape, values);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  os.write(bytes.data(), std::streamsize(bytes.size()));
  if (!os) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

TenData read_ten(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_ten(ss.str());
}

void write_ten(const std::filesystem::path& path, const Array4& a) {
  write_ten(path, std::vector<int>(a.shape.begin(), a.shape.end()), a.data);
}

Array4 read_ten4(const std::filesystem::path& path) {
  TenData t = read_ten(path);
  if (t.shape.size() != 4) throw Error(ErrorKind::kShapeMismatch, path.string() + ": expected a rank-4 tensor");
  Array4 a;
  std::copy(t.shape.begin(), t.shape.end(), a.shape.begin());
  a.data = std::move(t.values);
  return a;
}

void write_ten(const std::filesystem::path& path, const Mat& m) {
  write_ten(path, {int(m.rows()), int(m.cols())}, std::vector<double>(m.data(), m.data() + m.size()));
}

Mat read_ten_mat(const std::filesystem::path& path) {
  TenData t = read_ten(path);
  if (t.shape.size() != 2) throw Error(ErrorKind::kShapeMismatch, path.string() + ": expected a rank-2 tensor");
  Mat m(t.shape[0], t.shape[1]);
  std::copy(t.values.begin(), t.values.end(), m.data());
  return m;
}

}  // namespace animpref
