#include "causalprobe/payload.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "causalprobe/error.h"
#include "causalprobe/rng.h"

namespace causalprobe {
namespace {

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'P', 'R', 'B', 'P', 'A', 'Y', '1'};

template <typename T>
void put(std::string &buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read_doubles(double *dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  const std::string &data() const { return data_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FormatError("payload truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

const Eigen::MatrixXd &Payload::tensor(const std::string &name) const {
  for (const auto &t : tensors) {
    if (t.name == name) return t.value;
  }
  throw FormatError("payload has no tensor named '" + name + "'");
}

bool Payload::has_tensor(const std::string &name) const {
  for (const auto &t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_payload(std::ostream &out, const Payload &payload) {
  std::string buf(kMagic, sizeof(kMagic));
  const std::string header = payload.header.dump();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(header.size()));
  buf += header;
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(payload.tensors.size()));
  for (const auto &t : payload.tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) put<double>(buf, t.value(r, c));
    }
  }
  put<std::uint64_t>(buf, fnv1a(buf));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("failed writing payload");
}

Payload read_payload(std::istream &in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  if (r.size() < sizeof(kMagic) + 8 ||
      std::memcmp(r.data().data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a causalprobe payload (bad magic)");
  }
  std::uint64_t stored;
  std::memcpy(&stored, r.data().data() + r.size() - 8, 8);
  if (stored != fnv1a(std::string_view(r.data()).substr(0, r.size() - 8))) {
    throw FormatError("payload checksum mismatch");
  }
  r.bytes(sizeof(kMagic));
  Payload p;
  const auto header_len = r.get<std::uint32_t>();
  try {
    p.header = nlohmann::json::parse(r.bytes(header_len));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(std::string("payload header is not JSON: ") + e.what());
  }
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedMatrix t;
    t.name = r.bytes(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols != 0 && rows > (r.size() / 8) / cols) throw FormatError("payload tensor too large");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
    r.read_doubles(m.data(), static_cast<std::size_t>(rows * cols));
    t.value = m;
    p.tensors.push_back(std::move(t));
  }
  if (r.pos() != r.size() - 8) throw FormatError("trailing bytes in payload");
  return p;
}

void save_payload(const std::string &path, const Payload &payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError("cannot open '" + path + "' for writing");
  write_payload(out, payload);
}

Payload load_payload(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open '" + path + "'");
  return read_payload(in);
}

}  // namespace causalprobe
