// Binary container used for probe checkpoints, counterfactual results and the
// embedding cache. Layout (all integers little-endian):
//
//   magic        8 bytes  "CPRBPAY1"
//   header_len   u32
//   header       header_len bytes of UTF-8 JSON
//   n_tensors    u32
//   per tensor:  name_len u32, name bytes, rows u64, cols u64,
//                rows*cols float64 values in row-major order
//   checksum     u64 FNV-1a over every preceding byte
//
// Values are stored bit-for-bit, so save/load round-trips exactly.

#ifndef CAUSALPROBE_PAYLOAD_H_
#define CAUSALPROBE_PAYLOAD_H_

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace causalprobe {

struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd value;
};

struct Payload {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedMatrix> tensors;

  const Eigen::MatrixXd &tensor(const std::string &name) const;  // throws FormatError
  bool has_tensor(const std::string &name) const;
};

void write_payload(std::ostream &out, const Payload &payload);
Payload read_payload(std::istream &in);  // throws FormatError on any defect

void save_payload(const std::string &path, const Payload &payload);
Payload load_payload(const std::string &path);

}  // namespace causalprobe

#endif  // CAUSALPROBE_PAYLOAD_H_
