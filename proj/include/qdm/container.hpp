#pragma once

// Self-describing binary container shared by dataset files and checkpoints.
//
//   magic   8 bytes, e.g. "QDMDATA1"
//   u64     header length (little-endian)
//   header  UTF-8 JSON; "buffers" lists {name, dtype, count} in file order
//   payload raw little-endian buffers, concatenated in the listed order
//
// dtypes: "f64" (double), "i64" (int64). Doubles are stored bit-for-bit.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qdm {

class Container {
 public:
  nlohmann::json header = nlohmann::json::object();

  void put(const std::string& name, std::vector<double> values);
  void put(const std::string& name, std::vector<std::int64_t> values);
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<std::int64_t>& i64(const std::string& name) const;
  bool has(const std::string& name) const;

  void write(const std::string& path, const std::string& magic) const;
  static Container read(const std::string& path, const std::string& magic);

 private:
  struct Buffer {
    std::string name;
    bool is_double = true;
    std::vector<double> f;
    std::vector<std::int64_t> i;
  };
  const Buffer& find(const std::string& name) const;
  std::vector<Buffer> buffers_;
};

}  // namespace qdm
