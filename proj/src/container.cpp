#include "qdm/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "qdm/error.hpp"

namespace qdm {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

void Container::put(const std::string& name, std::vector<double> values) {
  Buffer b;
  b.name = name;
  b.f = std::move(values);
  buffers_.push_back(std::move(b));
}

void Container::put(const std::string& name, std::vector<std::int64_t> values) {
  Buffer b;
  b.name = name;
  b.is_double = false;
  b.i = std::move(values);
  buffers_.push_back(std::move(b));
}

bool Container::has(const std::string& name) const {
  for (const auto& b : buffers_)
    if (b.name == name) return true;
  return false;
}

const Container::Buffer& Container::find(const std::string& name) const {
  for (const auto& b : buffers_)
    if (b.name == name) return b;
  throw ParseError("container has no buffer named '" + name + "'");
}

const std::vector<double>& Container::f64(const std::string& name) const {
  const Buffer& b = find(name);
  if (!b.is_double) throw ParseError("buffer '" + name + "' is not f64");
  return b.f;
}

const std::vector<std::int64_t>& Container::i64(const std::string& name) const {
  const Buffer& b = find(name);
  if (b.is_double) throw ParseError("buffer '" + name + "' is not i64");
  return b.i;
}

void Container::write(const std::string& path, const std::string& magic) const {
  if (magic.size() != 8) throw ContractError("container magic must be 8 bytes");
  nlohmann::json h = header;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& b : buffers_)
    dir.push_back({{"name", b.name}, {"dtype", b.is_double ? "f64" : "i64"}, {"count", b.is_double ? b.f.size() : b.i.size()}});
  h["buffers"] = dir;
  const std::string text = h.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(magic.data(), 8);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : buffers_) {
    if (b.is_double)
      out.write(reinterpret_cast<const char*>(b.f.data()), static_cast<std::streamsize>(b.f.size() * sizeof(double)));
    else
      out.write(reinterpret_cast<const char*>(b.i.data()),
                static_cast<std::streamsize>(b.i.size() * sizeof(std::int64_t)));
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

Container Container::read(const std::string& path, const std::string& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char m[8];
  if (!in.read(m, 8) || std::string(m, 8) != magic)
    throw ParseError("'" + path + "' is not a " + magic + " file");
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ULL << 32))
    throw ParseError("'" + path + "': corrupt header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ParseError("'" + path + "': truncated header");
  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("'" + path + "': header is not valid JSON: " + e.what());
  }
  const nlohmann::json dir = c.header.value("buffers", nlohmann::json::array());
  c.header.erase("buffers");
  for (const auto& d : dir) {
    Buffer b;
    b.name = d.at("name").get<std::string>();
    const auto count = d.at("count").get<std::size_t>();
    const std::string dtype = d.at("dtype").get<std::string>();
    if (dtype == "f64") {
      b.f.resize(count);
      in.read(reinterpret_cast<char*>(b.f.data()), static_cast<std::streamsize>(count * sizeof(double)));
    } else if (dtype == "i64") {
      b.is_double = false;
      b.i.resize(count);
      in.read(reinterpret_cast<char*>(b.i.data()), static_cast<std::streamsize>(count * sizeof(std::int64_t)));
    } else {
      throw ParseError("'" + path + "': unknown dtype " + dtype);
    }
    if (!in) throw ParseError("'" + path + "': truncated buffer '" + b.name + "'");
    c.buffers_.push_back(std::move(b));
  }
  return c;
}

}  // namespace qdm
