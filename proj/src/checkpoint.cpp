#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "cdppo/params.hpp"

namespace cdppo {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'P', 'P'};

template <typename T>
void put_le(std::ostream& os, T v) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  }
  os.write(buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw std::runtime_error("truncated checkpoint " + path.string());
  }
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
  }
  return static_cast<T>(u);
}

const std::string kMomentM = "#m";
const std::string kMomentV = "#v";
const std::string kStep = "#step";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& [name, t] : entries) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("parameter name too long: " + name);
    }
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path.string());
  }
  const auto version = get_le<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = get_le<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated checkpoint " + path.string());
    const auto rank = get_le<std::uint8_t>(is, path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(is, path);
    Tensor t(shape);
    for (double& v : t.data()) v = std::bit_cast<double>(get_le<std::uint64_t>(is, path));
    out.push_back({std::move(name), std::move(t)});
  }
  return out;
}

void append_store(std::vector<NamedTensor>& out, const std::string& section,
                  const ParamStore& store, bool with_optimizer_state) {
  for (const auto& [name, p] : store.entries()) {
    const std::string full = section + "/" + name;
    out.push_back({full, p.value});
    if (with_optimizer_state) {
      out.push_back({full + kMomentM, p.adam_m});
      out.push_back({full + kMomentV, p.adam_v});
      out.push_back({full + kStep, Tensor({}, {static_cast<double>(p.step_count)})});
    }
  }
}

ParamStore extract_store(const std::vector<NamedTensor>& entries,
                         const std::string& section) {
  const std::string prefix = section + "/";
  ParamStore store;
  for (const auto& [name, t] : entries) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (ends_with(name, kMomentM) || ends_with(name, kMomentV) || ends_with(name, kStep)) continue;
    store.add(name.substr(prefix.size()), t);
  }
  if (store.entries().empty()) {
    throw std::runtime_error("checkpoint has no section '" + section + "'");
  }
  for (const auto& [name, t] : entries) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto assign = [&](const std::string& suffix, auto&& fn) {
      if (!ends_with(name, suffix)) return false;
      const std::string base = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
      fn(store.at(base));
      return true;
    };
    assign(kMomentM, [&](Param& p) {
      if (!t.same_shape(p.value)) throw ShapeError("moment shape mismatch for " + name);
      p.adam_m = t;
    }) ||
        assign(kMomentV, [&](Param& p) {
          if (!t.same_shape(p.value)) throw ShapeError("moment shape mismatch for " + name);
          p.adam_v = t;
        }) ||
        assign(kStep, [&](Param& p) { p.step_count = static_cast<std::int64_t>(t[0]); });
  }
  return store;
}

}  // namespace cdppo
