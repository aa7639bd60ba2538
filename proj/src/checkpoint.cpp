#include "ssev/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ssev::nn {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'E', 'V'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void checkpoint_save(const std::string& path, const std::string& module_name,
                     const nlohmann::json& arch, const ParamStore& store) {
  nlohmann::json header;
  header["module"] = module_name;
  header["arch"] = arch;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : store.entries)
    manifest.push_back({{"name", e.name}, {"shape", {e.value.rows, e.value.cols}}});
  header["params"] = manifest;
  const std::string header_str = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw NnError("checkpoint_save: cannot open " + path);
  os.write(kMagic, 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& e : store.entries) {
    // Little-endian host assumed; doubles are written verbatim.
    os.write(reinterpret_cast<const char*>(e.value.data.data()),
             static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
  }
  if (!os) throw NnError("checkpoint_save: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NnError("checkpoint_load: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw NnError("checkpoint_load: bad magic in " + path);
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw NnError("checkpoint_load: unsupported version in " + path);
  const std::uint32_t header_len = read_u32(is);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), header_len);
  if (!is) throw NnError("checkpoint_load: truncated header in " + path);

  nlohmann::json header = nlohmann::json::parse(header_str);
  Checkpoint ck;
  ck.module_name = header.at("module").get<std::string>();
  ck.arch = header.at("arch");
  for (const auto& item : header.at("params")) {
    const std::string name = item.at("name").get<std::string>();
    const int rows = item.at("shape")[0].get<int>();
    const int cols = item.at("shape")[1].get<int>();
    Tensor t(rows, cols);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw NnError("checkpoint_load: truncated blob for " + name);
    ck.store.add(name, std::move(t));
  }
  return ck;
}

}  // namespace ssev::nn
