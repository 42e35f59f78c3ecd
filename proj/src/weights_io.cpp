#include "gatenet/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gatenet {
namespace {

using nlohmann::json;

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

[[noreturn]] void corrupt(const std::string& why) {
  throw std::runtime_error("weight container: " + why);
}

void read_exact(std::istream& in, void* dst, size_t count, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count) {
    corrupt(std::string("truncated ") + what);
  }
}

std::uint16_t get_u16(std::istream& in, const char* what) {
  unsigned char b[2];
  read_exact(in, b, 2, what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, b, 8, what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

const WeightEntry* WeightContainer::find(const std::string& name) const {
  for (const WeightEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void save_weights(const WeightContainer& container, std::ostream& out) {
  out.write("GNWT", 4);
  put_u32(out, container.version);
  put_u32(out, static_cast<std::uint32_t>(container.entries.size()));
  for (const WeightEntry& e : container.entries) {
    if (e.name.size() > 0xffff) corrupt("entry name too long: " + e.name);
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    out.put(static_cast<char>(e.dtype));
    out.put(static_cast<char>(e.dims.size()));
    std::uint64_t count = 1;
    for (std::uint32_t d : e.dims) {
      put_u32(out, d);
      count *= d;
    }
    if (e.dtype == 1) {
      if (e.f64.size() != count) corrupt("entry '" + e.name + "' dims do not match payload");
      for (double v : e.f64) put_f64(out, v);
    } else if (e.dtype == 2) {
      if (e.raw.size() != count) corrupt("entry '" + e.name + "' dims do not match payload");
      out.write(reinterpret_cast<const char*>(e.raw.data()),
                static_cast<std::streamsize>(e.raw.size()));
    } else {
      corrupt("entry '" + e.name + "' has unknown dtype " + std::to_string(e.dtype));
    }
  }
  if (!out) corrupt("write failed");
}

void save_weights(const WeightContainer& container, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("weight container: cannot open '" + path + "' for writing");
  save_weights(container, out);
}

WeightContainer load_weights(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, "GNWT", 4) != 0) corrupt("bad magic (expected GNWT)");
  WeightContainer container;
  container.version = get_u32(in, "version");
  if (container.version != 1) {
    corrupt("unsupported format version " + std::to_string(container.version));
  }
  const std::uint32_t count = get_u32(in, "entry count");
  container.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    const std::uint16_t name_len = get_u16(in, "name length");
    e.name.resize(name_len);
    read_exact(in, e.name.data(), name_len, "name");
    unsigned char dtype_ndim[2];
    read_exact(in, dtype_ndim, 2, "entry header");
    e.dtype = dtype_ndim[0];
    const int ndim = dtype_ndim[1];
    std::uint64_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      e.dims.push_back(get_u32(in, "dims"));
      numel *= e.dims.back();
    }
    if (e.dtype == 1) {
      e.f64.reserve(numel);
      for (std::uint64_t j = 0; j < numel; ++j) e.f64.push_back(get_f64(in, "payload"));
    } else if (e.dtype == 2) {
      e.raw.resize(numel);
      read_exact(in, e.raw.data(), numel, "payload");
    } else {
      corrupt("entry '" + e.name + "' has unknown dtype " + std::to_string(e.dtype));
    }
    container.entries.push_back(std::move(e));
  }
  return container;
}

WeightContainer load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("weight container: cannot open '" + path + "' for reading");
  return load_weights(in);
}

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["stream"] = cfg.stream == StreamMode::two ? "two" : "single";
  j["encoder_channels"] = cfg.encoder_channels;
  j["transition_channels"] = cfg.transition_channels;
  switch (cfg.gate_version) {
    case GateVersion::none: j["gate_version"] = "none"; break;
    case GateVersion::v1: j["gate_version"] = "v1"; break;
    case GateVersion::v2: j["gate_version"] = "v2"; break;
  }
  j["parallel_branch"] = cfg.parallel_branch;
  if (cfg.aspp) {
    json a;
    a["conv_kind"] =
        cfg.aspp->conv_kind == AsppConvKind::folded_atrous ? "folded_atrous" : "plain_atrous";
    a["topology"] = cfg.aspp->topology == AsppTopology::dense ? "dense" : "parallel";
    a["rates"] = cfg.aspp->rates;
    a["include_pointwise_branch"] = cfg.aspp->include_pointwise_branch;
    a["include_image_pool_branch"] = cfg.aspp->include_image_pool_branch;
    a["out_channels"] = cfg.aspp->out_channels;
    j["aspp"] = a;
  } else {
    j["aspp"] = nullptr;
  }
  j["input_size"] = {cfg.input_h, cfg.input_w};
  return j.dump();
}

ModelConfig config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  ModelConfig cfg;
  cfg.stream = j.at("stream").get<std::string>() == "two" ? StreamMode::two : StreamMode::single;
  const auto ec = j.at("encoder_channels").get<std::vector<int>>();
  if (ec.size() != 5) throw std::runtime_error("config: encoder_channels must have 5 entries");
  std::copy(ec.begin(), ec.end(), cfg.encoder_channels.begin());
  cfg.transition_channels = j.at("transition_channels").get<int>();
  const std::string gv = j.at("gate_version").get<std::string>();
  if (gv == "none") cfg.gate_version = GateVersion::none;
  else if (gv == "v1") cfg.gate_version = GateVersion::v1;
  else if (gv == "v2") cfg.gate_version = GateVersion::v2;
  else throw std::runtime_error("config: unknown gate_version '" + gv + "'");
  cfg.parallel_branch = j.at("parallel_branch").get<bool>();
  if (!j.at("aspp").is_null()) {
    const json& a = j.at("aspp");
    AsppConfig aspp;
    aspp.conv_kind = a.at("conv_kind").get<std::string>() == "plain_atrous"
                         ? AsppConvKind::plain_atrous
                         : AsppConvKind::folded_atrous;
    aspp.topology =
        a.at("topology").get<std::string>() == "dense" ? AsppTopology::dense : AsppTopology::parallel;
    aspp.rates = a.at("rates").get<std::vector<int>>();
    aspp.include_pointwise_branch = a.at("include_pointwise_branch").get<bool>();
    aspp.include_image_pool_branch = a.at("include_image_pool_branch").get<bool>();
    aspp.out_channels = a.at("out_channels").get<int>();
    cfg.aspp = aspp;
  }
  const auto size = j.at("input_size").get<std::vector<int>>();
  if (size.size() != 2) throw std::runtime_error("config: input_size must have 2 entries");
  cfg.input_h = size[0];
  cfg.input_w = size[1];
  return cfg;
}

WeightContainer pack_model(const ModelConfig& cfg, const ModelParams& params) {
  WeightContainer container;
  {
    WeightEntry e;
    e.name = "config";
    e.dtype = 2;
    const std::string text = config_to_json(cfg);
    e.raw.assign(text.begin(), text.end());
    e.dims = {static_cast<std::uint32_t>(e.raw.size())};
    container.entries.push_back(std::move(e));
  }
  for (const auto& [name, tensor] : params.tensors) {
    WeightEntry e;
    e.name = name;
    e.dtype = 1;
    const Shape& s = tensor.shape();
    e.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    e.f64 = tensor.values();
    container.entries.push_back(std::move(e));
  }
  return container;
}

std::pair<ModelConfig, ModelParams> unpack_model(const WeightContainer& container) {
  const WeightEntry* config_entry = container.find("config");
  if (!config_entry || config_entry->dtype != 2) {
    throw std::runtime_error("weight container: missing 'config' entry");
  }
  const ModelConfig cfg =
      config_from_json(std::string(config_entry->raw.begin(), config_entry->raw.end()));
  ModelParams params;
  for (const WeightEntry& e : container.entries) {
    if (e.name == "config") continue;
    if (e.dtype != 1 || e.dims.size() != 4) {
      throw std::runtime_error("weight container: entry '" + e.name + "' is not a 4-d tensor");
    }
    const Shape s{static_cast<int>(e.dims[0]), static_cast<int>(e.dims[1]),
                  static_cast<int>(e.dims[2]), static_cast<int>(e.dims[3])};
    params.tensors.emplace(e.name, Tensor(s, e.f64));
  }
  validate_params(cfg, params);
  return {cfg, params};
}

}  // namespace gatenet
