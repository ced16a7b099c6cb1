#include "drvf/params_io.hpp"

#include <functional>
#include <map>
#include <numeric>

#include "drvf/binary_io.hpp"
#include "drvf/errors.hpp"

namespace drvf {
namespace {

constexpr std::string_view kMagic = "DRVFPRM1";

io::Writer make_writer(const ParamList& params, const nlohmann::json& meta) {
  nlohmann::json header;
  header["format"] = "drvf-params";
  header["version"] = 1;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& p : params) header["tensors"].push_back({{"name", p.name}, {"shape", p.shape}});
  io::Writer w(kMagic, header);
  for (const auto& p : params) w.put(p.values);
  return w;
}

ParamFile parse(io::Reader& r) {
  const auto& h = r.header();
  if (h.value("format", "") != "drvf-params" || !h.contains("tensors") ||
      !h["tensors"].is_array()) {
    throw FormatError("not a drvf-params header", 16);
  }
  ParamFile out;
  out.meta = h.value("meta", nlohmann::json::object());
  for (const auto& t : h["tensors"]) {
    StoredTensor st;
    try {
      st.name = t.at("name").get<std::string>();
      st.shape = t.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed tensor entry: ") + e.what(), 16);
    }
    const std::size_t n = std::accumulate(st.shape.begin(), st.shape.end(), std::size_t{1},
                                          std::multiplies<>());
    st.values = r.take(n);
    out.tensors.push_back(std::move(st));
  }
  r.finish();
  return out;
}

}  // namespace

void ParamFile::assign_to(const ParamList& dst) const {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (const auto& p : dst) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ShapeError("checkpoint is missing tensor " + p.name);
    if (it->second->shape != p.shape) throw ShapeError("checkpoint shape mismatch at " + p.name);
    std::copy(it->second->values.begin(), it->second->values.end(), p.values.begin());
  }
}

std::vector<std::uint8_t> encode_params(const ParamList& params, const nlohmann::json& meta) {
  return make_writer(params, meta).bytes();
}

void save_params(const std::filesystem::path& path, const ParamList& params,
                 const nlohmann::json& meta) {
  make_writer(params, meta).save(path);
}

ParamFile decode_params(std::vector<std::uint8_t> bytes) {
  io::Reader r(std::move(bytes), kMagic);
  return parse(r);
}

ParamFile load_params(const std::filesystem::path& path) {
  auto r = io::Reader::open(path, kMagic);
  return parse(r);
}

}  // namespace drvf
