#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drvf/params.hpp"

namespace drvf {

// Parameter checkpoint: "DRVFPRM1" container whose header lists
// {"format":"drvf-params","version":1,"meta":{...},
//  "tensors":[{"name":...,"shape":[...]},...]} in payload order.
struct StoredTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

struct ParamFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<StoredTensor> tensors;

  // Copies stored values into `dst`, matching tensors by name and shape.
  void assign_to(const ParamList& dst) const;
};

std::vector<std::uint8_t> encode_params(const ParamList& params, const nlohmann::json& meta);
void save_params(const std::filesystem::path& path, const ParamList& params,
                 const nlohmann::json& meta);
ParamFile decode_params(std::vector<std::uint8_t> bytes);
ParamFile load_params(const std::filesystem::path& path);

}  // namespace drvf
