#include "crskit/module.h"

#include "crskit/error.h"

namespace crskit {

Json ModuleConfig::to_json() const {
  return Json{{"module_type", module_type}, {"version", version}, {"params", params}};
}

ModuleConfig ModuleConfig::from_json(const Json& j) {
  try {
    ModuleConfig c;
    c.module_type = j.at("module_type").get<std::string>();
    c.version = j.value("version", std::string("1"));
    c.params = j.value("params", Json::object());
    if (!c.params.is_object()) fail(ErrorCode::kInvalidConfig, "params must be an object");
    return c;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("module config: ") + e.what());
  }
}

std::string_view role_of(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kRecommender: return "rec";
    case ModuleKind::kGenerator: return "gen";
    case ModuleKind::kProcessor: return "proc";
  }
  return "module";
}

const std::string& ModuleOutput::text() const {
  if (!is_text()) fail(ErrorCode::kInvalidArgument, "module output holds recommendations");
  return std::get<std::string>(value_);
}

const RecList& ModuleOutput::recommendations() const {
  if (is_text()) fail(ErrorCode::kInvalidArgument, "module output holds text");
  return std::get<RecList>(value_);
}

TensorMap Module::forward(const TensorMap&, const TensorMap*) const {
  fail(ErrorCode::kInvalidArgument, name_ + " has no tensor-level forward");
}

std::map<std::string, std::string> Module::asset_files() const {
  if (const auto* tok = tokenizer()) return tok->to_files();
  return {};
}

std::optional<std::int64_t> kwarg_int(const Json& kwargs, const char* key) {
  if (!kwargs.is_object()) return std::nullopt;
  auto it = kwargs.find(key);
  if (it == kwargs.end()) return std::nullopt;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_number_float()) return static_cast<std::int64_t>(it->get<double>());
  fail(ErrorCode::kInvalidArgument, std::string("kwarg ") + key + " must be a number");
}

std::optional<double> kwarg_double(const Json& kwargs, const char* key) {
  if (!kwargs.is_object()) return std::nullopt;
  auto it = kwargs.find(key);
  if (it == kwargs.end()) return std::nullopt;
  if (it->is_number()) return it->get<double>();
  fail(ErrorCode::kInvalidArgument, std::string("kwarg ") + key + " must be a number");
}

std::optional<std::string> kwarg_string(const Json& kwargs, const char* key) {
  if (!kwargs.is_object()) return std::nullopt;
  auto it = kwargs.find(key);
  if (it == kwargs.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  fail(ErrorCode::kInvalidArgument, std::string("kwarg ") + key + " must be a string");
}

}  // namespace crskit
