#include "pimoe/json_util.hpp"

#include <algorithm>
#include <string_view>

namespace pimoe {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                const std::string& where) {
  require(j.is_object(), ErrorCode::ConfigError, where + " must be a JSON object");
  for (const auto& item : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&](const char* k) { return item.key() == std::string_view(k); });
    require(ok, ErrorCode::ConfigError, "unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace pimoe
