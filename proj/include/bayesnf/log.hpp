#pragma once

#include <string_view>

namespace bayesnf {

/// Writes "warning: <message>" to stderr unless warnings are silenced.
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);

}  // namespace bayesnf
