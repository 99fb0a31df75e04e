#pragma once

#include <vector>

#include "mlab/system.hpp"

namespace mlab {

// named systems addressable from configs
SystemSpec make_preset(const std::string& name);
std::vector<std::string> preset_names();
// inline systems from configs; make_preset finds them by name before the built-in ones
void register_system(const SystemSpec& s);

}  // namespace mlab
