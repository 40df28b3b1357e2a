#pragma once

#include <json.hpp>

namespace csi {

// Insertion-ordered so every serialized record has a stable key order.
using Json = nlohmann::ordered_json;

}  // namespace csi
