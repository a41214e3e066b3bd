#include "avsep/separator.hpp"

namespace avsep {

MaskHead parse_mask_head(const std::string& name) {
  if (name == "sigmoid") return MaskHead::Sigmoid;
  if (name == "softmax") return MaskHead::Softmax;
  throw ConfigError("unknown mask head '" + name + "' (expected sigmoid or softmax)");
}

std::string to_string(MaskHead head) { return head == MaskHead::Softmax ? "softmax" : "sigmoid"; }

}  // namespace avsep
