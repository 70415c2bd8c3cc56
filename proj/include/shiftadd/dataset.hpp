#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shiftadd/tensor.hpp"

namespace shiftadd {

struct Dataset {
    Tensor images;  // (N, C, H, W)
    std::vector<std::size_t> labels;
    std::size_t classes = 0;
    std::string source_spec;

    std::size_t size() const { return labels.size(); }
};

}  // namespace shiftadd
