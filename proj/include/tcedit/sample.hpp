#pragma once

#include <cstddef>

#include "tcedit/tensor.hpp"

namespace tcedit {

struct SampleMeta {
    std::size_t scene = 0;
    std::size_t frame = 0;
};

// One (frame, track) candidate. Instances of the same group share the
// history and context handles.
struct Sample {
    Tensor<float> history;  // window × d_in, teacher-forced, zero rows before frame 0
    Tensor<float> context;  // J × d_in, every track at the end frame
    std::size_t track_index = 0;
    int label = 0;
    SampleMeta meta;
};

}  // namespace tcedit
