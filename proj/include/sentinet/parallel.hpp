#pragma once

#include <cstddef>
#include <functional>

namespace sentinet {

// Worker cap from SENTINET_THREADS. 0 or unset means sequential.
std::size_t thread_cap();

// Splits [0, n) into contiguous chunks, one worker per chunk. Each index is
// processed by exactly one worker, so results are bit-identical to the
// sequential loop as long as chunks write disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace sentinet
