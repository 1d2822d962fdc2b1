// Built-in benchmark scenarios, embedded in source so the CLI and the test
// suites share one transcription.
#pragma once

#include <optional>
#include <string_view>

#include "macfield/model.hpp"

namespace macfield {

// Homogeneous bistable cell: N = 1200 nodes, 13 backoff stages, per-slot
// probabilities p0 = 1/3200 and p_k = 1.2^(k-1)/160 for k in [1, 12].
Scenario example1();

// Two-class oscillatory cell without AIFS (delta = 0): 640 nodes per class,
// 21 stages each. Class H: p0 = 1/2400, p1 = 1/480, then p_k = 0.8^(k-1)/40
// for k in [2, 20] (the geometric tail starts at stage 2). Class L:
// p0 = 1/3840 and p_k = 1/64 above.
Scenario example2();

std::optional<Scenario> preset(std::string_view id);

}  // namespace macfield
