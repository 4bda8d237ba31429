// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace nerfin {

/// Keeps freed blocks in the heap instead of returning them to the OS; the
/// renderer allocates and frees the same large tensors every step.
void tune_allocator();

}  // namespace nerfin
