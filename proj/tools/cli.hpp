// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "shotnet/box.hpp"
#include "shotnet/synthetic_data.hpp"

namespace shotnet::cli {

/// Entry point of the `shotnet` binary. Returns the process exit code:
/// 0 success, 1 usage or verification failure, 2 config, 3 I/O,
/// 4 compatibility, 5 numerical.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Detection list as written by `predict` and read by `eval --detections`:
/// {"detections": [{"image_id", "box": [x0, y0, x1, y1] (pixels), "score"}]}
std::string detections_to_json(const std::vector<Detection>& detections, int height, int width,
                               const std::string& image_id = "");

/// Pixel boxes are normalized with the size of the sample they belong to.
/// Detections whose image id is not in `samples` are rejected.
std::vector<Detection> detections_from_json(const std::string& text,
                                            const std::vector<ShotGatherSample>& samples,
                                            const std::string& source);

/// Samples evaluated by `eval`: DIR/test when it exists, otherwise DIR.
std::vector<ShotGatherSample> evaluation_samples(const std::filesystem::path& dir);

}  // namespace shotnet::cli
