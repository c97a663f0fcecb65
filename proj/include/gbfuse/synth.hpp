// Copyright 2026 The gbfuse Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Deterministic multimodal synthetic data with the label signal spread over
// the structured block, the narrative text and a rendered fundus-like image.
//
// Clinical rows: three quarters have a cup-to-disc ratio that settles the
// label on its own; the rest sit in an ambiguous band where only the
// booleans, the text, the image and the (noisy) human judgment help. The
// image always shows a cup whose radius depends on the label.

#pragma once

#include <cstdint>
#include <random>

#include "gbfuse/embedding.hpp"
#include "gbfuse/pipeline.hpp"

namespace gbfuse {

struct SynthOptions {
  std::size_t n = 2000;
  std::uint64_t seed = 42;
  SourceKind kind = SourceKind::Clinical;
  /// Biomarker data only: add a third "borderline" class.
  bool three_class = false;
  double missing_rate = 0.05;
  std::size_t image_size = 24;
  std::size_t text_dim = kDefaultTextDim;
  std::size_t image_dim = kDefaultImageDim;
  std::uint64_t encoder_seed = kDefaultEncoderSeed;
};

struct SynthDataset {
  Dataset data;
  EmbeddingTable text;   // by record id
  EmbeddingTable image;  // by image_ref
};

SynthDataset generate_synthetic(const SynthOptions& options = {});

/// Bright disc with a brighter central cup of radius `cup_radius`, plus
/// Gaussian pixel noise.
GrayImage render_fundus(std::size_t size, double cup_radius, std::mt19937_64& rng);

}  // namespace gbfuse
